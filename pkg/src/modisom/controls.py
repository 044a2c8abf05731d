"""Control functions bounding the inner-product defect, and derived bounds.

Built-in kinds:

  power_product:  phi(x, y) = alpha * |x|^p * |y|^q
  power_sum:      phi(x, y) = beta * (|x|^p + |y|^p)

with the conventions 0^0 = 1 and 0^t = 0 for t > 0.  Negative exponents are
rejected at construction so that evaluation at the zero vector is always
defined.  Each spec carries its own scaling factor c; engines require it to
match the scaling of the domain they run on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .kernel import ModuleVector, vec_norm


class ControlError(ValueError):
    """Invalid control specification or evaluation."""


class UnsupportedExponentError(ControlError):
    """The requested exponent sits on the unresolved boundary (degree 2)."""


class DivergenceError(RuntimeError):
    """A weighted defect series showed no decay within the term budget."""


HOLDS = "holds"
FAILS = "fails"
UNKNOWN = "unknown"

CONTRACTIVE = "contractive"
EXPANSIVE = "expansive"

_CUSTOM_GRID = 60
_CUSTOM_REL_TOL = 1e-8
_FAIL_MARGIN = 10.0
_SERIES_TERM_CAP = 10_000


@dataclass(frozen=True, eq=False)
class ControlSpec:
    kind: str  # "power_product" | "power_sum" | "custom"
    c: float
    alpha: float = 0.0
    p: float = 0.0
    q: float = 0.0
    beta: float = 0.0
    evaluator: Callable[[ModuleVector, ModuleVector], float] | None = None

    def __post_init__(self) -> None:
        if not (self.c > 0.0 and self.c != 1.0 and np.isfinite(self.c)):
            raise ControlError(f"scaling factor must be positive and != 1, got {self.c}")
        if self.kind == "power_product":
            if self.alpha <= 0:
                raise ControlError("power_product requires alpha > 0")
            if self.p < 0 or self.q < 0:
                raise ControlError("negative exponents are not supported")
        elif self.kind == "power_sum":
            if self.beta <= 0:
                raise ControlError("power_sum requires beta > 0")
            if self.p < 0:
                raise ControlError("negative exponents are not supported")
        elif self.kind == "custom":
            if self.evaluator is None:
                raise ControlError("custom controls need an evaluator")
        else:
            raise ControlError(f"unknown control kind {self.kind!r}")


def power_product(alpha: float, p: float, q: float, c: float) -> ControlSpec:
    return ControlSpec(kind="power_product", c=c, alpha=alpha, p=p, q=q)


def power_sum(beta: float, p: float, c: float) -> ControlSpec:
    return ControlSpec(kind="power_sum", c=c, beta=beta, p=p)


def custom_control(
    evaluator: Callable[[ModuleVector, ModuleVector], float], c: float
) -> ControlSpec:
    return ControlSpec(kind="custom", c=c, evaluator=evaluator)


def _pow(base: float, expo: float) -> float:
    # 0^0 = 1, 0^t = 0 for t > 0
    if base == 0.0:
        return 1.0 if expo == 0.0 else 0.0
    return float(base ** expo)


def phi_from_norms(spec: ControlSpec, nx: float, ny: float) -> float:
    """Evaluate a built-in control from norms alone."""
    if spec.kind == "power_product":
        return spec.alpha * _pow(nx, spec.p) * _pow(ny, spec.q)
    if spec.kind == "power_sum":
        return spec.beta * (_pow(nx, spec.p) + _pow(ny, spec.p))
    raise ControlError("custom controls require module vectors, not norms")


def phi(spec: ControlSpec, x: ModuleVector, y: ModuleVector) -> float:
    """Evaluate the control at a pair of module vectors."""
    if x.coords.shape != y.coords.shape:
        raise ValueError("control arguments live in different spaces")
    if spec.kind == "custom":
        val = float(spec.evaluator(x, y))
        if not np.isfinite(val) or val < 0.0:
            raise ControlError(f"custom control returned inadmissible value {val!r}")
        return val
    return phi_from_norms(spec, vec_norm(x), vec_norm(y))


def scaling_degree(spec: ControlSpec) -> float:
    """Homogeneity degree g with phi(t x, t y) = t^g phi(x, y) for built-ins."""
    if spec.kind == "power_product":
        return spec.p + spec.q
    if spec.kind == "power_sum":
        return spec.p
    raise ControlError("custom controls have no declared scaling degree")


@dataclass(frozen=True)
class VanishingVerdict:
    status: str  # HOLDS / FAILS / UNKNOWN
    caveat: bool = False
    detail: str = ""


def _factor_behavior(c: float, expo: float) -> str:
    """Behavior of c^(m * expo) as m grows: vanishes, constant, or diverges."""
    if expo == 0.0:
        return "constant"
    if (c > 1.0) == (expo < 0.0):
        return "vanishes"
    return "diverges"


def vanishing_verdict(
    spec: ControlSpec,
    D=None,
    probes: Sequence[tuple[ModuleVector, ModuleVector]] | None = None,
) -> VanishingVerdict:
    """Decide whether c^(m+n) phi(c^-m x, c^-n y) -> 0 as m + n grows.

    Built-in kinds are decided analytically.  The exponent-1 edge cases
    (exactly one of p, q equal to 1 for a product control) hold by a separate
    argument and are flagged with a caveat; p = q = 1 fails outright.  Custom
    controls are probed numerically on an (m, n) grid and may come back
    unknown.
    """
    if D is not None and D.scale_c != spec.c:
        raise ControlError(
            f"control scaling c={spec.c} does not match domain scaling c={D.scale_c}"
        )
    c = spec.c

    if spec.kind == "power_product":
        if spec.p == 1.0 and spec.q == 1.0:
            return VanishingVerdict(FAILS, detail="exponents p = q = 1 admit counterexamples")
        bp = _factor_behavior(c, 1.0 - spec.p)
        bq = _factor_behavior(c, 1.0 - spec.q)
        if bp == "vanishes" and bq == "vanishes":
            return VanishingVerdict(HOLDS)
        if {bp, bq} == {"vanishes", "constant"}:
            return VanishingVerdict(
                HOLDS,
                caveat=True,
                detail="exponent-1 edge case; holds by the one-sided argument",
            )
        return VanishingVerdict(
            FAILS, detail=f"weighted factors do not vanish (p behaves {bp}, q behaves {bq})"
        )

    if spec.kind == "power_sum":
        # beta * (c^(m(1-p)+n) |x|^p + c^(m+n(1-p)) |y|^p): both exponents must
        # drive c^E to zero along every path, which needs c < 1 and p < 1.
        if c < 1.0 and spec.p < 1.0:
            return VanishingVerdict(HOLDS)
        return VanishingVerdict(
            FAILS, detail="sum controls vanish only for c < 1 with exponent p < 1"
        )

    return _custom_verdict(spec, probes)


def _custom_verdict(
    spec: ControlSpec, probes: Sequence[tuple[ModuleVector, ModuleVector]] | None
) -> VanishingVerdict:
    if not probes:
        return VanishingVerdict(UNKNOWN, detail="no probe pairs supplied")
    c = spec.c
    votes = []
    for (x, y) in probes:
        diag_max = np.zeros(_CUSTOM_GRID + 1)
        for s in range(_CUSTOM_GRID + 1):
            weight = c ** s
            if not np.isfinite(weight):
                diag_max[s] = np.inf
                continue
            vals = []
            for m in range(s + 1):
                n = s - m
                fm, fn = c ** (-m), c ** (-n)
                if not (np.isfinite(fm) and np.isfinite(fn)):
                    vals.append(np.inf)
                    continue
                vals.append(weight * phi(spec, fm * x, fn * y))
            diag_max[s] = max(vals)
        scale = max(diag_max[0], 1e-30)
        hold_tol = _CUSTOM_REL_TOL * scale
        tail = diag_max[_CUSTOM_GRID - 10 :]
        if np.all(tail < hold_tol):
            votes.append(HOLDS)
        elif np.min(diag_max[_CUSTOM_GRID * 2 // 3 :]) > _FAIL_MARGIN * hold_tol:
            votes.append(FAILS)
        else:
            votes.append(UNKNOWN)
    if FAILS in votes:
        return VanishingVerdict(FAILS, detail="sampled weighted defect stays bounded away from 0")
    if all(v == HOLDS for v in votes):
        return VanishingVerdict(HOLDS, detail="sampled weighted defect decays on all probes")
    return VanishingVerdict(UNKNOWN, detail="sampled decay inconclusive")


@dataclass(frozen=True, eq=False)
class HurControl:
    """A base control plus the doubling branch its derived series converges on."""

    base: ControlSpec
    branch: str  # CONTRACTIVE (weights 2^-n-1) or EXPANSIVE (weights 2^n-1)

    def __post_init__(self) -> None:
        if self.branch not in (CONTRACTIVE, EXPANSIVE):
            raise ControlError(f"unknown branch {self.branch!r}")


def hur_control(base: ControlSpec, branch: str | None = None) -> HurControl:
    """Select the convergent branch for the derived additive-defect bound.

    Built-in controls pick the branch from the scaling degree g: contractive
    for g < 2, expansive for g > 2; g = 2 is rejected as unsolved.  Custom
    controls must name a branch explicitly.
    """
    if base.kind == "custom":
        if branch is None:
            raise ControlError("custom controls need an explicit branch")
        return HurControl(base=base, branch=branch)
    g = scaling_degree(base)
    auto = CONTRACTIVE if g < 2.0 else EXPANSIVE if g > 2.0 else None
    if auto is None:
        raise UnsupportedExponentError(
            "scaling degree 2 (e.g. a sum control with p = 2) is unsupported: "
            "neither weighted series converges"
        )
    if branch is not None and branch != auto:
        raise ControlError(
            f"branch {branch!r} diverges for scaling degree {g}; expected {auto!r}"
        )
    return HurControl(base=base, branch=auto)


_PSI_PAIRS = (
    ("s", "s"),
    ("x", "s"),
    ("y", "s"),
    ("s", "x"),
    ("x", "x"),
    ("y", "x"),
    ("s", "y"),
    ("x", "y"),
    ("y", "y"),
)


def psi(h: HurControl, x: ModuleVector, y: ModuleVector) -> float:
    """Derived control: square root of the nine-term sum of base evaluations
    over x, y and s = x + y."""
    s = x + y
    if h.base.kind == "custom":
        args = {"x": x, "y": y, "s": s}
        total = sum(phi(h.base, args[u], args[v]) for (u, v) in _PSI_PAIRS)
    else:
        norms = {"x": vec_norm(x), "y": vec_norm(y), "s": vec_norm(s)}
        total = sum(phi_from_norms(h.base, norms[u], norms[v]) for (u, v) in _PSI_PAIRS)
    return float(np.sqrt(total))


def psi_diag_from_norm(h: HurControl, nx: float) -> float:
    """psi(x, x) from the norm of x, for built-in base controls."""
    norms = {"x": nx, "y": nx, "s": 2.0 * nx}
    total = sum(phi_from_norms(h.base, norms[u], norms[v]) for (u, v) in _PSI_PAIRS)
    return float(np.sqrt(total))


def power_sum_distance_constant(beta: float, p: float) -> float:
    """Closed-form coefficient sqrt(6 beta (2^p + 2)) / |2^(p/2) - 2| of the
    distance bound for a sum control."""
    if p == 2.0:
        raise UnsupportedExponentError("exponent p = 2 is unsupported")
    return math.sqrt(6.0 * beta * (2.0 ** p + 2.0)) / abs(2.0 ** (p / 2.0) - 2.0)


def _series_ratio(h: HurControl) -> float:
    """Geometric ratio of consecutive series terms for built-in bases."""
    g = scaling_degree(h.base)
    if h.branch == CONTRACTIVE:
        return 2.0 ** (g / 2.0 - 1.0)
    return 2.0 ** (1.0 - g / 2.0)


def psi_tilde(
    h: HurControl, x: ModuleVector, tol: float = 1e-12
) -> tuple[float, float]:
    """Weighted series bound on the distance to the limit isometry.

    Contractive branch sums 2^(-n-1) psi(2^n x, 2^n x) over n >= 0; the
    expansive branch sums 2^(n-1) psi(2^-n x, 2^-n x) over n >= 1.  Built-in
    bases use the exact geometric closed form (truncation bound 0); custom
    bases accumulate partial sums until an observed-ratio geometric majorant
    puts the tail below tol, returning that tail bound.
    """
    if h.base.kind != "custom":
        g = scaling_degree(h.base)
        if g == 2.0:
            raise UnsupportedExponentError("scaling degree 2 is unsupported")
        r = _series_ratio(h)
        head = psi_diag_from_norm(h, vec_norm(x))
        if h.branch == CONTRACTIVE:
            # sum_{n>=0} 2^-n-1 r^n-free form: head * (1/2) / (1 - r)
            value = head * 0.5 / (1.0 - r)
        else:
            value = head * 0.5 * r / (1.0 - r)
        return (float(value), 0.0)
    return _custom_psi_tilde(h, x, tol)


def _term(h: HurControl, x: ModuleVector, n: int) -> float:
    if h.branch == CONTRACTIVE:
        xs = (2.0 ** n) * x
        return (2.0 ** (-n - 1)) * psi(h, xs, xs)
    xs = (2.0 ** -n) * x
    return (2.0 ** (n - 1)) * psi(h, xs, xs)


def _custom_psi_tilde(h: HurControl, x: ModuleVector, tol: float) -> tuple[float, float]:
    start = 0 if h.branch == CONTRACTIVE else 1
    total = 0.0
    prev = None
    window: list[float] = []
    zero_run = 0
    n = start
    while n - start < _SERIES_TERM_CAP:
        t = _term(h, x, n)
        if not np.isfinite(t):
            raise DivergenceError(f"series term at n={n} is not finite")
        total += t
        zero_run = zero_run + 1 if t == 0.0 else 0
        if zero_run >= 8:
            return (total, 0.0)
        if prev is not None and prev > 0.0 and t > 0.0:
            window.append(t / prev)
            if len(window) > 8:
                window.pop(0)
        if t > 0.0 and len(window) == 8:
            ratio = 1.1 * max(window)  # safety factor on the observed ratio
            if ratio < 1.0:
                tail = t * ratio / (1.0 - ratio)
                if tail < tol:
                    return (total, float(tail))
        prev = t
        n += 1
    raise DivergenceError(
        f"no geometric decay detected within {_SERIES_TERM_CAP} terms ({h.branch} branch)"
    )


def chain_tail(h: HurControl, nx: float, n_done: int) -> float:
    """Remaining series mass after the first chain steps, for built-in bases.

    Contractive: sum_{k>=n} 2^-k-1 psi(2^k x, 2^k x);
    expansive:   sum_{k>=n+1} 2^k-1 psi(2^-k x, 2^-k x).
    """
    g = scaling_degree(h.base)
    if g == 2.0:
        raise UnsupportedExponentError("scaling degree 2 is unsupported")
    r = _series_ratio(h)
    head = psi_diag_from_norm(h, nx)
    if h.branch == CONTRACTIVE:
        return float(head * 0.5 * (r ** n_done) / (1.0 - r))
    return float(head * 0.5 * (r ** (n_done + 1)) / (1.0 - r))
