"""Restricted pair domains, their diagonals, and the scaling reach index.

A domain is a set D of input pairs on which the defect bound is assumed,
together with a scaling factor c used by the extrapolation engines.  The two
axioms a valid (D, c) must satisfy:

  (i)  (x, y) in D implies (c^-n x, c^-m y) in D for all m, n >= 0;
  (ii) every pair of nonzero vectors can be scaled into D by some (m, n).

Built-in kinds enforce a compatible c at construction; custom kinds are
validated statistically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .kernel import ModuleVector, vec_norm

BUILTIN_KINDS = ("full", "ball_product", "exterior_product", "exterior_union")

DEFAULT_REACH_CAP = 1_000_000


class DomainError(ValueError):
    """Invalid domain specification (incompatible scaling, bad parameters)."""


class DomainUnreachableError(RuntimeError):
    """The diagonal was not reached within the iteration cap."""


@dataclass(frozen=True, eq=False)
class DomainSpec:
    kind: str
    scale_c: float
    radius: float | None = None
    threshold: float | None = None
    member: Callable[[ModuleVector, ModuleVector], bool] | None = None
    label: str = ""

    def __post_init__(self) -> None:
        c = self.scale_c
        if not (c > 0.0 and c != 1.0 and np.isfinite(c)):
            raise DomainError(f"scaling factor must be positive and != 1, got {c}")
        if self.kind == "full":
            pass
        elif self.kind == "ball_product":
            if self.radius is None or self.radius <= 0:
                raise DomainError("ball_product requires a positive radius")
            if c <= 1.0:
                raise DomainError("ball_product requires c > 1 (scaling down stays inside)")
        elif self.kind == "exterior_product":
            if self.radius is None or self.radius <= 0:
                raise DomainError("exterior_product requires a positive radius")
            if c >= 1.0:
                raise DomainError("exterior_product requires c < 1 (scaling up stays outside)")
        elif self.kind == "exterior_union":
            if self.threshold is None or self.threshold <= 0:
                raise DomainError("exterior_union requires a positive threshold")
            if c >= 1.0:
                raise DomainError("exterior_union requires c < 1")
        elif self.kind == "custom":
            if self.member is None:
                raise DomainError("custom domains need a membership predicate")
        else:
            raise DomainError(f"unknown domain kind {self.kind!r}")


def full(c: float) -> DomainSpec:
    """All pairs; any c != 1."""
    return DomainSpec(kind="full", scale_c=c)


def ball_product(radius: float, c: float) -> DomainSpec:
    """Pairs with both norms <= radius; requires c > 1."""
    return DomainSpec(kind="ball_product", scale_c=c, radius=radius)


def exterior_product(radius: float, c: float) -> DomainSpec:
    """Pairs with both norms >= radius; requires c < 1."""
    return DomainSpec(kind="exterior_product", scale_c=c, radius=radius)


def exterior_union(threshold: float, c: float) -> DomainSpec:
    """Pairs where at least one norm reaches the threshold; requires c < 1."""
    return DomainSpec(kind="exterior_union", scale_c=c, threshold=threshold)


def custom(
    member: Callable[[ModuleVector, ModuleVector], bool],
    c: float,
    label: str = "",
) -> DomainSpec:
    """A membership predicate on pairs; validated by sampling only."""
    return DomainSpec(kind="custom", scale_c=c, member=member, label=label)


def contains(D: DomainSpec, x: ModuleVector, y: ModuleVector) -> bool:
    if D.kind == "full":
        return True
    if D.kind == "ball_product":
        return vec_norm(x) <= D.radius and vec_norm(y) <= D.radius
    if D.kind == "exterior_product":
        return vec_norm(x) >= D.radius and vec_norm(y) >= D.radius
    if D.kind == "exterior_union":
        return max(vec_norm(x), vec_norm(y)) >= D.threshold
    return bool(D.member(x, y))


def in_delta(D: DomainSpec, x: ModuleVector) -> bool:
    """Diagonal membership: (x, x) in D."""
    return contains(D, x, x)


def delta_norm_interval(D: DomainSpec) -> Optional[tuple[float, float]]:
    """Norm interval describing the diagonal of a built-in kind, else None."""
    if D.kind == "full":
        return (0.0, np.inf)
    if D.kind == "ball_product":
        return (0.0, float(D.radius))
    if D.kind == "exterior_product":
        return (float(D.radius), np.inf)
    if D.kind == "exterior_union":
        return (float(D.threshold), np.inf)
    return None


def reach_index(D: DomainSpec, x: ModuleVector, n_max: int = DEFAULT_REACH_CAP) -> int:
    """Least n >= 0 with c^-n x on the diagonal.

    The zero vector has no reach index (callers map it to zero directly).
    A cap overrun signals an invalid custom spec.
    """
    if vec_norm(x) == 0.0:
        raise ValueError("reach index is undefined for the zero vector")
    c = D.scale_c
    for n in range(n_max + 1):
        factor = c ** (-n)
        if not np.isfinite(factor):
            break
        if in_delta(D, factor * x):
            return n
    raise DomainUnreachableError(
        f"diagonal not reached within {n_max} scalings (c={c}); "
        "the domain spec likely violates axiom (ii)"
    )


@dataclass
class ValidationReport:
    """Outcome of a domain axiom check."""

    passed: bool
    method: str  # "analytic" or "sampled"
    checked: int = 0
    delta_found: bool = True
    axiom_i_violations: list = field(default_factory=list)
    axiom_ii_failures: list = field(default_factory=list)

    @property
    def summary(self) -> str:
        if self.passed:
            return f"pass ({self.method}, {self.checked} probes)"
        parts = []
        if not self.delta_found:
            parts.append("empty diagonal")
        if self.axiom_i_violations:
            parts.append(f"{len(self.axiom_i_violations)} axiom (i) violations")
        if self.axiom_ii_failures:
            parts.append(f"{len(self.axiom_ii_failures)} axiom (ii) failures")
        return "fail: " + ", ".join(parts)


def validate_axioms(
    D: DomainSpec,
    sample_budget: int = 200,
    seed: int = 0,
    dims: tuple[int, int] = (1, 2),
    power_cap: int = 20,
    search_cap: int = 60,
) -> ValidationReport:
    """Check the domain axioms.

    Built-in kinds pass analytically (the factory already enforced the
    compatible scaling).  Custom kinds are probed with seeded sample pairs:
    axiom (i) on scalings up to power_cap, axiom (ii) by grid search up to
    search_cap, and nonemptiness of the diagonal.
    """
    if sample_budget < 1:
        raise ValueError("sample_budget must be >= 1")
    if D.kind in BUILTIN_KINDS:
        return ValidationReport(passed=True, method="analytic")

    from . import sampling  # local import to avoid a cycle

    d, k = dims
    rng = np.random.default_rng(seed)
    c = D.scale_c
    axiom_i: list = []
    axiom_ii: list = []
    delta_found = False
    checked = 0

    candidates = sampling.stratified_vectors(rng, d, k, max(2 * sample_budget, 8), 1e-3, 1e3)
    pairs_in_d = []
    for i in range(0, len(candidates) - 1, 2):
        x, y = candidates[i], candidates[i + 1]
        if contains(D, x, y):
            pairs_in_d.append((x, y))
        if in_delta(D, x):
            delta_found = True

    for (x, y) in pairs_in_d[:sample_budget]:
        for _ in range(4):
            n = int(rng.integers(0, power_cap + 1))
            m = int(rng.integers(0, power_cap + 1))
            checked += 1
            if not contains(D, (c ** -n) * x, (c ** -m) * y):
                axiom_i.append((vec_norm(x), vec_norm(y), n, m))
                break

    for i in range(0, min(len(candidates) - 1, 2 * sample_budget) - 1, 2):
        x, y = candidates[i], candidates[i + 1]
        checked += 1
        if not _reachable_pair(D, x, y, search_cap):
            axiom_ii.append((vec_norm(x), vec_norm(y)))

    passed = delta_found and not axiom_i and not axiom_ii
    return ValidationReport(
        passed=passed,
        method="sampled",
        checked=checked,
        delta_found=delta_found,
        axiom_i_violations=axiom_i,
        axiom_ii_failures=axiom_ii,
    )


def _reachable_pair(D: DomainSpec, x: ModuleVector, y: ModuleVector, cap: int) -> bool:
    c = D.scale_c
    for s in range(cap + 1):
        for n in range(s + 1):
            m = s - n
            fn = c ** (-n)
            fm = c ** (-m)
            if not (np.isfinite(fn) and np.isfinite(fm)):
                continue
            if contains(D, fn * x, fm * y):
                return True
    return False
