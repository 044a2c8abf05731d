"""Full-domain stability through the additive defect.

For a map with defect bound phi on all pairs, the derived control psi bounds
||f(x+y) - f(x) - f(y)||, the weighted doubling chains are Cauchy, and the
limit along the convergent branch is an exact isometry I with
||f(x) - I(x)|| <= psi_tilde(x).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import certificates as cert
from . import controls, sampling
from .certificates import Certificate
from .controls import CONTRACTIVE, EXPANSIVE, HurControl
from .corrector import ApproxMap, NonConvergenceError, extend
from .kernel import AlgebraElement, ModuleVector, inner, op_norm, vec_norm, zero_vector

ANCHOR_DEFECT = "||f(x+y)-f(x)-f(y)|| <= psi(x,y)"
ANCHOR_CHAIN = "doubling-chain gaps <= weighted psi partial sums"
ANCHOR_FINAL = "||f(x)-I(x)|| <= psi_tilde(x)"
ANCHOR_ISOMETRY = "<I(x),I(y)> = <x,y>"
ANCHOR_CROSS_ENGINE = "restricted-domain and additive-defect recoveries coincide"

DEFAULT_TOL = 1e-8
DEFAULT_EXTRAP_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class DefectMeasurement:
    defect: float
    bound: float
    passed: bool
    probe: int


@dataclass
class HurResult:
    branch: str
    isometry_eval: Callable[[ModuleVector], ModuleVector]
    defects: list[DefectMeasurement]
    distances: list[tuple[float, float]]  # (measured ||f - I||, psi_tilde bound)
    chain_traces: list[list[tuple[int, int, float, float]]]
    certificates: list[Certificate]
    a_linearity_residual: float | None = None

    @property
    def passed(self) -> bool:
        return all(c.status != cert.FAIL for c in self.certificates)

    def aggregated(self) -> list[Certificate]:
        return cert.aggregate(self.certificates)


def additive_defect(
    f: ApproxMap,
    h: HurControl,
    pairs: Sequence[tuple[ModuleVector, ModuleVector]],
    tol: float = 1e-10,
) -> list[DefectMeasurement]:
    """Measure ||f(x+y) - f(x) - f(y)|| against psi(x, y) per pair."""
    out = []
    for i, (x, y) in enumerate(pairs):
        defect = vec_norm(f(x + y) - f(x) - f(y))
        bound = controls.psi(h, x, y)
        out.append(DefectMeasurement(defect, bound, defect <= bound + tol, i))
    return out


def _sequence_point(f: ApproxMap, branch: str, x: ModuleVector, n: int) -> ModuleVector:
    if branch == CONTRACTIVE:
        return (2.0 ** -n) * f((2.0 ** n) * x)
    return (2.0 ** n) * f((2.0 ** -n) * x)


def hur_correct(
    f: ApproxMap,
    h: HurControl,
    x: ModuleVector,
    tol: float = DEFAULT_EXTRAP_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> ModuleVector:
    """Limit isometry value at x along the convergent doubling branch.

    Built-in base controls stop once the remaining chain mass (the exact
    geometric tail of the weighted psi series) is below tol; custom bases fall
    back to a consecutive-gap rule.
    """
    nx = vec_norm(x)
    if nx == 0.0:
        return zero_vector(f.dim_d, f.rank_out)
    if h.base.kind != "custom":
        n = 0
        while controls.chain_tail(h, nx, n) >= tol:
            n += 1
            if n > max_iter:
                raise NonConvergenceError(
                    f"chain tail still above tolerance after {max_iter} steps",
                    iterations=n,
                )
        return _sequence_point(f, h.branch, x, n)
    prev = _sequence_point(f, h.branch, x, 0)
    consecutive = 0
    gap = np.inf
    for n in range(1, max_iter + 1):
        cur = _sequence_point(f, h.branch, x, n)
        gap = vec_norm(cur - prev)
        consecutive = consecutive + 1 if gap < tol else 0
        prev = cur
        if consecutive >= 3:
            return cur
    raise NonConvergenceError(
        f"gap {gap:.3e} after {max_iter} chain steps", last_gap=gap, iterations=max_iter
    )


def chain_partial_sum(h: HurControl, x: ModuleVector, m: int, n: int) -> float:
    """Weighted psi partial sum bounding the chain gap between steps m < n.

    Contractive: sum_{k=m}^{n-1} 2^-k-1 psi(2^k x, 2^k x);
    expansive:   sum_{k=m+1}^{n} 2^k-1 psi(2^-k x, 2^-k x).
    """
    if not 0 <= m < n:
        raise ValueError("need 0 <= m < n")
    total = 0.0
    if h.branch == CONTRACTIVE:
        for k in range(m, n):
            xs = (2.0 ** k) * x
            total += (2.0 ** (-k - 1)) * controls.psi(h, xs, xs)
    else:
        for k in range(m + 1, n + 1):
            xs = (2.0 ** -k) * x
            total += (2.0 ** (k - 1)) * controls.psi(h, xs, xs)
    return total


def chain_trace(
    f: ApproxMap, h: HurControl, x: ModuleVector, depth: int = 20
) -> list[tuple[int, int, float, float]]:
    """Measured chain gaps against their partial-sum bounds for all m < n <= depth."""
    seq = [_sequence_point(f, h.branch, x, n) for n in range(depth + 1)]
    rows = []
    for m in range(depth):
        for n in range(m + 1, depth + 1):
            gap = vec_norm(seq[n] - seq[m])
            rows.append((m, n, gap, chain_partial_sum(h, x, m, n)))
    return rows


def analyze(
    f: ApproxMap,
    h: HurControl,
    pairs: Sequence[tuple[ModuleVector, ModuleVector]] | None = None,
    probes: Sequence[ModuleVector] | None = None,
    tol: float = DEFAULT_TOL,
    *,
    defect_tol: float = 1e-10,
    extrap_tol: float = DEFAULT_EXTRAP_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    chain_depth: int = 20,
    chain_probes: int = 4,
    seed: int = 0,
    pair_budget: int = 256,
    probe_budget: int = 64,
    measure_linearity: bool = True,
) -> HurResult:
    """Full certificate battery: defect bound, chain majorization, limit
    isometry, and the distance bound with its closed-form coefficient.

    The module-linearity residual of the limit is measured and reported but
    not judged; the full-domain theory asserts linearity only through the
    pairing identity.
    """
    rng = np.random.default_rng(seed)
    if pairs is None:
        xs = sampling.stratified_vectors(rng, f.dim_d, f.rank_in, pair_budget, 1e-2, 1e1)
        ys = sampling.stratified_vectors(rng, f.dim_d, f.rank_in, pair_budget, 1e-2, 1e1)
        pairs = list(zip(xs, ys))
    pairs = list(pairs)
    if probes is None:
        probes = sampling.stratified_vectors(rng, f.dim_d, f.rank_in, probe_budget, 1e-2, 1e1)
    probes = list(probes)

    rows: list[Certificate] = []

    defects = additive_defect(f, h, pairs, tol=defect_tol)
    for m in defects:
        rows.append(
            cert.judged(
                "additive-defect", ANCHOR_DEFECT, m.defect, m.bound,
                slack=defect_tol, probe=m.probe,
            )
        )

    traces = []
    for i, z in enumerate(probes[:chain_probes]):
        trace = chain_trace(f, h, z, depth=chain_depth)
        traces.append(trace)
        worst_excess = max(gap - bound for (_, _, gap, bound) in trace)
        rows.append(
            cert.judged(
                "chain-majorization", ANCHOR_CHAIN,
                worst_excess, 0.0, slack=defect_tol, probe=i,
            )
        )

    scale = max((vec_norm(z) for z in probes), default=1.0)
    tol_inner = extrap_tol / (1.0 + scale)

    cache: dict[bytes, ModuleVector] = {}

    def isometry_eval(z: ModuleVector) -> ModuleVector:
        key = z.coords.tobytes()
        if key not in cache:
            cache[key] = hur_correct(f, h, z, tol_inner, max_iter)
        return cache[key]

    distances = []
    for i, z in enumerate(probes):
        iz = isometry_eval(z)
        measured = vec_norm(f(z) - iz)
        bound, _ = controls.psi_tilde(h, z)
        distances.append((measured, bound))
        rows.append(
            cert.judged("distance-series-bound", ANCHOR_FINAL, measured, bound,
                        slack=tol, probe=i)
        )

    for i in range(0, len(probes) - 1, 2):
        x, y = probes[i], probes[i + 1]
        measured = op_norm(inner(isometry_eval(x), isometry_eval(y)) - inner(x, y))
        rows.append(cert.judged("isometry", ANCHOR_ISOMETRY, measured, tol, probe=i))

    residual = None
    if measure_linearity:
        residual = 0.0
        for _ in range(16):
            a = AlgebraElement(sampling.complex_gaussian(rng, (f.dim_d, f.dim_d)))
            lam = complex(*rng.standard_normal(2))
            x = sampling.vector_with_norm(rng, f.dim_d, f.rank_in, float(rng.uniform(0.5, 2.0)))
            y = sampling.vector_with_norm(rng, f.dim_d, f.rank_in, float(rng.uniform(0.5, 2.0)))
            z = sampling.vector_with_norm(rng, f.dim_d, f.rank_in, float(rng.uniform(0.5, 2.0)))
            combo = a * x + lam * y + z
            gap = vec_norm(
                isometry_eval(combo)
                - (a * isometry_eval(x) + lam * isometry_eval(y) + isometry_eval(z))
            )
            residual = max(residual, gap)

    return HurResult(
        branch=h.branch,
        isometry_eval=isometry_eval,
        defects=defects,
        distances=distances,
        chain_traces=traces,
        certificates=rows,
        a_linearity_residual=residual,
    )


@dataclass
class CrossValidationReport:
    max_gap: float
    tol: float
    certificates: list[Certificate]

    @property
    def passed(self) -> bool:
        return all(c.status != cert.FAIL for c in self.certificates)


def cross_validate(
    f: ApproxMap,
    phi_product: controls.ControlSpec,
    h: HurControl,
    probes: Sequence[ModuleVector] | None = None,
    tol: float = DEFAULT_TOL,
    *,
    D=None,
    extrap_tol: float = DEFAULT_EXTRAP_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    seed: int = 0,
    probe_budget: int = 64,
) -> CrossValidationReport:
    """When one fixture is admissible for both engines, their recovered
    isometries must coincide by each uniqueness argument."""
    from . import domains as _domains

    if D is None:
        D = _domains.full(phi_product.c)
    if probes is None:
        rng = np.random.default_rng(seed)
        probes = sampling.stratified_vectors(rng, f.dim_d, f.rank_in, probe_budget, 1e-2, 1e1)
    probes = list(probes)
    scale = max((vec_norm(z) for z in probes), default=1.0)
    tol_inner = extrap_tol / (1.0 + scale)
    worst = 0.0
    for z in probes:
        v1 = extend(f, phi_product, D, z, tol_inner, max_iter)
        v2 = hur_correct(f, h, z, tol_inner, max_iter)
        worst = max(worst, vec_norm(v1 - v2))
    rows = [cert.judged("cross-engine-agreement", ANCHOR_CROSS_ENGINE, worst, tol)]
    return CrossValidationReport(max_gap=worst, tol=tol, certificates=rows)
