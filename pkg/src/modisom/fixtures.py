"""Deterministic approximate-map generators with known exact isometries.

Every fixture stores its ground truth: the coefficient array of the exact
isometry, a residual formula, and (when declared) the control/domain pair it
is admissible for.  Closed-form profiles are envelope-checked at construction
on a norm grid; an envelope exceeding the control anywhere raises
FixtureError.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import certificates as cert
from . import controls, domains, sampling
from .certificates import Certificate
from .corrector import ApproxMap
from .kernel import ModuleVector, inner, op_norm, vec_norm

ANCHOR_ADMISSIBLE = "||<f(x),f(y)> - <x,y>|| <= phi(x,y) on domain pairs"

DEFAULT_AUDIT_TOL = 1e-11


class FixtureError(ValueError):
    """The requested fixture cannot satisfy its declared defect bound."""


@dataclass
class GroundTruth:
    """Stored exact isometry and residual for a generated fixture."""

    coeffs: np.ndarray  # (k_in, k_out, d, d) coefficient array of the isometry
    isometry: Callable[[ModuleVector], ModuleVector]
    residual: Callable[[ModuleVector], ModuleVector]
    control: controls.ControlSpec | None = None
    domain: domains.DomainSpec | None = None
    k_map: Callable[[float], float] | None = None
    notes: str = ""


@dataclass(frozen=True, eq=False)
class FixtureSpec:
    kind: str  # exact_isometry | tail_shift | perturbed_isometry | homogeneous | asymptotic_decay
    dim_d: int
    rank_in: int
    rank_out: int
    params: dict = field(default_factory=dict)
    control: controls.ControlSpec | None = None
    domain: domains.DomainSpec | None = None

    def __post_init__(self) -> None:
        if self.dim_d < 1 or self.rank_in < 1 or self.rank_out < 1:
            raise FixtureError("dimensions must be positive")
        if self.rank_out < self.rank_in:
            raise FixtureError("codomain rank must be at least the domain rank")


def _unitary(rng: np.random.Generator, d: int) -> np.ndarray:
    q, r = np.linalg.qr(sampling.complex_gaussian(rng, (d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def _isometry_data(rng: np.random.Generator, d: int, k_in: int, k_out: int):
    """Row-orthonormal scalar matrix U and per-slot unitaries W.

    The map x -> ( (sum_j U[j,i] x_j) W_i )_i preserves the pairing exactly:
    sum_i C[j,i] C[l,i]* = delta_jl since the W_i cancel and U U^H = 1.
    """
    m = sampling.complex_gaussian(rng, (k_out, k_in))
    q, _ = np.linalg.qr(m)  # (k_out, k_in), orthonormal columns
    u = q.T  # rows orthonormal
    w = np.stack([_unitary(rng, d) for _ in range(k_out)])
    coeffs = np.einsum("ji,iab->jiab", u, w)
    return u, w, coeffs


def _isometry_eval(u: np.ndarray, w: np.ndarray) -> Callable[[ModuleVector], ModuleVector]:
    def apply(x: ModuleVector) -> ModuleVector:
        mixed = np.einsum("ji,jab->iab", u, x.coords)
        return ModuleVector(np.einsum("iab,ibc->iac", mixed, w))

    return apply


def _shift_coeffs(d: int, k_in: int) -> np.ndarray:
    coeffs = np.zeros((k_in, k_in + 1, d, d), dtype=np.complex128)
    eye = np.eye(d, dtype=np.complex128)
    for j in range(k_in):
        coeffs[j, j + 1] = eye
    return coeffs


def _phase(gamma: float) -> Callable[[ModuleVector], float]:
    def theta(x: ModuleVector) -> float:
        return float(np.angle(np.trace(x.coords[0]))) + gamma

    return theta


def _certify_ground_truth(
    iso: Callable[[ModuleVector], ModuleVector],
    d: int,
    k: int,
    seed: int,
    tol: float = 1e-12,
) -> None:
    rng = np.random.default_rng(seed ^ 0x5EED)
    for _ in range(8):
        x = sampling.vector_with_norm(rng, d, k, float(rng.uniform(0.5, 2.0)))
        y = sampling.vector_with_norm(rng, d, k, float(rng.uniform(0.5, 2.0)))
        gap = op_norm(inner(iso(x), iso(y)) - inner(x, y))
        if gap > tol * 10.0:
            raise FixtureError(f"stored isometry fails its own certification: {gap:.3e}")


def _pair_in_domain_by_norms(D: domains.DomainSpec | None, nx: float, ny: float) -> bool:
    if D is None or D.kind == "full":
        return True
    if D.kind == "ball_product":
        return nx <= D.radius and ny <= D.radius
    if D.kind == "exterior_product":
        return nx >= D.radius and ny >= D.radius
    if D.kind == "exterior_union":
        return max(nx, ny) >= D.threshold
    return False  # custom domains are audited by sampling instead


def _validate_envelope(
    env: Callable[[float], float],
    specs: Sequence[controls.ControlSpec],
    D: domains.DomainSpec | None,
) -> None:
    """Grid check: env(|x|) env(|y|) <= phi(|x|, |y|) on declared domain pairs.

    The defect of an orthogonal-residual fixture is exactly the envelope
    product, so a grid over norms decides admissibility for norm-only
    profiles.
    """
    grid = np.logspace(-2, 2, 41)
    extra = []
    if D is not None and D.kind in ("ball_product", "exterior_product"):
        extra = [D.radius * 0.999, D.radius, D.radius * 1.001]
    if D is not None and D.kind == "exterior_union":
        extra = [D.threshold * 0.999, D.threshold, D.threshold * 1.001]
    norms = np.concatenate([grid, np.array(extra)]) if extra else grid
    for spec in specs:
        if spec.kind == "custom":
            continue
        for nx in norms:
            for ny in norms:
                if not _pair_in_domain_by_norms(D, nx, ny):
                    continue
                lhs = env(float(nx)) * env(float(ny))
                rhs = controls.phi_from_norms(spec, float(nx), float(ny))
                if lhs > rhs + 1e-12 * (1.0 + rhs):
                    raise FixtureError(
                        f"residual envelope exceeds the {spec.kind} control at "
                        f"norms ({nx:.3g}, {ny:.3g}): {lhs:.3e} > {rhs:.3e}"
                    )


def _tail_shift_envelope(spec: FixtureSpec) -> tuple[Callable[[float], float], str]:
    params = spec.params
    profile = params.get("profile", "power_phase")
    if profile == "power_phase":
        alpha, p, q = params["alpha"], params["p"], params["q"]
        if alpha <= 0 or p < 0 or q < 0:
            raise FixtureError("power_phase needs alpha > 0 and nonnegative exponents")
        expo = (p + q) / 2.0

        def env(nx: float) -> float:
            return float(np.sqrt(alpha)) * nx ** expo if nx > 0 else (np.sqrt(alpha) if expo == 0 else 0.0)

        return env, f"|g(x)| = sqrt({alpha}) |x|^{expo} (sharp diagonal)"
    if profile == "power_sum":
        beta, p = params["beta"], params["p"]

        def env(nx: float) -> float:
            return float(np.sqrt(beta)) * nx ** (p / 2.0) if nx > 0 else (np.sqrt(beta) if p == 0 else 0.0)

        return env, f"|g(x)| = sqrt({beta}) |x|^{p / 2.0}"
    if profile == "bounded":
        alpha, p, bound = params["alpha"], params["p"], params["bound"]

        def env(nx: float) -> float:
            sharp = float(np.sqrt(alpha)) * nx ** p if nx > 0 else 0.0
            return min(float(bound), sharp)

        return env, f"|g(x)| = min({bound}, sqrt({alpha}) |x|^{p})"
    if profile == "discontinuous":
        alpha, p = params["alpha"], params["p"]
        step = params.get("grid_step", 0.25)

        def env(nx: float) -> float:
            if nx <= 0:
                return 0.0
            on = int(np.floor(nx / step)) % 2 == 0
            return float(np.sqrt(alpha)) * nx ** p if on else 0.0

        return env, f"|g(x)| alternates between sqrt({alpha}) |x|^{p} and 0 on norm cells of width {step}"
    if profile == "dual":
        alpha, pp = params["alpha"], params["p_prod"]
        beta, ps = params["beta"], params["p_sum"]

        def env(nx: float) -> float:
            if nx <= 0:
                return 0.0
            return min(
                float(np.sqrt(alpha)) * nx ** pp,
                float(np.sqrt(beta)) * nx ** (ps / 2.0),
            )

        return env, "|g(x)| below both the product and the sum envelope"
    raise FixtureError(f"unknown tail_shift profile {profile!r}")


def generate(
    spec: FixtureSpec,
    seed: int = 0,
    extra_controls: Sequence[controls.ControlSpec] = (),
) -> tuple[ApproxMap, GroundTruth]:
    """Build the evaluator and its ground truth; validate admissibility."""
    rng = np.random.default_rng(seed)
    d, k_in, k_out = spec.dim_d, spec.rank_in, spec.rank_out
    declared = [s for s in ((spec.control,) + tuple(extra_controls)) if s is not None]

    if spec.kind == "exact_isometry":
        u, w, coeffs = _isometry_data(rng, d, k_in, k_out)
        iso = _isometry_eval(u, w)
        _certify_ground_truth(iso, d, k_in, seed)
        zero = ModuleVector(np.zeros((k_out, d, d), dtype=np.complex128))
        truth = GroundTruth(
            coeffs=coeffs,
            isometry=iso,
            residual=lambda x: zero,
            control=spec.control,
            domain=spec.domain,
            notes="exact isometry; residual is identically zero",
        )
        f = ApproxMap(d, k_in, k_out, iso, control=spec.control, domain=spec.domain,
                      name=f"exact_isometry[d={d},k={k_in}->{k_out}]")
        return f, truth

    if spec.kind == "tail_shift":
        if k_out != k_in + 1:
            raise FixtureError("tail_shift requires rank_out = rank_in + 1")
        env, note = _tail_shift_envelope(spec)
        _validate_envelope(env, declared, spec.domain)
        theta = _phase(float(rng.uniform(0.0, 2.0 * np.pi)))
        eye = np.eye(d, dtype=np.complex128)

        def g(x: ModuleVector) -> complex:
            return env(vec_norm(x)) * np.exp(1j * theta(x))

        def evaluator(x: ModuleVector) -> ModuleVector:
            out = np.empty((k_in + 1, d, d), dtype=np.complex128)
            out[0] = g(x) * eye
            out[1:] = x.coords
            return ModuleVector(out)

        def iso(x: ModuleVector) -> ModuleVector:
            out = np.zeros((k_in + 1, d, d), dtype=np.complex128)
            out[1:] = x.coords
            return ModuleVector(out)

        def residual(x: ModuleVector) -> ModuleVector:
            out = np.zeros((k_in + 1, d, d), dtype=np.complex128)
            out[0] = g(x) * eye
            return ModuleVector(out)

        _certify_ground_truth(iso, d, k_in, seed)
        truth = GroundTruth(
            coeffs=_shift_coeffs(d, k_in),
            isometry=iso,
            residual=residual,
            control=spec.control,
            domain=spec.domain,
            notes=f"index shift plus scalar head; {note}",
        )
        f = ApproxMap(d, k_in, k_out, evaluator, control=spec.control,
                      domain=spec.domain, name=f"tail_shift[{spec.params.get('profile', 'power_phase')}]")
        return f, truth

    if spec.kind == "perturbed_isometry":
        return _perturbed_isometry(spec, rng, seed, declared)

    if spec.kind == "homogeneous":
        return _homogeneous(spec, rng, seed)

    if spec.kind == "asymptotic_decay":
        return _asymptotic_decay(spec, rng, seed)

    raise FixtureError(f"unknown fixture kind {spec.kind!r}")


def _perturbed_isometry(
    spec: FixtureSpec,
    rng: np.random.Generator,
    seed: int,
    declared: Sequence[controls.ControlSpec],
):
    d, k_in, k_out = spec.dim_d, spec.rank_in, spec.rank_out
    if spec.control is None:
        raise FixtureError("perturbed_isometry needs a declared control")
    amplitude = float(spec.params.get("amplitude", 1.0))
    if not 0.0 < amplitude <= 1.0:
        raise FixtureError("amplitude must lie in (0, 1]")
    safety = 0.9 * amplitude
    phi_spec = spec.control
    D = spec.domain if spec.domain is not None else domains.full(phi_spec.c)

    u, w, coeffs = _isometry_data(rng, d, k_in, k_out)
    iso = _isometry_eval(u, w)
    _certify_ground_truth(iso, d, k_in, seed)
    theta = _phase(float(rng.uniform(0.0, 2.0 * np.pi)))
    eye = np.eye(d, dtype=np.complex128)

    def envelope(x: ModuleVector) -> float:
        return safety * float(np.sqrt(controls.phi(phi_spec, x, x)))

    if k_out > k_in:
        # residual in the orthogonal complement of the recovered range
        _, _, vh = np.linalg.svd(u)
        u_perp = vh.conj().T[:, k_in]  # u @ conj(u_perp) == 0

        def residual(x: ModuleVector) -> ModuleVector:
            s = envelope(x) * np.exp(1j * theta(x))
            out = np.einsum("i,iab->iab", np.conj(u_perp) * s, w)
            return ModuleVector(out)

        note = "residual points into the range complement with a 0.9 safety factor"
        if phi_spec.kind != "custom":

            def env(nx: float) -> float:
                return safety * float(np.sqrt(controls.phi_from_norms(phi_spec, nx, nx)))

            _validate_envelope(env, [s for s in declared if s.kind != "custom"], D)
    else:
        # equal ranks: admissible maps agree with the isometry on the diagonal,
        # so the residual must vanish there; keep it supported off the diagonal.
        if D.kind not in ("full", "ball_product", "exterior_product"):
            raise FixtureError(
                "square perturbed fixtures need a product-type or full domain"
            )
        v0 = sampling.unit_direction(np.random.default_rng(seed ^ 0xD1CE), d, k_out)

        def residual(x: ModuleVector) -> ModuleVector:
            if domains.in_delta(D, x):
                return ModuleVector(np.zeros((k_out, d, d), dtype=np.complex128))
            s = envelope(x) * np.exp(1j * theta(x))
            return s * v0

        note = (
            "equal ranks force exactness on the diagonal; the residual lives "
            "strictly off the diagonal"
        )

    def evaluator(x: ModuleVector) -> ModuleVector:
        return iso(x) + residual(x)

    truth = GroundTruth(
        coeffs=coeffs,
        isometry=iso,
        residual=residual,
        control=phi_spec,
        domain=D,
        notes=note,
    )
    f = ApproxMap(d, k_in, k_out, evaluator, control=phi_spec, domain=D,
                  name=f"perturbed_isometry[d={d},k={k_in}->{k_out}]")
    return f, truth


def _homogeneous(spec: FixtureSpec, rng: np.random.Generator, seed: int):
    d, k_in, k_out = spec.dim_d, spec.rank_in, spec.rank_out
    c = float(spec.params.get("c", 2.0))
    strength = float(spec.params.get("strength", 0.1))
    u, w, coeffs = _isometry_data(rng, d, k_in, k_out)
    iso = _isometry_eval(u, w)
    _certify_ground_truth(iso, d, k_in, seed)
    theta = _phase(float(rng.uniform(0.0, 2.0 * np.pi)))
    v0 = sampling.unit_direction(rng, d, k_out)

    def bump(x: ModuleVector) -> ModuleVector:
        nx = vec_norm(x)
        if nx == 0.0:
            return ModuleVector(np.zeros((k_out, d, d), dtype=np.complex128))
        direction = (1.0 / nx) * x
        s = strength * nx * np.exp(1j * theta(direction))
        return s * v0

    def evaluator(x: ModuleVector) -> ModuleVector:
        return iso(x) + bump(x)

    truth = GroundTruth(
        coeffs=coeffs,
        isometry=iso,
        residual=bump,
        notes=f"degree-1 positively homogeneous bump of size {strength}; "
        f"f(t x) = t f(x) for every t > 0, in particular t = {c}",
    )
    f = ApproxMap(d, k_in, k_out, evaluator, name=f"homogeneous[c={c}]")
    return f, truth


def _asymptotic_decay(spec: FixtureSpec, rng: np.random.Generator, seed: int):
    d, k_in, k_out = spec.dim_d, spec.rank_in, spec.rank_out
    if k_out != k_in + 1:
        raise FixtureError("asymptotic_decay requires rank_out = rank_in + 1")
    p = float(spec.params["p"])
    base_radius = float(spec.params.get("base_radius", 1.0))
    decay_exp = float(spec.params.get("decay_exp", 1.0))
    mode = spec.params.get("mode", "vanish_at_infinity")
    if decay_exp <= 0 or base_radius <= 0:
        raise FixtureError("decay parameters must be positive")

    if mode == "vanish_at_infinity":

        def decay(r: float) -> float:
            return min(1.0, (base_radius / r) ** decay_exp) if r > 0 else 1.0

        def k_map(eps: float) -> float:
            return base_radius * eps ** (-1.0 / decay_exp)

    elif mode == "vanish_at_zero":

        def decay(r: float) -> float:
            return min(1.0, (r / base_radius) ** decay_exp) if r > 0 else 0.0

        def k_map(eps: float) -> float:
            return base_radius * eps ** (1.0 / decay_exp)

    else:
        raise FixtureError(f"unknown decay mode {mode!r}")

    theta = _phase(float(rng.uniform(0.0, 2.0 * np.pi)))
    eye = np.eye(d, dtype=np.complex128)

    def g(x: ModuleVector) -> complex:
        nx = vec_norm(x)
        if nx == 0.0:
            return 0.0
        return (nx ** p) * decay(nx) * np.exp(1j * theta(x))

    def evaluator(x: ModuleVector) -> ModuleVector:
        out = np.empty((k_in + 1, d, d), dtype=np.complex128)
        out[0] = g(x) * eye
        out[1:] = x.coords
        return ModuleVector(out)

    def iso(x: ModuleVector) -> ModuleVector:
        out = np.zeros((k_in + 1, d, d), dtype=np.complex128)
        out[1:] = x.coords
        return ModuleVector(out)

    def residual(x: ModuleVector) -> ModuleVector:
        out = np.zeros((k_in + 1, d, d), dtype=np.complex128)
        out[0] = g(x) * eye
        return ModuleVector(out)

    _certify_ground_truth(iso, d, k_in, seed)
    truth = GroundTruth(
        coeffs=_shift_coeffs(d, k_in),
        isometry=iso,
        residual=residual,
        k_map=k_map,
        notes=f"|g(x)| = |x|^{p} * decay(|x|) with decay(r) = min(1, "
        f"(K0/r)^s) style profile, mode={mode}, K0={base_radius}, s={decay_exp}",
    )
    f = ApproxMap(d, k_in, k_out, evaluator, name=f"asymptotic_decay[p={p},{mode}]")
    return f, truth


@dataclass
class AuditReport:
    max_excess: float
    tol: float
    certificates: list[Certificate]
    worst_pair: tuple[float, float] | None = None

    @property
    def passed(self) -> bool:
        return all(c.status != cert.FAIL for c in self.certificates)


def admissibility_audit(
    f: ApproxMap,
    phi_spec: controls.ControlSpec,
    D: domains.DomainSpec,
    budget: int = 256,
    seed: int = 0,
    tol: float = DEFAULT_AUDIT_TOL,
    norm_lo: float = 1e-2,
    norm_hi: float = 1e1,
) -> AuditReport:
    """Sampled check of the defect bound on domain pairs.

    Reports max ||<f(x),f(y)> - <x,y>|| - phi(x,y); pass iff it stays at or
    below tol.  The default norm window keeps absolute float error well under
    the tolerance.
    """
    rng = np.random.default_rng(seed)
    pairs = sampling.domain_pairs(rng, D, f.dim_d, f.rank_in, budget, norm_lo, norm_hi)
    worst = -np.inf
    worst_pair = None
    for (x, y) in pairs:
        defect = op_norm(inner(f(x), f(y)) - inner(x, y))
        excess = defect - controls.phi(phi_spec, x, y)
        if excess > worst:
            worst = excess
            worst_pair = (vec_norm(x), vec_norm(y))
    rows = [cert.judged("admissibility", ANCHOR_ADMISSIBLE, worst, 0.0, slack=tol)]
    return AuditReport(max_excess=worst, tol=tol, certificates=rows, worst_pair=worst_pair)
