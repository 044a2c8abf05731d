"""Matrix algebra and free-module arithmetic shared by every engine.

The scalar algebra is the full d x d complex matrix algebra; module elements
are k-tuples of matrices with the algebra-valued pairing
``inner(x, y) = sum_i x_i (y_i)*``.  Setting d=1 recovers the ordinary
complex Hilbert space C^k; setting k=1 recovers the algebra paired with
itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

Scalar = Union[int, float, complex]

# Default numeric tolerances; callers may override per operation.
DEFAULT_TOL_NUM = 1e-11
DEFAULT_TOL_SQRT = 1e-9
PSD_TOL_SCALE = 1e-10

# Largest matrix dimension handled by dense SVD; beyond it the operator norm
# falls back to power iteration on a*a.
SVD_MAX_DIM = 64
POWER_MAX_STEPS = 500
POWER_REL_TOL = 1e-13


class PositivityError(ValueError):
    """A matrix expected to be Hermitian positive semidefinite is not."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=np.complex128)
    if not np.all(np.isfinite(out)):
        raise ValueError("entries must be finite (no NaN/Inf)")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """One d x d complex matrix, immutable after construction."""

    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {arr.shape}")
        object.__setattr__(self, "entries", _freeze(arr))

    @property
    def dim_d(self) -> int:
        return self.entries.shape[0]

    @property
    def adjoint(self) -> "AlgebraElement":
        return AlgebraElement(self.entries.conj().T)

    @classmethod
    def identity(cls, d: int) -> "AlgebraElement":
        return cls(np.eye(d, dtype=np.complex128))

    @classmethod
    def zero(cls, d: int) -> "AlgebraElement":
        return cls(np.zeros((d, d), dtype=np.complex128))

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.entries + other.entries)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.entries - other.entries)

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(-self.entries)

    def __matmul__(self, other: "AlgebraElement") -> "AlgebraElement":
        return AlgebraElement(self.entries @ other.entries)

    def __mul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return AlgebraElement(complex(other) * self.entries)
        if isinstance(other, ModuleVector):
            # left module action: (a x)_i = a x_i
            return ModuleVector(np.einsum("ab,kbc->kac", self.entries, other.coords))
        return NotImplemented

    def __rmul__(self, other):
        if isinstance(other, (int, float, complex, np.number)):
            return AlgebraElement(complex(other) * self.entries)
        return NotImplemented


@dataclass(frozen=True, eq=False)
class ModuleVector:
    """A k-tuple of algebra elements, stored as a (k, d, d) array."""

    coords: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.coords)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError(f"expected coords of shape (k, d, d), got {arr.shape}")
        object.__setattr__(self, "coords", _freeze(arr))

    @property
    def dim_d(self) -> int:
        return self.coords.shape[1]

    @property
    def rank_k(self) -> int:
        return self.coords.shape[0]

    def coord(self, i: int) -> AlgebraElement:
        return AlgebraElement(self.coords[i])

    def __add__(self, other: "ModuleVector") -> "ModuleVector":
        _check_same_space(self, other)
        return ModuleVector(self.coords + other.coords)

    def __sub__(self, other: "ModuleVector") -> "ModuleVector":
        _check_same_space(self, other)
        return ModuleVector(self.coords - other.coords)

    def __neg__(self) -> "ModuleVector":
        return ModuleVector(-self.coords)

    def __mul__(self, scalar):
        if isinstance(scalar, (int, float, complex, np.number)):
            return ModuleVector(complex(scalar) * self.coords)
        return NotImplemented

    __rmul__ = __mul__


def zero_vector(d: int, k: int) -> ModuleVector:
    return ModuleVector(np.zeros((k, d, d), dtype=np.complex128))


def generator(d: int, k: int, slot: int) -> ModuleVector:
    """The module generator with the algebra unit in one slot, zero elsewhere."""
    coords = np.zeros((k, d, d), dtype=np.complex128)
    coords[slot] = np.eye(d)
    return ModuleVector(coords)


def _check_same_space(x: ModuleVector, y: ModuleVector) -> None:
    if x.coords.shape != y.coords.shape:
        raise ValueError(
            f"module dimension mismatch: {x.coords.shape} vs {y.coords.shape}"
        )


def inner(x: ModuleVector, y: ModuleVector) -> AlgebraElement:
    """Algebra-valued pairing sum_i x_i (y_i)*.

    Linear in the first slot, conjugate-linear in the second, and
    ``inner(x, y).adjoint == inner(y, x)``.
    """
    _check_same_space(x, y)
    gram = np.einsum("kab,kcb->ac", x.coords, y.coords.conj())
    return AlgebraElement(gram)


def _op_norm_array(m: np.ndarray) -> float:
    n = m.shape[0]
    if n <= SVD_MAX_DIM:
        return float(np.linalg.svd(m, compute_uv=False)[0])
    return _power_norm(m)


def _power_norm(m: np.ndarray) -> float:
    # power iteration on a*a; deterministic start so results are reproducible
    h = m.conj().T @ m
    n = h.shape[0]
    v = np.ones(n, dtype=np.complex128) + np.linspace(0.0, 0.5, n)
    v /= np.linalg.norm(v)
    prev = 0.0
    cur = 0.0
    for _ in range(POWER_MAX_STEPS):
        w = h @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0
        v = w / nw
        cur = nw
        if abs(cur - prev) <= POWER_REL_TOL * max(cur, 1e-300):
            break
        prev = cur
    return float(np.sqrt(cur))


def op_norm(a: AlgebraElement) -> float:
    """Operator norm (largest singular value) of an algebra element."""
    return _op_norm_array(a.entries)


def re_part(a: AlgebraElement) -> AlgebraElement:
    """Hermitian part (a + a*) / 2."""
    return AlgebraElement((a.entries + a.entries.conj().T) / 2.0)


def pos_sqrt(a: AlgebraElement, *, tol_psd: float | None = None) -> AlgebraElement:
    """Square root of a Hermitian PSD element via eigendecomposition.

    Eigenvalues in [-tol_psd, 0) are clamped to zero; anything below -tol_psd,
    or a non-Hermitian input, raises PositivityError.  The default tolerance
    scales with the input: ``PSD_TOL_SCALE * (1 + op_norm(a))``.
    """
    arr = a.entries
    scale = op_norm(a)
    if tol_psd is None:
        tol_psd = PSD_TOL_SCALE * (1.0 + scale)
    herm_defect = float(np.abs(arr - arr.conj().T).max()) if arr.size else 0.0
    if herm_defect > tol_psd:
        raise PositivityError(
            f"matrix is not Hermitian (defect {herm_defect:.3e} > {tol_psd:.3e})"
        )
    herm = (arr + arr.conj().T) / 2.0
    w, v = np.linalg.eigh(herm)
    if w.size and float(w.min()) < -tol_psd:
        raise PositivityError(
            f"matrix has eigenvalue {w.min():.3e} below -{tol_psd:.3e}"
        )
    w = np.clip(w, 0.0, None)
    root = (v * np.sqrt(w)) @ v.conj().T
    return AlgebraElement(root)


def vec_norm(x: ModuleVector) -> float:
    """Module norm ``op_norm(inner(x, x)) ** 0.5``."""
    return float(np.sqrt(op_norm(inner(x, x))))


def module_abs(x: ModuleVector) -> AlgebraElement:
    """Algebra-valued absolute value, the positive square root of inner(x, x).

    Satisfies ``op_norm(module_abs(x)) == vec_norm(x)`` but is not subadditive:
    ``module_abs(x + y) - module_abs(x) - module_abs(y)`` can fail to be
    negative semidefinite for d >= 2.
    """
    return pos_sqrt(inner(x, x))
