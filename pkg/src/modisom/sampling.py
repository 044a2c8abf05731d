"""Seeded probe generation: stratified norms, directions, and domain-aware pairs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from . import domains
from .kernel import ModuleVector, vec_norm

DEFAULT_NORM_LO = 1e-2
DEFAULT_NORM_HI = 1e2


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def unit_direction(rng: np.random.Generator, d: int, k: int) -> ModuleVector:
    coords = complex_gaussian(rng, (k, d, d))
    v = ModuleVector(coords)
    n = vec_norm(v)
    while n < 1e-8:  # essentially impossible, but keep the norm well-defined
        v = ModuleVector(complex_gaussian(rng, (k, d, d)))
        n = vec_norm(v)
    return (1.0 / n) * v


def vector_with_norm(rng: np.random.Generator, d: int, k: int, norm: float) -> ModuleVector:
    return norm * unit_direction(rng, d, k)


def stratified_norms(
    rng: np.random.Generator, count: int, lo: float, hi: float
) -> np.ndarray:
    """One log-uniform draw per equal log-width bin across [lo, hi]."""
    if not (0.0 < lo <= hi):
        raise ValueError(f"invalid norm range [{lo}, {hi}]")
    if lo == hi:
        return np.full(count, lo)
    edges = np.logspace(np.log10(lo), np.log10(hi), count + 1)
    u = rng.random(count)
    return edges[:-1] * (edges[1:] / edges[:-1]) ** u


def stratified_vectors(
    rng: np.random.Generator,
    d: int,
    k: int,
    count: int,
    lo: float = DEFAULT_NORM_LO,
    hi: float = DEFAULT_NORM_HI,
) -> list[ModuleVector]:
    norms = stratified_norms(rng, count, lo, hi)
    return [vector_with_norm(rng, d, k, float(n)) for n in norms]


def _clip_interval(
    interval: tuple[float, float], lo: float, hi: float
) -> tuple[float, float]:
    """Intersect a diagonal norm interval with [lo, hi]; widen around the
    boundary when the intersection is empty."""
    a, b = interval
    a2, b2 = max(a, lo), min(b, hi)
    if a2 > b2:  # requested range misses the diagonal entirely
        if np.isinf(b):
            return (a if a > 0 else lo, 10.0 * (a if a > 0 else lo))
        return (max(b / 10.0, 1e-12), b)
    if a2 <= 0.0:
        a2 = min(lo, b2 / 10.0) if b2 < np.inf else lo
    if np.isinf(b2):
        b2 = max(hi, 10.0 * a2)
    return (a2, b2)


def delta_vectors(
    rng: np.random.Generator,
    D: domains.DomainSpec,
    d: int,
    k: int,
    count: int,
    lo: float = DEFAULT_NORM_LO,
    hi: float = DEFAULT_NORM_HI,
) -> list[ModuleVector]:
    """Seeded vectors on the diagonal of D, stratified across norm decades."""
    interval = domains.delta_norm_interval(D)
    if interval is not None:
        a, b = _clip_interval(interval, lo, hi)
        return stratified_vectors(rng, d, k, count, a, b)
    out: list[ModuleVector] = []
    attempts = 0
    cap = 200 * count
    while len(out) < count and attempts < cap:
        v = vector_with_norm(rng, d, k, float(stratified_norms(rng, 1, lo, hi)[0]))
        attempts += 1
        if domains.in_delta(D, v):
            out.append(v)
    if len(out) < count:
        raise domains.DomainError(
            "could not sample the diagonal of a custom domain "
            f"({len(out)}/{count} hits in {attempts} attempts)"
        )
    return out


def domain_pairs(
    rng: np.random.Generator,
    D: domains.DomainSpec,
    d: int,
    k: int,
    count: int,
    lo: float = DEFAULT_NORM_LO,
    hi: float = DEFAULT_NORM_HI,
) -> list[tuple[ModuleVector, ModuleVector]]:
    """Seeded pairs inside D.  Union kinds mix one-sided and two-sided pairs."""
    if D.kind == "exterior_union":
        third = max(count // 3, 1)
        big = delta_vectors(rng, D, d, k, 2 * third)
        anyv = stratified_vectors(rng, d, k, 2 * third, lo, hi)
        pairs = [(big[i], anyv[i]) for i in range(third)]
        pairs += [(anyv[third + i], big[third + i]) for i in range(third)]
        while len(pairs) < count:
            a = delta_vectors(rng, D, d, k, 2)
            pairs.append((a[0], a[1]))
        return pairs[:count]
    if D.kind in ("ball_product", "exterior_product", "full"):
        xs = delta_vectors(rng, D, d, k, count, lo, hi)
        ys = delta_vectors(rng, D, d, k, count, lo, hi)
        return list(zip(xs, ys))
    # custom: rejection sampling
    out: list[tuple[ModuleVector, ModuleVector]] = []
    attempts = 0
    cap = 200 * count
    while len(out) < count and attempts < cap:
        x = vector_with_norm(rng, d, k, float(stratified_norms(rng, 1, lo, hi)[0]))
        y = vector_with_norm(rng, d, k, float(stratified_norms(rng, 1, lo, hi)[0]))
        attempts += 1
        if domains.contains(D, x, y):
            out.append((x, y))
    if len(out) < count:
        raise domains.DomainError(
            f"could not sample pairs from a custom domain ({len(out)}/{count})"
        )
    return out


def certificate_probes(
    rng: np.random.Generator,
    D: domains.DomainSpec,
    d: int,
    k: int,
    count: int,
    lo: float = DEFAULT_NORM_LO,
    hi: float = DEFAULT_NORM_HI,
) -> list[tuple[ModuleVector, ModuleVector]]:
    """Probe pairs mixing domain pairs, diagonal pairs, and unrestricted pairs.

    Every certificate family stays populated: domain pairs feed the
    orthogonality and cross-identity checks, diagonal components feed the
    distance bound, and unrestricted pairs exercise the extension rule.
    """
    n_dom = max(count * 2 // 5, 1)
    n_diag = max(count * 3 // 10, 1)
    n_free = max(count - n_dom - n_diag, 1)
    pairs = domain_pairs(rng, D, d, k, n_dom, lo, hi)
    diag = delta_vectors(rng, D, d, k, 2 * n_diag, lo, hi)
    pairs += [(diag[2 * i], diag[2 * i + 1]) for i in range(n_diag)]
    xs = stratified_vectors(rng, d, k, n_free, lo, hi)
    ys = stratified_vectors(rng, d, k, n_free, lo, hi)
    pairs += list(zip(xs, ys))
    return pairs[:count]
