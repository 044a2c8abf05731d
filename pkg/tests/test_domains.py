import numpy as np
import pytest

from modisom import domains
from modisom.kernel import vec_norm
from modisom.sampling import stratified_vectors, vector_with_norm

from conftest import random_vector


def reach_oracle(D, x, cap=100000):
    """Independent scan on scalar norms using the analytic diagonal interval."""
    interval = domains.delta_norm_interval(D)
    assert interval is not None
    lo, hi = interval
    s = vec_norm(x)
    for n in range(cap):
        if lo <= s <= hi:
            return n
        s /= D.scale_c
    raise AssertionError("oracle did not terminate")


class TestFactories:
    def test_ball_requires_expanding_scale(self):
        domains.ball_product(1.0, 2.0)
        with pytest.raises(domains.DomainError):
            domains.ball_product(1.0, 0.5)

    def test_exterior_requires_shrinking_scale(self):
        domains.exterior_product(1.0, 0.5)
        with pytest.raises(domains.DomainError):
            domains.exterior_product(1.0, 2.0)
        with pytest.raises(domains.DomainError):
            domains.exterior_union(3.0, 2.0)

    def test_scale_one_rejected(self):
        for bad in (1.0, 0.0, -2.0):
            with pytest.raises(domains.DomainError):
                domains.full(bad)

    def test_custom_needs_predicate(self):
        with pytest.raises(domains.DomainError):
            domains.DomainSpec(kind="custom", scale_c=2.0)

    def test_unknown_kind(self):
        with pytest.raises(domains.DomainError):
            domains.DomainSpec(kind="weird", scale_c=2.0)


class TestContains:
    def test_full_accepts_everything(self, rng):
        D = domains.full(2.0)
        assert domains.contains(D, random_vector(rng, 1, 2), random_vector(rng, 1, 2))

    def test_ball_product_one_factor_outside(self, rng):
        D = domains.ball_product(1.0, 2.0)
        x = random_vector(rng, 1, 2, norm=0.5)
        y = random_vector(rng, 1, 2, norm=2.0)
        assert not domains.contains(D, x, y)
        assert domains.contains(D, x, x)

    def test_exterior_union_max_rule(self, rng):
        D = domains.exterior_union(3.0, 0.5)
        x = random_vector(rng, 1, 2, norm=1.0)
        y = random_vector(rng, 1, 2, norm=5.0)
        assert domains.contains(D, x, y)
        assert domains.contains(D, y, x)
        assert not domains.contains(D, x, x)

    def test_delta_matches_analytic_description(self, rng):
        D = domains.exterior_union(3.0, 0.5)
        for norm in (0.1, 2.9, 3.0, 3.1, 50.0):
            x = random_vector(rng, 2, 2, norm=norm)
            assert domains.in_delta(D, x) == (vec_norm(x) >= 3.0)


class TestReachIndex:
    def test_diagonal_point_has_reach_zero(self, rng):
        D = domains.ball_product(1.0, 2.0)
        assert domains.reach_index(D, random_vector(rng, 1, 3, norm=0.7)) == 0

    def test_ball_example(self, rng):
        D = domains.ball_product(1.0, 2.0)
        x = random_vector(rng, 1, 3, norm=5.0)
        assert domains.reach_index(D, x) == 3  # 5/8 <= 1 < 5/4

    def test_exterior_example(self, rng):
        D = domains.exterior_product(1.0, 0.5)
        x = random_vector(rng, 1, 3, norm=0.3)
        assert domains.reach_index(D, x) == 2  # 0.3*4 >= 1 > 0.3*2

    def test_zero_vector_rejected(self):
        from modisom.kernel import zero_vector

        D = domains.ball_product(1.0, 2.0)
        with pytest.raises(ValueError):
            domains.reach_index(D, zero_vector(1, 3))

    def test_agrees_with_scan_oracle(self, rng):
        specs = [
            domains.full(2.0),
            domains.ball_product(1.0, 2.0),
            domains.ball_product(0.3, 3.0),
            domains.exterior_product(1.0, 0.5),
            domains.exterior_union(2.0, 0.25),
        ]
        for D in specs:
            for x in stratified_vectors(rng, 2, 2, 40, 1e-3, 1e3):
                assert domains.reach_index(D, x) == reach_oracle(D, x)

    def test_unreachable_custom_spec(self, rng):
        # a shell predicate that scaling always leaves
        def member(x, y):
            return abs(vec_norm(x) - 1.0) < 0.05 and abs(vec_norm(y) - 1.0) < 0.05

        D = domains.custom(member, c=2.0)
        x = random_vector(rng, 1, 2, norm=10.0)
        with pytest.raises(domains.DomainUnreachableError):
            domains.reach_index(D, x, n_max=200)


class TestValidateAxioms:
    def test_builtins_pass_analytically(self):
        for D in (
            domains.full(2.0),
            domains.ball_product(1.0, 2.0),
            domains.exterior_product(1.0, 0.5),
            domains.exterior_union(3.0, 0.5),
        ):
            report = domains.validate_axioms(D)
            assert report.passed and report.method == "analytic"

    def test_shell_domain_fails_axiom_i(self):
        # norms adding to ~1: any rescaling escapes the shell
        def member(x, y):
            return abs(vec_norm(x) + vec_norm(y) - 1.0) < 0.1

        D = domains.custom(member, c=2.0)
        report = domains.validate_axioms(D, sample_budget=200, seed=1)
        assert not report.passed
        assert report.axiom_i_violations

    def test_custom_mirror_of_builtin_passes(self):
        def member(x, y):
            return max(vec_norm(x), vec_norm(y)) >= 2.0

        D = domains.custom(member, c=0.5)
        report = domains.validate_axioms(D, sample_budget=100, seed=2)
        assert report.passed
        assert report.method == "sampled"

    def test_budget_validation(self):
        with pytest.raises(ValueError):
            domains.validate_axioms(domains.full(2.0), sample_budget=0)


def test_builtin_axiom_probe_battery(rng):
    """Axioms (i) and (ii) hold on every seeded probe for built-in kinds."""
    specs = [
        domains.ball_product(1.0, 2.0),
        domains.exterior_product(1.0, 0.5),
        domains.exterior_union(2.0, 0.5),
    ]
    for D in specs:
        c = D.scale_c
        checked = 0
        vectors = stratified_vectors(rng, 1, 2, 40, 1e-2, 1e2)
        pairs = [(x, y) for x in vectors for y in vectors if domains.contains(D, x, y)]
        for (x, y) in pairs[:200]:
            for _ in range(5):
                n = int(rng.integers(0, 21))
                m = int(rng.integers(0, 21))
                assert domains.contains(D, (c ** -n) * x, (c ** -m) * y)
                checked += 1
        assert checked > 0
        # axiom (ii): every nonzero pair reaches the domain by scaling
        for x in vectors[:10]:
            for y in vectors[:10]:
                n = domains.reach_index(D, x)
                m = domains.reach_index(D, y)
                assert domains.contains(D, (c ** -n) * x, (c ** -m) * y)
