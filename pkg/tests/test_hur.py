import numpy as np
import pytest

from modisom import controls, domains, fixtures, hur
from modisom.controls import CONTRACTIVE, EXPANSIVE
from modisom.kernel import vec_norm, zero_vector

from conftest import random_vector


def make_sum_fixture(p, beta=0.01, d=1, k=4, seed=3):
    base = controls.power_sum(beta, p, c=0.5)
    spec = fixtures.FixtureSpec(
        "tail_shift", d, k, k + 1,
        params={"profile": "power_sum", "beta": beta, "p": p},
        control=base,
    )
    f, truth = fixtures.generate(spec, seed=seed)
    return f, truth, controls.hur_control(base)


def chain_sum_oracle(h, x, m, n):
    """Independent summation of the weighted derived-control chain."""
    total = 0.0
    if h.branch == CONTRACTIVE:
        for k in range(m, n):
            xs = (2.0 ** k) * x
            total += 2.0 ** (-k - 1) * controls.psi(h, xs, xs)
    else:
        for k in range(m + 1, n + 1):
            xs = (2.0 ** -k) * x
            total += 2.0 ** (k - 1) * controls.psi(h, xs, xs)
    return total


class TestAdditiveDefect:
    def test_additive_map_has_zero_defect(self, rng):
        spec = fixtures.FixtureSpec("exact_isometry", 1, 3, 4)
        f, _ = fixtures.generate(spec, seed=1)
        h = controls.hur_control(controls.power_sum(0.01, 1.0, c=0.5))
        pairs = [(random_vector(rng, 1, 3), random_vector(rng, 1, 3)) for _ in range(8)]
        for m in hur.additive_defect(f, h, pairs):
            assert m.defect <= 1e-12
            assert m.passed

    def test_tail_shift_defect_below_bound(self, rng):
        f, truth, h = make_sum_fixture(p=1.0)
        pairs = [(random_vector(rng, 1, 4), random_vector(rng, 1, 4)) for _ in range(32)]
        for m in hur.additive_defect(f, h, pairs):
            assert m.passed
            assert m.defect <= m.bound + 1e-10

    def test_origin_pair(self):
        f, truth, h = make_sum_fixture(p=0.0)
        z = zero_vector(1, 4)
        [m] = hur.additive_defect(f, h, [(z, z)])
        # defect equals ||f(0)||, bounded by the constant-control value
        assert m.defect == pytest.approx(vec_norm(f(z)), rel=1e-12)
        assert m.passed


class TestChains:
    @pytest.mark.parametrize("p", [0.5, 1.0, 3.0])
    def test_gaps_dominated_by_partial_sums(self, rng, p):
        f, truth, h = make_sum_fixture(p=p)
        x = random_vector(rng, 1, 4, norm=1.7)
        for (m, n, gap, bound) in hur.chain_trace(f, h, x, depth=12):
            assert gap <= bound + 1e-10

    def test_partial_sums_match_oracle(self, rng):
        f, truth, h = make_sum_fixture(p=1.0)
        x = random_vector(rng, 1, 4, norm=0.8)
        for (m, n) in [(0, 1), (0, 5), (2, 7), (3, 12)]:
            assert hur.chain_partial_sum(h, x, m, n) == pytest.approx(
                chain_sum_oracle(h, x, m, n), rel=1e-12
            )

    def test_chain_order_validated(self, rng):
        f, truth, h = make_sum_fixture(p=1.0)
        with pytest.raises(ValueError):
            hur.chain_partial_sum(h, random_vector(rng, 1, 4), 3, 3)


class TestHurCorrect:
    def test_exact_isometry_fixed_point(self, rng):
        spec = fixtures.FixtureSpec("exact_isometry", 1, 3, 3)
        f, _ = fixtures.generate(spec, seed=2)
        h = controls.hur_control(controls.power_sum(0.01, 1.0, c=0.5))
        x = random_vector(rng, 1, 3, norm=2.0)
        assert vec_norm(hur.hur_correct(f, h, x) - f(x)) <= 1e-10

    def test_zero_maps_to_zero(self):
        f, truth, h = make_sum_fixture(p=1.0)
        assert vec_norm(hur.hur_correct(f, h, zero_vector(1, 4))) == 0.0

    @pytest.mark.parametrize("p", [0.5, 1.0, 1.5])
    def test_contractive_limit_and_bound(self, rng, p):
        beta = 0.01
        f, truth, h = make_sum_fixture(p=p, beta=beta)
        for norm in (0.3, 1.0, 6.0):
            x = random_vector(rng, 1, 4, norm=norm)
            ix = hur.hur_correct(f, h, x, tol=1e-11)
            assert vec_norm(ix - truth.isometry(x)) <= 1e-10
            bound, _ = controls.psi_tilde(h, x)
            assert vec_norm(f(x) - ix) <= bound + 1e-8

    def test_expansive_limit(self, rng):
        f, truth, h = make_sum_fixture(p=3.0)
        assert h.branch == EXPANSIVE
        x = random_vector(rng, 1, 4, norm=1.2)
        ix = hur.hur_correct(f, h, x, tol=1e-11)
        assert vec_norm(ix - truth.isometry(x)) <= 1e-10

    def test_custom_base_gap_rule(self, rng):
        beta, p = 0.01, 1.0
        f, truth, _ = make_sum_fixture(p=p, beta=beta)
        base = controls.custom_control(
            lambda x, y: beta * (vec_norm(x) ** p + vec_norm(y) ** p), c=0.5
        )
        h = controls.hur_control(base, CONTRACTIVE)
        x = random_vector(rng, 1, 4, norm=1.0)
        assert vec_norm(hur.hur_correct(f, h, x, tol=1e-11) - truth.isometry(x)) <= 1e-9


class TestAnalyze:
    def test_full_battery_passes(self):
        f, truth, h = make_sum_fixture(p=1.0)
        result = hur.analyze(f, h, seed=4, pair_budget=48, probe_budget=16, chain_depth=8)
        assert result.passed
        ids = {c.cert_id for c in result.certificates}
        assert ids >= {
            "additive-defect", "chain-majorization", "distance-series-bound", "isometry",
        }
        assert result.a_linearity_residual is not None
        assert result.a_linearity_residual <= 1e-8

    def test_defect_measurements_recorded(self):
        f, truth, h = make_sum_fixture(p=0.5)
        result = hur.analyze(f, h, seed=5, pair_budget=16, probe_budget=8, chain_depth=6)
        assert len(result.defects) == 16
        assert len(result.distances) == 8
        assert all(m <= b + 1e-8 for (m, b) in result.distances)


class TestCrossValidate:
    def test_exact_isometry_zero_gap(self):
        spec = fixtures.FixtureSpec("exact_isometry", 1, 3, 3)
        f, _ = fixtures.generate(spec, seed=6)
        product = controls.power_product(1e-30, 2.0, 2.0, c=2.0)
        h = controls.hur_control(controls.power_sum(0.01, 1.0, c=0.5))
        report = hur.cross_validate(f, product, h, seed=6, probe_budget=12)
        assert report.passed
        assert report.max_gap <= 1e-10

    def test_dual_fixture_agreement(self):
        product = controls.power_product(0.01, 2.0, 2.0, c=2.0)
        sum_ctrl = controls.power_sum(0.01, 1.0, c=0.5)
        spec = fixtures.FixtureSpec(
            "tail_shift", 1, 3, 4,
            params={"profile": "dual", "alpha": 0.01, "p_prod": 2.0,
                    "beta": 0.01, "p_sum": 1.0},
            control=product, domain=domains.full(2.0),
        )
        f, truth = fixtures.generate(spec, seed=7, extra_controls=(sum_ctrl,))
        h = controls.hur_control(sum_ctrl)
        report = hur.cross_validate(f, product, h, tol=1e-8, seed=7, probe_budget=32)
        assert report.passed
        assert report.max_gap <= 1e-8

    def test_homogeneous_map_agrees_trivially(self):
        spec = fixtures.FixtureSpec("homogeneous", 1, 2, 3, params={"c": 2.0, "strength": 0.1})
        f, _ = fixtures.generate(spec, seed=8)
        product = controls.power_product(1e-30, 2.0, 2.0, c=2.0)
        h = controls.hur_control(controls.power_sum(1e-30, 1.0, c=0.5))
        report = hur.cross_validate(f, product, h, seed=8, probe_budget=12)
        # both engines reproduce f itself, so they agree with each other
        assert report.max_gap <= 1e-9
