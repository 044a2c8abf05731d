"""Acceptance battery: every criterion at its stated tolerance, one line each.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the summary lines.
"""

import math
import time
from pathlib import Path

import numpy as np
import yaml

from modisom import asymptotics, certificates, cli, controls, corrector, domains, fixtures, hur
from modisom import kernel as K
from modisom.controls import CONTRACTIVE, EXPANSIVE, HurControl
from modisom.kernel import AlgebraElement, ModuleVector, inner, op_norm, vec_norm
from modisom.sampling import complex_gaussian, stratified_vectors


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {num:02d} [{name}]: {status}  {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def test_criterion_01_kernel_axioms():
    rng = np.random.default_rng(101)
    t0 = time.time()
    worst = 0.0
    for _ in range(10_000):
        d = int(rng.integers(1, 5))
        k = int(rng.integers(1, 7))
        x = ModuleVector(complex_gaussian(rng, (k, d, d)))
        y = ModuleVector(complex_gaussian(rng, (k, d, d)))
        z = ModuleVector(complex_gaussian(rng, (k, d, d)))
        a = AlgebraElement(complex_gaussian(rng, (d, d)))
        lam = complex(*rng.standard_normal(2))

        lhs = inner(lam * x + y, z)
        rhs = lam * inner(x, z) + inner(y, z)
        worst = max(worst, op_norm(lhs - rhs) / (1.0 + op_norm(lhs) + op_norm(rhs)))

        lhs = inner(a * x, y)
        rhs = a @ inner(x, y)
        worst = max(worst, op_norm(lhs - rhs) / (1.0 + op_norm(lhs) + op_norm(rhs)))

        pairing = inner(x, y)
        worst = max(worst, op_norm(pairing.adjoint - inner(y, x)) / (1.0 + op_norm(pairing)))

        nx, ny, na = vec_norm(x), vec_norm(y), op_norm(a)
        cs_excess = (op_norm(pairing) - nx * ny) / (1.0 + nx * ny)
        worst = max(worst, cs_excess)
        worst = max(worst, abs(op_norm(a.adjoint @ a) - na * na) / (1.0 + na * na))
        worst = max(worst, abs(op_norm(K.module_abs(x)) - nx) / (1.0 + nx))
    elapsed = time.time() - t0
    ok = worst <= 1e-11 and elapsed < 30.0
    _report(1, "kernel axioms", ok, f"worst rel {worst:.2e}, {elapsed:.1f}s on 1e4 triples")


FLAGSHIP = dict(alpha=0.25, p=2.0, q=2.0)


def _flagship_fixture(domain, c, p=2.0, q=2.0, k=8, seed=1007):
    ctrl = controls.power_product(0.25, p, q, c)
    spec = fixtures.FixtureSpec(
        "tail_shift", 1, k, k + 1,
        params={"profile": "power_phase", "alpha": 0.25, "p": p, "q": q},
        control=ctrl, domain=domain,
    )
    f, truth = fixtures.generate(spec, seed=seed)
    return f, truth, ctrl


def _certificate_battery(result, tol=1e-8, sharp=True):
    """Checks (a)-(d) of the restricted-domain theorem at tolerance tol."""
    rows = result.certificates
    by_id = {}
    for c in rows:
        by_id.setdefault(c.cert_id, []).append(c)
    checks = {}
    checks["a"] = max(c.measured for c in by_id["isometry"]) <= tol
    dist = by_id["distance-bound"]
    checks["b"] = all(c.measured <= c.bound + tol for c in dist)
    if sharp:
        checks["b-sharp"] = max(abs(c.bound - c.measured) for c in dist) <= tol
    checks["c"] = max(c.measured for c in by_id["residual-orthogonality"]) <= tol
    checks["d"] = max(c.measured for c in by_id["cross-identity"]) <= tol
    return checks


def test_criterion_02_flagship_sharpness():
    t0 = time.time()
    dom = domains.full(2.0)
    f, truth, ctrl = _flagship_fixture(dom, 2.0)
    result = corrector.decompose(
        f, ctrl, dom, tol=1e-10, cert_tol=1e-8, seed=1007, probe_budget=256
    )
    checks = _certificate_battery(result, tol=1e-8, sharp=True)
    elapsed = time.time() - t0
    ok = all(checks.values()) and elapsed < 10.0
    _report(2, "flagship sharpness", ok, f"checks {checks}, {elapsed:.1f}s, 256 probes")


def _reach_oracle(D, x):
    interval = domains.delta_norm_interval(D)
    lo, hi = interval
    s = vec_norm(x)
    for n in range(100000):
        if lo <= s <= hi:
            return n
        s /= D.scale_c
    raise AssertionError


def test_criterion_03_restricted_domains():
    t0 = time.time()
    legs = []

    ball = domains.ball_product(1.0, 2.0)
    f, truth, ctrl = _flagship_fixture(ball, 2.0, seed=1013)
    res_ball = corrector.decompose(
        f, ctrl, ball, tol=1e-10, cert_tol=1e-8, seed=1013, probe_budget=256
    )
    legs.append(("ball", res_ball, _certificate_battery(res_ball, 1e-8, sharp=True)))

    # the shrinking-scale regime pairs with exponents below one
    ext = domains.exterior_product(1.0, 0.5)
    f2, truth2, ctrl2 = _flagship_fixture(ext, 0.5, p=0.5, q=0.5, seed=1019)
    res_ext = corrector.decompose(
        f2, ctrl2, ext, tol=1e-10, cert_tol=1e-8, seed=1019, probe_budget=256
    )
    legs.append(("exterior", res_ext, _certificate_battery(res_ext, 1e-8, sharp=True)))

    reach_ok = True
    for D, res in ((ball, res_ball), (ext, res_ext)):
        for (x, y) in res.probes:
            for z in (x, y):
                if vec_norm(z) > 0:
                    reach_ok = reach_ok and domains.reach_index(D, z) == _reach_oracle(D, z)

    elapsed = time.time() - t0
    detail = {name: checks for name, _, checks in legs}
    ok = all(all(c.values()) for _, _, c in legs) and reach_ok
    _report(3, "restricted domains", ok, f"{detail}, reach-oracle {reach_ok}, {elapsed:.1f}s")


def test_criterion_04_scale_uniqueness():
    dom = domains.full(2.0)
    f, truth, ctrl = _flagship_fixture(dom, 2.0, seed=1021)
    report = corrector.check_uniqueness(
        f, ctrl, dom, 2.0, 3.0, tol=1e-8, seed=1021, probe_budget=256
    )
    _report(4, "scale uniqueness", report.passed, f"max gap {report.max_gap:.2e} over 256 probes")


def test_criterion_05_superstability():
    cases = [(1, 2), (1, 3), (1, 5), (2, 2)]
    worst = 0.0
    ok = True
    for d, k in cases:
        ctrl = controls.power_product(0.04, 0.5, 0.5, c=0.5)
        dom = domains.exterior_product(1.0, 0.5)
        spec = fixtures.FixtureSpec(
            "perturbed_isometry", d, k, k, params={"amplitude": 0.8},
            control=ctrl, domain=dom,
        )
        f, _ = fixtures.generate(spec, seed=1031 + k)
        rep = corrector.superstability_check(f, ctrl, dom, tol=1e-8, seed=1031 + k,
                                             probe_budget=96)
        ok = ok and rep.applicable and rep.passed
        worst = max(worst, rep.max_residual)
    _report(5, "superstability", ok and worst <= 1e-8,
            f"max residual {worst:.2e} across dims {cases}")


def test_criterion_06_homogeneity_shortcut():
    spec = fixtures.FixtureSpec("homogeneous", 1, 4, 5, params={"c": 2.0, "strength": 0.25})
    f, _ = fixtures.generate(spec, seed=1033)
    rep = corrector.homogeneity_shortcut(f, 2.0, tol=1e-12, seed=1033, probe_budget=128)
    ok = rep.homogeneous and rep.passed and rep.max_shortcut_gap <= 1e-12
    _report(6, "homogeneity shortcut", ok,
            f"violation {rep.max_violation:.2e}, shortcut gap {rep.max_shortcut_gap:.2e}")


def test_criterion_07_additive_defect_bounds():
    t0 = time.time()
    beta = 0.01
    rng = np.random.default_rng(1039)
    all_ok = {}
    for p in (0.0, 0.5, 1.0, 1.5, 3.0):
        base = controls.power_sum(beta, p, c=0.5)
        h = controls.hur_control(base)
        spec = fixtures.FixtureSpec(
            "tail_shift", 1, 4, 5,
            params={"profile": "power_sum", "beta": beta, "p": p},
            control=base,
        )
        f, truth = fixtures.generate(spec, seed=2000 + int(10 * p))

        xs = stratified_vectors(rng, 1, 4, 1000, 1e-2, 1e1)
        ys = stratified_vectors(rng, 1, 4, 1000, 1e-2, 1e1)
        defects = hur.additive_defect(f, h, list(zip(xs, ys)), tol=1e-10)
        defect_ok = all(m.passed for m in defects)

        chain_ok = True
        for z in xs[:2]:
            for branch in (CONTRACTIVE, EXPANSIVE):
                hb = HurControl(base=base, branch=branch)
                for (m, n, gap, bound) in hur.chain_trace(f, hb, z, depth=20):
                    chain_ok = chain_ok and gap <= bound + 1e-10

        final_ok = True
        closed_ok = True
        constant = controls.power_sum_distance_constant(beta, p)
        for z in xs[:24]:
            iz = hur.hur_correct(f, h, z, tol=1e-11)
            bound, _ = controls.psi_tilde(h, z)
            final_ok = final_ok and vec_norm(f(z) - iz) <= bound + 1e-8
            closed_ok = closed_ok and abs(
                bound - constant * vec_norm(z) ** (p / 2.0)
            ) <= 1e-11 * (1.0 + bound)
            series = _series_oracle(h, z)
            closed_ok = closed_ok and abs(bound - series) <= 1e-10 * (1.0 + bound)
        all_ok[p] = defect_ok and chain_ok and final_ok and closed_ok

    try:
        controls.hur_control(controls.power_sum(beta, 2.0, c=0.5))
        reject_ok = False
    except controls.UnsupportedExponentError:
        reject_ok = True

    elapsed = time.time() - t0
    ok = all(all_ok.values()) and reject_ok and elapsed < 60.0
    _report(7, "additive-defect bounds", ok,
            f"per-exponent {all_ok}, p=2 rejected {reject_ok}, {elapsed:.1f}s")


def _series_oracle(h, x, terms=200):
    total = 0.0
    if h.branch == CONTRACTIVE:
        for n in range(terms):
            xs = (2.0 ** n) * x
            total += (2.0 ** (-n - 1)) * controls.psi(h, xs, xs)
    else:
        for n in range(1, terms + 1):
            xs = (2.0 ** -n) * x
            total += (2.0 ** (n - 1)) * controls.psi(h, xs, xs)
    return total


def test_criterion_08_cross_engine_agreement():
    product = controls.power_product(0.01, 2.0, 2.0, c=2.0)
    sum_ctrl = controls.power_sum(0.01, 1.0, c=0.5)
    spec = fixtures.FixtureSpec(
        "tail_shift", 1, 4, 5,
        params={"profile": "dual", "alpha": 0.01, "p_prod": 2.0, "beta": 0.01, "p_sum": 1.0},
        control=product, domain=domains.full(2.0),
    )
    f, _ = fixtures.generate(spec, seed=1049, extra_controls=(sum_ctrl,))
    h = controls.hur_control(sum_ctrl)
    report = hur.cross_validate(f, product, h, tol=1e-8, seed=1049, probe_budget=64)
    _report(8, "cross-engine agreement", report.passed, f"max gap {report.max_gap:.2e}")


def test_criterion_09_asymptotics():
    t0 = time.time()
    spec = fixtures.FixtureSpec(
        "asymptotic_decay", 1, 3, 4,
        params={"p": 0.5, "base_radius": 1.0, "decay_exp": 1.0},
    )
    f, truth = fixtures.generate(spec, seed=1051)
    scenario = asymptotics.AsymptoticScenario(
        p=0.5, epsilon_grid=(1e-1, 1e-2, 1e-3), k_map=truth.k_map, mode="max_norm"
    )
    report = asymptotics.asymptotic_closeness(f, scenario, tol=1e-8, seed=1051)
    shells_ok = all(
        report.shell_suprema[eps] < math.sqrt(eps) for eps in scenario.epsilon_grid
    )
    collapse_ok = report.collapse_gap <= 1e-8
    growth_ok = report.growth_ratio <= 1.0 + 1e-8
    elapsed = time.time() - t0
    ok = shells_ok and collapse_ok and growth_ok and elapsed < 60.0
    _report(
        9, "asymptotic closeness", ok,
        f"suprema {dict((k, float(f'{v:.3e}')) for k, v in report.shell_suprema.items())}, "
        f"collapse {report.collapse_gap:.2e}, growth {report.growth_ratio:.3f}, {elapsed:.1f}s",
    )


def test_criterion_10_cli_determinism(tmp_path):
    suite_path = str(Path(__file__).resolve().parent.parent / "configs" / "suite.yaml")
    out1, out2 = tmp_path / "r1.json", tmp_path / "r2.json"
    code1 = cli.main(["--config", suite_path, "--out", str(out1)])
    code2 = cli.main(["--config", suite_path, "--out", str(out2)])
    identical = out1.read_bytes() == out2.read_bytes()
    all_pass = code1 == cli.EXIT_ALL_PASS and code2 == cli.EXIT_ALL_PASS

    # exit-code table: certificate failure, config error, engine error
    fail_cfg = tmp_path / "fail.yaml"
    fail_cfg.write_text(yaml.safe_dump({"scenarios": [{
        "name": "claim-refuted", "engine": "homogeneity", "seed": 3, "probes": 8,
        "homogeneity_c": 2,
        "fixture": {"kind": "tail_shift", "d": 1, "k_in": 2,
                    "profile": "power_phase", "alpha": 0.25, "p": 2, "q": 2},
    }]}))
    code_fail = cli.main(["--config", str(fail_cfg), "--out", str(tmp_path / "f.json")])

    dup_cfg = tmp_path / "dup.yaml"
    entry = {
        "name": "same", "engine": "homogeneity", "seed": 1,
        "fixture": {"kind": "homogeneous", "d": 1, "k_in": 2, "c": 2},
    }
    dup_cfg.write_text(yaml.safe_dump({"scenarios": [entry, entry]}))
    code_dup = cli.main(["--config", str(dup_cfg), "--out", str(tmp_path / "d.json")])

    err_cfg = tmp_path / "err.yaml"
    err_cfg.write_text(yaml.safe_dump({"scenarios": [{
        "name": "p-two", "engine": "hur", "seed": 5,
        "fixture": {"kind": "tail_shift", "d": 1, "k_in": 2,
                    "profile": "power_sum", "beta": 0.01, "p": 2},
        "control": {"kind": "power_sum", "beta": 0.01, "p": 2, "c": 0.5},
    }]}))
    code_err = cli.main(["--config", str(err_cfg), "--out", str(tmp_path / "e.json")])

    codes_ok = (
        code_fail == cli.EXIT_CERT_FAIL
        and code_dup == cli.EXIT_CONFIG_ERROR
        and code_err == cli.EXIT_ENGINE_ERROR
    )
    ok = identical and all_pass and codes_ok
    _report(
        10, "cli determinism and exit codes", ok,
        f"byte-identical {identical}, exits (0,1,2,3) = "
        f"({code1},{code_fail},{code_dup},{code_err})",
    )
