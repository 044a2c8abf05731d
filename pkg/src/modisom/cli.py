"""Config-driven experiment runner emitting machine-readable certificate reports.

A YAML config declares named scenarios; each binds a fixture, a control, a
domain, and one engine.  Reports are canonical JSON (sorted keys, no
timestamps) or flat CSV, so reruns with the same seeds are byte-identical.

Exit codes: 0 all certificates pass; 1 at least one certificate failed or
could not be determined; 2 config error; 3 engine error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
import yaml

from . import asymptotics, certificates as cert, controls, corrector, domains, fixtures, hur
from .certificates import Certificate

ENGINES = (
    "corrector",
    "hur",
    "asymptotics",
    "superstability",
    "uniqueness",
    "homogeneity",
    "cross_validate",
)

EXIT_ALL_PASS = 0
EXIT_CERT_FAIL = 1
EXIT_CONFIG_ERROR = 2
EXIT_ENGINE_ERROR = 3


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


@dataclass
class ScenarioConfig:
    name: str
    engine: str
    seed: int = 0
    probe_budget: int = 256
    pair_budget: int = 256
    tol: float = 1e-8
    extrap_tol: float = 1e-10
    max_iter: int = 10_000
    norm_lo: float = 1e-2
    norm_hi: float = 1e2
    fixture: dict = field(default_factory=dict)
    control: dict | None = None
    domain: dict | None = None
    sum_control: dict | None = None
    asymptotic: dict | None = None
    c_values: list[float] | None = None
    homogeneity_c: float | None = None
    raw: dict = field(default_factory=dict)


_SCENARIO_KEYS = {
    "name", "engine", "seed", "probes", "pairs", "tol", "extrap_tol",
    "max_iter", "norm_lo", "norm_hi", "fixture", "control", "domain",
    "sum_control", "asymptotic", "c_values", "homogeneity_c",
}


def parse_scenario(entry: dict) -> ScenarioConfig:
    if not isinstance(entry, dict):
        raise ConfigError(f"scenario entries must be mappings, got {type(entry).__name__}")
    unknown = set(entry) - _SCENARIO_KEYS
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    try:
        name = str(entry["name"])
        engine = str(entry["engine"])
    except KeyError as exc:
        raise ConfigError(f"scenario missing required key {exc}") from None
    if engine not in ENGINES:
        raise ConfigError(f"unknown engine {engine!r}; expected one of {ENGINES}")
    if "fixture" not in entry or not isinstance(entry["fixture"], dict):
        raise ConfigError(f"scenario {name!r} needs a fixture mapping")
    return ScenarioConfig(
        name=name,
        engine=engine,
        seed=int(entry.get("seed", 0)),
        probe_budget=int(entry.get("probes", 256)),
        pair_budget=int(entry.get("pairs", 256)),
        tol=float(entry.get("tol", 1e-8)),
        extrap_tol=float(entry.get("extrap_tol", 1e-10)),
        max_iter=int(entry.get("max_iter", 10_000)),
        norm_lo=float(entry.get("norm_lo", 1e-2)),
        norm_hi=float(entry.get("norm_hi", 1e2)),
        fixture=dict(entry["fixture"]),
        control=dict(entry["control"]) if entry.get("control") else None,
        domain=dict(entry["domain"]) if entry.get("domain") else None,
        sum_control=dict(entry["sum_control"]) if entry.get("sum_control") else None,
        asymptotic=dict(entry["asymptotic"]) if entry.get("asymptotic") else None,
        c_values=[float(c) for c in entry["c_values"]] if entry.get("c_values") else None,
        homogeneity_c=float(entry["homogeneity_c"]) if entry.get("homogeneity_c") is not None else None,
        raw=dict(entry),
    )


def load_config(path: str) -> list[ScenarioConfig]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot load config {path!r}: {exc}") from exc
    if not isinstance(data, dict) or "scenarios" not in data:
        raise ConfigError("config must be a mapping with a 'scenarios' list")
    entries = data["scenarios"]
    if not isinstance(entries, list):
        raise ConfigError("'scenarios' must be a list")
    scenarios = [parse_scenario(e) for e in entries]
    names = [s.name for s in scenarios]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise ConfigError(f"duplicate scenario names: {sorted(dupes)}")
    return scenarios


def build_control(spec: dict | None) -> controls.ControlSpec | None:
    if spec is None:
        return None
    kind = spec.get("kind")
    try:
        if kind == "power_product":
            return controls.power_product(
                float(spec["alpha"]), float(spec["p"]), float(spec["q"]), float(spec["c"])
            )
        if kind == "power_sum":
            return controls.power_sum(float(spec["beta"]), float(spec["p"]), float(spec["c"]))
    except (KeyError, controls.ControlError) as exc:
        raise ConfigError(f"bad control spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown control kind {kind!r} (config supports the built-in kinds)")


def build_domain(spec: dict | None) -> domains.DomainSpec | None:
    if spec is None:
        return None
    kind = spec.get("kind")
    try:
        if kind == "full":
            return domains.full(float(spec["c"]))
        if kind == "ball_product":
            return domains.ball_product(float(spec["radius"]), float(spec["c"]))
        if kind == "exterior_product":
            return domains.exterior_product(float(spec["radius"]), float(spec["c"]))
        if kind == "exterior_union":
            return domains.exterior_union(float(spec["threshold"]), float(spec["c"]))
    except (KeyError, domains.DomainError) as exc:
        raise ConfigError(f"bad domain spec {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown domain kind {kind!r} (config supports the built-in kinds)")


_FIXTURE_STRUCTURAL = {"kind", "d", "k_in", "k_out"}


def build_fixture(
    cfg: ScenarioConfig,
    control: controls.ControlSpec | None,
    domain: domains.DomainSpec | None,
    extra_controls: Sequence[controls.ControlSpec] = (),
) -> tuple[corrector.ApproxMap, fixtures.GroundTruth]:
    spec_dict = cfg.fixture
    kind = spec_dict.get("kind")
    if not kind:
        raise ConfigError("fixture mapping needs a 'kind'")
    d = int(spec_dict.get("d", 1))
    k_in = int(spec_dict.get("k_in", 2))
    default_out = k_in + 1 if kind in ("tail_shift", "asymptotic_decay") else k_in
    k_out = int(spec_dict.get("k_out", default_out))
    params = {k: v for k, v in spec_dict.items() if k not in _FIXTURE_STRUCTURAL}
    try:
        spec = fixtures.FixtureSpec(
            kind=kind, dim_d=d, rank_in=k_in, rank_out=k_out,
            params=params, control=control, domain=domain,
        )
        return fixtures.generate(spec, seed=cfg.seed, extra_controls=extra_controls)
    except fixtures.FixtureError as exc:
        raise ConfigError(f"fixture {spec_dict!r}: {exc}") from exc


def _require(cfg: ScenarioConfig, attr: str, what: str):
    value = getattr(cfg, attr)
    if value is None:
        raise ConfigError(f"engine {cfg.engine!r} in scenario {cfg.name!r} needs {what}")
    return value


def _engine_corrector(cfg: ScenarioConfig) -> list[Certificate]:
    control = build_control(_require(cfg, "control", "a control"))
    domain = build_domain(_require(cfg, "domain", "a domain"))
    f, truth = build_fixture(cfg, control, domain)
    result = corrector.decompose(
        f, control, domain,
        tol=cfg.extrap_tol, max_iter=cfg.max_iter, cert_tol=cfg.tol,
        seed=cfg.seed, probe_budget=cfg.probe_budget,
        norm_lo=cfg.norm_lo, norm_hi=cfg.norm_hi,
    )
    rows = result.aggregated()
    audit = fixtures.admissibility_audit(
        f, control, domain, budget=min(cfg.probe_budget, 128), seed=cfg.seed
    )
    return rows + audit.certificates


def _engine_superstability(cfg: ScenarioConfig) -> list[Certificate]:
    control = build_control(_require(cfg, "control", "a control"))
    domain = build_domain(_require(cfg, "domain", "a domain"))
    f, _ = build_fixture(cfg, control, domain)
    report = corrector.superstability_check(
        f, control, domain, tol=cfg.tol, max_iter=cfg.max_iter,
        seed=cfg.seed, probe_budget=cfg.probe_budget,
    )
    return report.certificates


def _engine_uniqueness(cfg: ScenarioConfig) -> list[Certificate]:
    control = build_control(_require(cfg, "control", "a control"))
    domain = build_domain(_require(cfg, "domain", "a domain"))
    cs = _require(cfg, "c_values", "c_values: [c1, c2]")
    if len(cs) != 2:
        raise ConfigError("c_values must list exactly two scalings")
    f, _ = build_fixture(cfg, control, domain)
    report = corrector.check_uniqueness(
        f, control, domain, cs[0], cs[1], tol=cfg.tol,
        max_iter=cfg.max_iter, seed=cfg.seed, probe_budget=cfg.probe_budget,
    )
    return report.certificates


def _engine_homogeneity(cfg: ScenarioConfig) -> list[Certificate]:
    f, _ = build_fixture(cfg, build_control(cfg.control), build_domain(cfg.domain))
    c = cfg.homogeneity_c
    if c is None:
        c = float(cfg.fixture.get("c", 2.0))
    report = corrector.homogeneity_shortcut(
        f, c, tol=cfg.tol, seed=cfg.seed, probe_budget=cfg.probe_budget,
    )
    return report.certificates


def _engine_hur(cfg: ScenarioConfig) -> list[Certificate]:
    base = build_control(cfg.sum_control or _require(cfg, "control", "a control"))
    h = controls.hur_control(base)
    f, _ = build_fixture(cfg, base, None)
    result = hur.analyze(
        f, h, tol=cfg.tol, extrap_tol=cfg.extrap_tol, max_iter=cfg.max_iter,
        seed=cfg.seed, pair_budget=cfg.pair_budget, probe_budget=cfg.probe_budget,
    )
    return result.aggregated()


def _engine_cross_validate(cfg: ScenarioConfig) -> list[Certificate]:
    product = build_control(_require(cfg, "control", "a product control"))
    sum_spec = build_control(_require(cfg, "sum_control", "a sum control"))
    h = controls.hur_control(sum_spec)
    domain = build_domain(cfg.domain) or domains.full(product.c)
    f, _ = build_fixture(cfg, product, domain, extra_controls=(sum_spec,))
    report = hur.cross_validate(
        f, product, h, tol=cfg.tol, D=domain, extrap_tol=cfg.extrap_tol,
        max_iter=cfg.max_iter, seed=cfg.seed, probe_budget=cfg.probe_budget,
    )
    return report.certificates


def _engine_asymptotics(cfg: ScenarioConfig) -> list[Certificate]:
    params = _require(cfg, "asymptotic", "an asymptotic section")
    f, truth = build_fixture(cfg, None, None)
    if truth.k_map is None:
        raise ConfigError("asymptotics needs a fixture with a threshold map "
                          "(kind: asymptotic_decay)")
    try:
        scenario = asymptotics.AsymptoticScenario(
            p=float(params["p"]),
            epsilon_grid=tuple(float(e) for e in params["epsilons"]),
            k_map=truth.k_map,
            mode=params.get("mode", asymptotics.MAX_NORM),
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad asymptotic section {params!r}: {exc}") from exc
    hyp = asymptotics.verify_asymptotic_hypothesis(
        f, scenario, samples=min(cfg.probe_budget, 128), seed=cfg.seed
    )
    close = asymptotics.asymptotic_closeness(
        f, scenario, tol=cfg.tol, extrap_tol=cfg.extrap_tol,
        max_iter=cfg.max_iter, seed=cfg.seed,
    )
    return hyp.certificates + close.certificates


_ENGINE_RUNNERS = {
    "corrector": _engine_corrector,
    "superstability": _engine_superstability,
    "uniqueness": _engine_uniqueness,
    "homogeneity": _engine_homogeneity,
    "hur": _engine_hur,
    "cross_validate": _engine_cross_validate,
    "asymptotics": _engine_asymptotics,
}


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_digest(cfg: ScenarioConfig) -> str:
    payload = dict(cfg.raw)
    payload["__overrides__"] = {
        "seed": cfg.seed, "tol": cfg.tol, "max_iter": cfg.max_iter,
    }
    return hashlib.sha256(canonical_json(payload).encode()).hexdigest()


def _cert_row(c: Certificate) -> dict:
    return {
        "id": c.cert_id,
        "anchor": c.anchor,
        "measured": float(c.measured),
        "bound": float(c.bound),
        "margin": float(c.margin),
        "status": c.status,
    }


def run(cfg: ScenarioConfig) -> dict:
    """Execute one scenario; engine exceptions surface as an error row."""
    try:
        rows = _ENGINE_RUNNERS[cfg.engine](cfg)
        cert_rows = [_cert_row(c) for c in rows]
    except ConfigError:
        raise
    except Exception as exc:  # engine error: recorded, not raised
        cert_rows = [{
            "id": "engine-error",
            "anchor": f"{type(exc).__name__}: {exc}",
            "measured": 0.0,
            "bound": 0.0,
            "margin": 0.0,
            "status": cert.ERROR,
        }]
    return {
        "scenario": cfg.name,
        "engine": cfg.engine,
        "seed": cfg.seed,
        "config_digest": config_digest(cfg),
        "certificates": cert_rows,
    }


def _run_payload(entry: dict) -> dict:
    return run(parse_scenario(entry))


def suite(configs: Sequence[ScenarioConfig], jobs: int = 1) -> dict:
    """Run scenarios (optionally in parallel) and aggregate deterministically."""
    ordered = sorted(configs, key=lambda c: c.name)
    if jobs > 1 and len(ordered) > 1:
        payloads = [dict(c.raw) for c in ordered]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_run_payload, payloads))
    else:
        reports = [run(c) for c in ordered]
    counts = {"pass": 0, "fail": 0, "indeterminate": 0, "not-applicable": 0, "error": 0}
    worst_margin = None
    for rep in reports:
        for row in rep["certificates"]:
            counts[row["status"]] = counts.get(row["status"], 0) + 1
            if row["status"] in (cert.PASS, cert.FAIL):
                if worst_margin is None or row["margin"] < worst_margin:
                    worst_margin = row["margin"]
    return {
        "scenarios": reports,
        "summary": {
            "scenario_count": len(reports),
            "certificate_counts": counts,
            "worst_margin": worst_margin if worst_margin is not None else 0.0,
        },
    }


def exit_code(report: dict) -> int:
    statuses = [
        row["status"] for rep in report["scenarios"] for row in rep["certificates"]
    ]
    if any(s == cert.ERROR for s in statuses):
        return EXIT_ENGINE_ERROR
    if any(s in (cert.FAIL, cert.INDETERMINATE) for s in statuses):
        return EXIT_CERT_FAIL
    return EXIT_ALL_PASS


def render_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, ensure_ascii=True) + "\n"


CSV_COLUMNS = (
    "scenario", "engine", "id", "anchor", "measured", "bound", "margin",
    "status", "seed", "config_digest",
)


def render_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rep in report["scenarios"]:
        for row in rep["certificates"]:
            writer.writerow([
                rep["scenario"], rep["engine"], row["id"], row["anchor"],
                repr(row["measured"]), repr(row["bound"]), repr(row["margin"]),
                row["status"], rep["seed"], rep["config_digest"],
            ])
    return buf.getvalue()


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="modisom",
        description="Run certified isometry-recovery scenarios from a YAML config.",
    )
    parser.add_argument("--config", required=True, help="path to the scenario config")
    parser.add_argument("--scenario", action="append", default=None,
                        help="run only the named scenario (repeatable)")
    parser.add_argument("--seed", type=int, default=None, help="override every scenario seed")
    parser.add_argument("--out", default=None, help="write the report to this path")
    parser.add_argument("--format", choices=("json", "csv"), default="json")
    parser.add_argument("--tol", type=float, default=None, help="override certificate tolerance")
    parser.add_argument("--max-iter", type=int, default=None, help="override iteration cap")
    parser.add_argument("--jobs", type=int, default=1, help="scenario-level parallelism")
    args = parser.parse_args(argv)

    try:
        configs = load_config(args.config)
        if args.scenario:
            known = {c.name for c in configs}
            missing = [n for n in args.scenario if n not in known]
            if missing:
                raise ConfigError(f"no such scenario: {missing}")
            configs = [c for c in configs if c.name in set(args.scenario)]
        for cfg in configs:
            if args.seed is not None:
                cfg.seed = args.seed
                cfg.raw = dict(cfg.raw, seed=args.seed)
            if args.tol is not None:
                cfg.tol = args.tol
                cfg.raw = dict(cfg.raw, tol=args.tol)
            if args.max_iter is not None:
                cfg.max_iter = args.max_iter
                cfg.raw = dict(cfg.raw, max_iter=args.max_iter)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    try:
        report = suite(configs, jobs=max(args.jobs, 1))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    body = render_json(report) if args.format == "json" else render_csv(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)

    code = exit_code(report)
    if code == EXIT_ENGINE_ERROR:
        for rep in report["scenarios"]:
            for row in rep["certificates"]:
                if row["status"] == cert.ERROR:
                    print(
                        f"engine error in scenario {rep['scenario']!r}: {row['anchor']}",
                        file=sys.stderr,
                    )
    return code


if __name__ == "__main__":
    sys.exit(main())
