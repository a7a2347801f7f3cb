"""Scenario runner.

Parses a config file (same line-oriented format as experiment configs),
sweeps the requested parameter grid across a worker pool, and writes
deterministic CSV reports plus a JSON run manifest.  Exit codes: 0 ok,
2 config error, 3 numerical failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, backend, bounds, gaussian, metrics, simulate
from .model import (
    ConfigError,
    ExperimentConfig,
    InitialCondition,
    OUParams,
    SeriesCoefficients,
    ou_drift,
    parse_sections,
)

SCENARIOS = (
    "gaussian_rate",
    "ab_identities",
    "bound_tables",
    "simulate_validate",
    "infrange_sweep",
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    params: dict
    out_dir: Path
    seed: int
    workers: int = 1
    quiet: bool = False


# ---------------------------------------------------------------------------
# Report emission


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def emit_report(rows: list[dict], schema: list[str], path: Path) -> Path:
    """Write rows as CSV: UTF-8, LF endings, 17 significant digits.

    Every row must carry exactly the schema's keys; mismatches are errors
    so that a malformed scenario cannot silently emit ragged tables.
    """
    for i, row in enumerate(rows):
        if set(row) != set(schema):
            raise ValueError(
                f"row {i} keys {sorted(row)} do not match schema {sorted(schema)}"
            )
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(schema) + "\n")
        for row in rows:
            fh.write(",".join(_format_cell(row[name]) for name in schema) + "\n")
    return path


def emit_manifest(spec: ScenarioSpec, files: list[Path], wall_time: float) -> Path:
    manifest = {
        "scenario": spec.scenario,
        "params": {k: (list(v) if isinstance(v, (list, tuple)) else v)
                   for k, v in spec.params.items()},
        "seed": spec.seed,
        "workers": spec.workers,
        "backend": backend.active_backend(),
        "versions": {
            "chaoskit": __version__,
            "python": sys.version.split()[0],
            "numpy": np.__version__,
        },
        "wall_time_s": round(wall_time, 3),
        "files": [f.name for f in files],
    }
    path = spec.out_dir / "run_manifest.json"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _pmap(fn, items, workers: int) -> list:
    """Ordered map over a worker pool; results come back in grid order."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# Scenario parameter schemas: name -> (kind, default)

_SCHEMAS: dict[str, dict[str, tuple[str, object]]] = {
    "gaussian_rate": {
        "a": ("float", 1.0),
        "b": ("float", 1.0),
        "t": ("float", 1.0),
        "k": ("int_list", [2, 3]),
        "n": ("int_list", [10**3, 10**4, 10**5, 10**6]),
    },
    "ab_identities": {
        "a": ("float_list", [0.5, 1.0, 2.0, 5.0]),
        "b": ("float_list", [0.5, 1.0, 2.0, 5.0]),
        "level_max": ("int", 5),
        "t": ("float_list", [0.1, 0.5, 1.0, 2.0]),
        "mc_samples": ("int", 10**6),
        "identity_powers": ("int_list", [0, 1, 2]),
    },
    "bound_tables": {
        "C0": ("float", 1.0),
        "gamma": ("float", 1.0),
        "M": ("float", 1.0),
        "T": ("float", 0.25),
        "b_sup": ("float", 1.0),
        "rho": ("float", 0.5),
        "ell": ("int", 4),
        "n": ("int_list", [100, 1000, 10000]),
        "k": ("int_list", list(range(1, 11))),
    },
    "simulate_validate": {
        "a": ("float", 1.0),
        "b": ("float", 1.0),
        "n": ("int", 256),
        "dt": ("float", 1e-3),
        "T": ("float", 1.0),
        "replicas": ("int", 32),
        "band_times": ("int", 10),
        "coupling_n": ("int_list", [64, 128, 256, 512]),
        "coupling_replicas": ("int", 32),
        "rank_n": ("int_list", [32, 64, 128]),
        "rank_reference_n": ("int", 256),
        "rank_replicas": ("int", 64),
        "rank_T": ("float", 0.5),
        "rank_dt": ("float", 2e-3),
    },
    "infrange_sweep": {
        "C0": ("float", 1.0),
        "T": ("float", 0.02),
        "k": ("int", 2),
        "n": ("int_list", [10**2, 10**3, 10**4, 10**5]),
        "rho": ("float", 0.5),
        "c2": ("float", 1.0),
        "q": ("float", 2.0),
        "eps": ("float", 0.2),
    },
}


def _coerce(kind: str, raw: str, where: str, errors: list[str]):
    def one(token: str, target: str):
        try:
            val = float(token)
        except ValueError:
            errors.append(f"{where}: not a number: {token!r}")
            return 0
        if target == "int":
            if val != int(val):
                errors.append(f"{where}: expected integer, got {token!r}")
                return 0
            return int(val)
        return val

    if kind == "float":
        return one(raw, "float")
    if kind == "int":
        return one(raw, "int")
    tokens = [tok.strip() for tok in raw.split(",") if tok.strip()]
    target = "int" if kind == "int_list" else "float"
    return [one(tok, target) for tok in tokens]


def load_scenario_params(scenario: str, section: dict[str, str]) -> dict:
    schema = _SCHEMAS[scenario]
    errors: list[str] = []
    for key in section:
        if key not in schema:
            errors.append(f"{scenario}.{key}: unknown key")
    params = {}
    for key, (kind, default) in schema.items():
        if key in section:
            params[key] = _coerce(kind, section[key], f"{scenario}.{key}", errors)
        else:
            params[key] = default
        if kind.endswith("_list") and not params[key]:
            errors.append(f"{scenario}.{key}: grid must be nonempty")
    if errors:
        raise ConfigError(errors)
    return params


# ---------------------------------------------------------------------------
# Scenarios


def _scenario_gaussian_rate(spec: ScenarioSpec) -> list[Path]:
    p = spec.params
    params = OUParams(p["a"], p["b"])
    t = p["t"]
    w2_lim = gaussian.w2_rate_limit(params, t)
    kl_lim = gaussian.kl_rate_limit(params, t)

    def point(nk):
        n, k = nk
        cov = gaussian.marginal(gaussian.ou_covariance(params, n, t), k)
        ref = gaussian.mean_field_reference(params, t, k)
        w2 = gaussian.w2_gaussian(cov, ref)
        kl = gaussian.kl_gaussian(cov, ref)
        scale = (n / k) ** 2
        return {
            "n": n, "k": k, "t": t, "w2_sq": w2, "kl": kl,
            "scaled_w2": scale * w2, "scaled_kl": scale * kl,
            "w2_limit": w2_lim, "kl_limit": kl_lim,
        }

    grid = [(n, k) for n in p["n"] for k in p["k"]]
    rows = _pmap(point, grid, spec.workers)
    schema = ["n", "k", "t", "w2_sq", "kl", "scaled_w2", "scaled_kl", "w2_limit", "kl_limit"]
    return [emit_report(rows, schema, spec.out_dir / "gaussian_rate.csv")]


def _scenario_ab_identities(spec: ScenarioSpec) -> list[Path]:
    p = spec.params
    levels = list(range(p["level_max"] + 1))
    pairs = [(a, b) for a in p["a"] for b in p["b"]]

    def rate_pair(item):
        idx, (a, b) = item
        ladder = bounds.RateLadder(a, b)
        mc_est, mc_se = bounds.hypoexp_cdf_montecarlo_grid(
            ladder, p["level_max"], p["t"], p["mc_samples"], spec.seed + idx
        )
        out = []
        for lvl in levels:
            for it, t in enumerate(p["t"]):
                closed = bounds.hypoexp_cdf(ladder, lvl, t)
                quad = bounds.hypoexp_cdf_quadrature(ladder, lvl, t)
                ub = bounds.hypoexp_cdf_bound(ladder, lvl, t)
                out.append({
                    "kind": "point", "a": a, "b": b, "level_or_power": lvl, "t": t,
                    "closed": closed, "quadrature": quad,
                    "montecarlo": float(mc_est[lvl, it]),
                    "mc_stderr": float(mc_se[lvl, it]), "upper_bound": ub,
                    "abs_diff": abs(closed - quad),
                    "rel_err": None,
                    "dominated": closed <= ub + 1e-12,
                    "cap_exceeded": False,
                })
        return out

    rows = [
        row for group in _pmap(rate_pair, list(enumerate(pairs)), spec.workers)
        for row in group
    ]

    id_grid = [
        (a, b, pw, t)
        for a in p["a"] for b in p["b"] for pw in p["identity_powers"] for t in p["t"]
    ]

    def identity_point(item):
        kind, (a, b, pw, t) = item
        ladder = bounds.RateLadder(a, b)
        base = {
            "kind": kind, "a": a, "b": b, "level_or_power": pw, "t": t,
            "closed": None, "quadrature": None, "montecarlo": None,
            "mc_stderr": None, "upper_bound": None, "abs_diff": None,
            "rel_err": None, "dominated": None, "cap_exceeded": False,
        }
        try:
            if kind == "gamma_a":
                closed, truncated = bounds.cdf_sum_identity(ladder, pw, t)
            else:
                closed, truncated = bounds.density_sum_identity(ladder, t)
        except bounds.ToleranceError:
            base["cap_exceeded"] = True
            return base
        base["closed"] = closed
        base["abs_diff"] = abs(closed - truncated)
        base["rel_err"] = abs(closed - truncated) / closed if closed else 0.0
        return base

    rows += _pmap(identity_point, [("gamma_a", g) for g in id_grid], spec.workers)
    b_grid = [(a, b, 0, t) for a in p["a"] for b in p["b"] for t in p["t"]]
    rows += _pmap(identity_point, [("gamma_b", g) for g in b_grid], spec.workers)

    max_quad_diff = max(r["abs_diff"] for r in rows if r["kind"] == "point")
    max_id_rel = max(
        (r["rel_err"] for r in rows if r["kind"] != "point" and r["rel_err"] is not None),
        default=0.0,
    )
    rows.append({
        "kind": "summary", "a": None, "b": None, "level_or_power": None, "t": None,
        "closed": None, "quadrature": None, "montecarlo": None, "mc_stderr": None,
        "upper_bound": None, "abs_diff": max_quad_diff, "rel_err": max_id_rel,
        "dominated": all(r["dominated"] for r in rows if r["kind"] == "point"),
        "cap_exceeded": any(r["cap_exceeded"] for r in rows if r["kind"] != "point"),
    })
    schema = [
        "kind", "a", "b", "level_or_power", "t", "closed", "quadrature",
        "montecarlo", "mc_stderr", "upper_bound", "abs_diff", "rel_err",
        "dominated", "cap_exceeded",
    ]
    return [emit_report(rows, schema, spec.out_dir / "ab_identities.csv")]


_BOUND_SCHEMA = [
    "bound", "n", "k", "ell", "C", "term_initial", "term_second", "term_tail",
    "term_exponential", "total", "precondition_slack", "precondition_failed",
]


def _bound_row(bound: str, n: int, k: int, ell=None) -> dict:
    return {
        "bound": bound, "n": n, "k": k, "ell": ell, "C": None,
        "term_initial": None, "term_second": None, "term_tail": None,
        "term_exponential": None, "total": None, "precondition_slack": None,
        "precondition_failed": False,
    }


def _scenario_bound_tables(spec: ScenarioSpec) -> list[Path]:
    p = spec.params
    series = SeriesCoefficients.geometric(p["rho"])

    def point(nk):
        n, k = nk
        out = []
        row = _bound_row("pairwise", n, k)
        row["precondition_slack"] = n - 6.0 * math.exp(p["gamma"] * p["T"])
        try:
            rep = bounds.entropy_bound_pairwise(
                bounds.BoundInputs(C0=p["C0"], gamma=p["gamma"], M=p["M"], T=p["T"], n=n, k=k)
            )
            row.update({
                "C": rep.constants["C"],
                "term_initial": rep.terms["k_over_n_squared"],
                "term_exponential": rep.terms["exponential"],
                "total": rep.total,
            })
        except bounds.PreconditionError:
            row["precondition_failed"] = True
        out.append(row)

        rep = bounds.entropy_bound_reversed(p["C0"], p["b_sup"], p["T"], n, k)
        row = _bound_row("reversed", n, k)
        row.update({
            "C": rep.constants["C"],
            "term_initial": rep.terms["k_over_n_squared"],
            "term_exponential": rep.terms["exponential"],
            "total": rep.total,
        })
        out.append(row)

        row = _bound_row("higher_order", n, k, ell=p["ell"])
        try:
            rep = bounds.entropy_bound_higher_order(p["C0"], series, p["T"], n, k, p["ell"])
            row.update({
                "term_initial": rep.terms["initial"],
                "term_second": rep.terms["second_order"],
                "term_tail": rep.terms["series_tail"],
                "term_exponential": rep.terms["exponential"],
                "total": rep.total,
                "precondition_slack": rep.constants["precondition_slack"],
            })
        except bounds.PreconditionError:
            row["precondition_failed"] = True
        out.append(row)
        return out

    grid = [(n, k) for n in p["n"] for k in p["k"]]
    nested = _pmap(point, grid, spec.workers)
    rows = [row for group in nested for row in group]
    return [emit_report(rows, _BOUND_SCHEMA, spec.out_dir / "bound_tables.csv")]


def _scenario_simulate_validate(spec: ScenarioSpec) -> list[Path]:
    p = spec.params
    if p["replicas"] < 2 or p["coupling_replicas"] < 2:
        raise ConfigError(["simulate_validate.replicas: need at least 2 for bands"])
    params = OUParams(p["a"], p["b"])
    cfg = ExperimentConfig(
        n=p["n"], k=p["n"], d=1, T=p["T"], dt=p["dt"], replicas=p["replicas"],
        seed=spec.seed, drift=ou_drift(p["a"], p["b"]),
        init=InitialCondition.dirac_zero(),
    )
    ensembles = _pmap(
        lambda r: simulate.simulate_particles(cfg, replica=r),
        list(range(p["replicas"])), spec.workers,
    )
    steps = cfg.steps
    z99 = 2.5758293035489004  # two-sided 99% normal quantile
    band_rows = []
    for j in range(1, p["band_times"] + 1):
        idx = j * steps // p["band_times"]
        t = idx * p["dt"]
        fit = metrics.fit_exchangeable_cov(ensembles, idx, k=p["n"])
        cov = gaussian.ou_covariance(params, p["n"], t)
        v_in = abs(fit.v - cov.v) <= z99 * fit.v_se
        c_in = abs(fit.c - cov.c) <= z99 * fit.c_se
        band_rows.append({
            "t_index": idx, "t": t, "v_hat": fit.v, "v_se": fit.v_se,
            "v_theory": cov.v, "v_in_band": v_in, "c_hat": fit.c,
            "c_se": fit.c_se, "c_theory": cov.c, "c_in_band": c_in,
        })
    band_schema = [
        "t_index", "t", "v_hat", "v_se", "v_theory", "v_in_band",
        "c_hat", "c_se", "c_theory", "c_in_band",
    ]
    files = [emit_report(band_rows, band_schema, spec.out_dir / "simulate_bands.csv")]

    def coupling_gap(n):
        from dataclasses import replace

        sub = replace(cfg, n=n, k=min(cfg.k, n), replicas=p["coupling_replicas"])
        gaps = [
            simulate.simulate_coupled(sub, replica=r).mean_square_gap()
            for r in range(p["coupling_replicas"])
        ]
        return float(np.mean(gaps))

    gaps = _pmap(coupling_gap, p["coupling_n"], spec.workers)
    slope = float(np.polyfit(np.log(p["coupling_n"]), np.log(gaps), 1)[0])
    coupling_rows = [
        {"n": n, "mean_square_gap": g, "loglog_slope": slope}
        for n, g in zip(p["coupling_n"], gaps)
    ]
    files.append(emit_report(
        coupling_rows, ["n", "mean_square_gap", "loglog_slope"],
        spec.out_dir / "simulate_coupling.csv",
    ))

    from .model import DriftSpec, Pairwise

    def rank_cfg(n):
        return ExperimentConfig(
            n=n, k=1, d=1, T=p["rank_T"], dt=p["rank_dt"], replicas=p["rank_replicas"],
            seed=spec.seed,
            drift=DriftSpec(interaction=Pairwise(kind="rank_indicator")),
            init=InitialCondition.dirac_zero(),
        )

    def first_particle_sample(n):
        cfgn = rank_cfg(n)
        return np.array([
            simulate.simulate_particles(cfgn, replica=r).state(-1)[0, 0]
            for r in range(p["rank_replicas"])
        ])

    sizes = list(p["rank_n"]) + [p["rank_reference_n"]]
    samples = _pmap(first_particle_sample, sizes, spec.workers)
    reference = samples[-1]
    rank_rows = [
        {"n": n, "w1_to_reference": metrics.w1_sorted_1d(sample, reference)}
        for n, sample in zip(p["rank_n"], samples[:-1])
    ]
    files.append(emit_report(
        rank_rows, ["n", "w1_to_reference"], spec.out_dir / "simulate_rank_w1.csv",
    ))
    return files


def _scenario_infrange_sweep(spec: ScenarioSpec) -> list[Path]:
    p = spec.params
    families = [
        ("geometric", SeriesCoefficients.geometric(p["rho"]), "subexp", None),
        (
            "super_geometric",
            SeriesCoefficients.super_geometric(0.0, p["c2"], p["q"]),
            "subexp_q",
            p["eps"],
        ),
    ]
    rows = []
    for name, series, mode, eps in families:
        for n in p["n"]:
            ell, exponent = bounds.select_truncation_order(
                series, p["T"], n, p["k"], mode, eps
            )
            stats = bounds.series_stats(series, p_list=(0, 2), x_list=(float(ell),))
            row = {
                "family": name, "n": n, "k": p["k"], "T": p["T"], "ell": ell,
                "predicted_exponent": exponent,
                "mass": stats.moments[0], "second_moment": stats.moments[2],
                "tail_at_ell": stats.tails[float(ell)],
                "term_initial": None, "term_second": None, "term_tail": None,
                "term_exponential": None, "total": None, "precondition_failed": False,
            }
            try:
                rep = bounds.entropy_bound_higher_order(
                    p["C0"], series, p["T"], n, p["k"], ell
                )
                row.update({
                    "term_initial": rep.terms["initial"],
                    "term_second": rep.terms["second_order"],
                    "term_tail": rep.terms["series_tail"],
                    "term_exponential": rep.terms["exponential"],
                    "total": rep.total,
                })
            except bounds.PreconditionError:
                row["precondition_failed"] = True
            rows.append(row)
    schema = [
        "family", "n", "k", "T", "ell", "predicted_exponent", "mass",
        "second_moment", "tail_at_ell", "term_initial", "term_second",
        "term_tail", "term_exponential", "total", "precondition_failed",
    ]
    return [emit_report(rows, schema, spec.out_dir / "infrange_sweep.csv")]


_RUNNERS = {
    "gaussian_rate": _scenario_gaussian_rate,
    "ab_identities": _scenario_ab_identities,
    "bound_tables": _scenario_bound_tables,
    "simulate_validate": _scenario_simulate_validate,
    "infrange_sweep": _scenario_infrange_sweep,
}


def run_scenario(spec: ScenarioSpec) -> list[Path]:
    """Run one scenario; returns the written report files."""
    if spec.scenario not in _RUNNERS:
        raise ConfigError([f"unknown scenario {spec.scenario!r}"])
    spec.out_dir.mkdir(parents=True, exist_ok=True)
    start = time.monotonic()
    if not spec.quiet:
        print(f"chaoskit: running {spec.scenario} (seed={spec.seed}, "
              f"workers={spec.workers}, backend={backend.active_backend()})")
    files = _RUNNERS[spec.scenario](spec)
    files.append(emit_manifest(spec, files, time.monotonic() - start))
    if not spec.quiet:
        for f in files:
            print(f"chaoskit: wrote {f}")
    return files


# ---------------------------------------------------------------------------
# Entry point


def build_spec(args: argparse.Namespace) -> ScenarioSpec:
    sections: dict[str, dict[str, str]] = {}
    if args.config:
        sections = parse_sections(Path(args.config).read_text(encoding="utf-8"))
        unknown = set(sections) - ({"scenario"} | set(SCENARIOS))
        if unknown:
            raise ConfigError([f"unknown section [{name}]" for name in sorted(unknown)])
    meta = sections.get("scenario", {})
    extra = set(meta) - {"name", "seed", "out", "workers"}
    if extra:
        raise ConfigError([f"scenario.{key}: unknown key" for key in sorted(extra)])
    scenario = args.scenario or meta.get("name")
    if not scenario:
        raise ConfigError(["no scenario given (use --scenario or [scenario] name)"])
    if scenario not in SCENARIOS:
        raise ConfigError([f"unknown scenario {scenario!r}"])
    errors: list[str] = []
    seed = args.seed if args.seed is not None else _coerce(
        "int", meta.get("seed", "0"), "scenario.seed", errors
    )
    workers = args.workers
    if workers is None and "workers" in meta:
        workers = _coerce("int", meta["workers"], "scenario.workers", errors)
    if workers is None:
        env = os.environ.get("CHAOSKIT_WORKERS", "").strip()
        if env:
            workers = _coerce("int", env, "CHAOSKIT_WORKERS", errors)
    if errors:
        raise ConfigError(errors)
    out_dir = Path(args.out or meta.get("out", "chaoskit_out"))
    params = load_scenario_params(scenario, sections.get(scenario, {}))
    return ScenarioSpec(
        scenario=scenario, params=params, out_dir=out_dir, seed=int(seed),
        workers=int(workers) if workers else 1, quiet=args.quiet,
    )


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chaoskit",
        description="Mean-field particle simulation and chaos-decay reports",
    )
    parser.add_argument("--scenario", choices=SCENARIOS, help="scenario to run")
    parser.add_argument("--config", help="config file path")
    parser.add_argument("--out", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="base seed (64-bit)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker pool size (default: CHAOSKIT_WORKERS or 1)")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        spec = build_spec(args)
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"chaoskit: config error: {diag}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"chaoskit: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        run_scenario(spec)
    except ConfigError as exc:
        for diag in exc.diagnostics:
            print(f"chaoskit: config error: {diag}", file=sys.stderr)
        return EXIT_CONFIG
    except (simulate.SimulationError, bounds.ToleranceError, FloatingPointError) as exc:
        try:
            spec.out_dir.mkdir(parents=True, exist_ok=True)
            (spec.out_dir / "error.txt").write_text(f"{type(exc).__name__}: {exc}\n")
        except OSError:
            pass
        print(f"chaoskit: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"chaoskit: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
