"""Command-line entry point.

Subcommands: simulate | compare | ensemble | conditions | radius.  Each reads
one TOML config and writes its outputs plus a manifest (config copy, seeds,
versions) into the --out run directory.

Exit status: 0 success, 1 configuration/usage error, 2 numerical divergence,
3 statistics not converged.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import (
    build_functional_set,
    build_initial_state,
    build_setup,
    build_trajectory_config,
    load_toml,
)
from .determining import check_conditions, compute_condition_coefficients
from .dynamics import make_forcing, simulate
from .errors import ConfigurationError, DivergenceError, StatisticsError
from .harness import estimate_absorbing_radius, run_comparison, run_ensemble
from .runio import (
    ensure_run_dir,
    radius_report_text,
    write_comparison_csv,
    write_ensemble_csv,
    write_keyvalues,
    write_manifest,
    write_radius_csv,
    write_text,
    write_timeseries_csv,
)
from .spectral import field_from_coeffs, random_band_limited, write_snapshot
from .twolayer import LayerState

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DIVERGED = 2
EXIT_STATISTICS = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit status 1, not 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="stochqg", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add(name: str, need_out: bool) -> argparse.ArgumentParser:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument(
            "--out",
            required=need_out,
            default=None,
            help="run directory for outputs and the manifest",
        )
        return p

    add("simulate", True)
    add("compare", True)
    add("ensemble", True)
    cond = add("conditions", False)
    cond.add_argument("--deterministic-limit", action="store_true")
    cond.add_argument("--family", choices=("modes", "nodes"), default=None)
    cond.add_argument("--target-epsilon", type=float, default=None)
    add("radius", True)
    return parser


def _seed_summary(setup, extra: dict | None = None) -> dict:
    seeds = {"base_seed": setup.noise.base_seed}
    if extra:
        seeds.update(extra)
    return seeds


def _load(args):
    doc = load_toml(args.config)
    return doc, build_setup(doc, config_dir=Path(args.config).parent)


def _cmd_simulate(args) -> int:
    doc, setup = _load(args)
    cfg = build_trajectory_config(setup)
    initial = build_initial_state(setup, config_dir=Path(args.config).parent)
    result = simulate(cfg, initial)
    out = ensure_run_dir(args.out)
    write_timeseries_csv(out / "timeseries.csv", result)
    final = result.final_state
    write_snapshot(out / "final_state.qg2s", [final.q1.values(), final.q2.values()])
    write_manifest(out, "simulate", doc, _seed_summary(setup, {"member": cfg.member}))
    print(
        f"simulate: {len(result.times)} samples to t={result.times[-1]:g} "
        f"({result.formulation}); final star-norm^2 {result.star_norm_sq[-1]:.6g}"
    )
    return EXIT_OK


def _comparison_inputs(args, doc, setup):
    cfg = build_trajectory_config(setup)
    if cfg.formulation != "transformed":
        raise ConfigurationError("compare/ensemble run the transformed formulation only")
    comp = doc.get("comparison", {})
    perturbation = float(comp.get("perturbation", 1e-3))
    pseed = int(comp.get("perturbation_seed", 4096))
    window = float(comp.get("window", 1.0))
    initial_a = build_initial_state(setup, config_dir=Path(args.config).parent)
    p1 = random_band_limited(setup.grid, 2 * pseed, amplitude=perturbation)
    p2 = random_band_limited(setup.grid, 2 * pseed + 1, amplitude=perturbation)
    initial_b = LayerState(
        field_from_coeffs(setup.grid, initial_a.q1.coeffs + p1.coeffs),
        field_from_coeffs(setup.grid, initial_a.q2.coeffs + p2.coeffs),
    )
    fset = build_functional_set(setup)
    seeds = {"member": cfg.member, "perturbation_seed": pseed}
    return cfg, initial_a, initial_b, fset, window, seeds


def _cmd_compare(args) -> int:
    doc, setup = _load(args)
    cfg, ia, ib, fset, window, seeds = _comparison_inputs(args, doc, setup)
    rec = run_comparison(cfg, ia, ib, fset=fset, window=window)
    out = ensure_run_dir(args.out)
    write_comparison_csv(out / "comparison.csv", rec)
    write_manifest(out, "compare", doc, _seed_summary(setup, seeds))
    if rec.diverged:
        print(f"compare: diverged at t={rec.divergence_time:g}; partial record written")
        return EXIT_DIVERGED
    print(
        f"compare: V(0)={rec.v[0]:.6g} -> V(T)={rec.v[-1]:.6g} "
        f"over {len(rec.times)} samples"
    )
    return EXIT_OK


def _cmd_ensemble(args) -> int:
    doc, setup = _load(args)
    cfg, ia, ib, fset, window, seeds = _comparison_inputs(args, doc, setup)
    ens = doc.get("ensemble", {})
    members = int(ens.get("members", 20))
    workers = ens.get("workers")
    v_threshold = ens.get("v_threshold")
    summary = run_ensemble(
        cfg,
        ia,
        ib,
        fset=fset,
        members=members,
        window=window,
        v_threshold=None if v_threshold is None else float(v_threshold),
        workers=None if workers is None else int(workers),
    )
    out = ensure_run_dir(args.out)
    write_ensemble_csv(out / "ensemble.csv", summary)
    seeds["members"] = members
    write_manifest(out, "ensemble", doc, _seed_summary(setup, seeds))
    line = (
        f"ensemble: {summary.survivors}/{summary.members} members, "
        f"median V(T)={summary.v_quantiles[1, -1]:.6g}"
    )
    if summary.below_threshold_fraction is not None:
        line += f", fraction below threshold {summary.below_threshold_fraction:.3g}"
    print(line)
    return EXIT_OK


def _cmd_conditions(args) -> int:
    doc, setup = _load(args)
    table = doc.get("conditions", {})
    deterministic = bool(args.deterministic_limit or table.get("deterministic_limit", False))
    family = args.family or table.get("family", "modes")
    target_eps = args.target_epsilon
    if target_eps is None and "target_epsilon" in table:
        target_eps = float(table["target_epsilon"])
    forcing_field = make_forcing(setup.forcing, setup.grid, setup.dp)
    fset = build_functional_set(setup)
    report = check_conditions(
        setup.dp,
        setup.noise,
        setup.grid,
        forcing_field,
        functional_set=fset,
        target_epsilon=target_eps,
        family=family,
        deterministic_limit=deterministic,
        samples=int(table.get("samples", 2000)),
        radius_paths=int(table.get("radius_paths", 48)),
        radius_factor=float(table.get("radius_factor", 4.0 / 3.0)),
        horizon=table.get("horizon"),
        dtau=table.get("dtau"),
    )
    text = report.to_text()
    print(text)
    if args.out is not None:
        out = ensure_run_dir(args.out)
        write_text(out / "conditions.txt", text + "\n")
        write_keyvalues(out / "conditions.kv", report.to_keyvalues())
        write_manifest(out, "conditions", doc, _seed_summary(setup))
    if not report.sigma.radius_converged:
        print("conditions: absorbing-radius sampling DID NOT converge", file=sys.stderr)
        return EXIT_STATISTICS
    return EXIT_OK


def _cmd_radius(args) -> int:
    doc, setup = _load(args)
    table = doc.get("radius", {})
    forcing_field = make_forcing(setup.forcing, setup.grid, setup.dp)
    coeffs = compute_condition_coefficients(setup.dp, setup.noise.k, forcing_field)
    estimate = estimate_absorbing_radius(
        setup.dp,
        setup.noise,
        setup.grid,
        coeffs,
        paths=int(table.get("paths", 48)),
        horizon=table.get("horizon"),
        dtau=table.get("dtau"),
    )
    out = ensure_run_dir(args.out)
    write_radius_csv(out / "radius.csv", estimate)
    text = radius_report_text(estimate)
    write_text(out / "radius.txt", text)
    write_manifest(out, "radius", doc, _seed_summary(setup))
    print(text, end="")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "ensemble": _cmd_ensemble,
    "conditions": _cmd_conditions,
    "radius": _cmd_radius,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            print("stochqg: a subcommand is required", file=sys.stderr)
            return EXIT_CONFIG
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"stochqg: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigurationError as exc:
        print(f"stochqg: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"stochqg: numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except StatisticsError as exc:
        print(f"stochqg: statistics not converged: {exc}", file=sys.stderr)
        return EXIT_STATISTICS


if __name__ == "__main__":
    sys.exit(main())
