"""Command-line entry point.

Each subcommand reads a JSON config, fills defaults, writes its tables and
documents into ``--out`` and finishes with ``manifest.json``. The manifest
echoes the effective config and the digests of all inputs and outputs.
``--threads`` only affects speed, so it is left out of the manifest.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .abm import AGENT_COLUMNS, EDGE_COLUMNS, agent_rows, compare_to_analytic, edge_rows, init_population, run_until_stable
from .analytics.graph import STAT_COLUMNS, load_edges, network_stats
from .analytics.series import (
    DISTRIBUTION_COLUMNS,
    distribution_rows,
    followee_ability_distributions,
    percentile_series,
)
from .analytics.stats import kde, kde_grid, normalize_unit
from .analytics.users import FilterConfig, ability_index, apply_filters, load_users, tenure_regression
from .core import CURVE_COLUMNS, ModelParams
from .errors import ConfigError, ConvergenceError, DataError, DomainError
from .heterogeneous import best_response_residual, hetero_outcome_curve, reciprocal_profile, solve_fixed_point
from .homogeneous import (
    FolloweeRange,
    StoppingRule,
    equilibrium_document,
    equilibrium_from_document,
    followee_ability_ranges,
    outcome_curve,
    solve_clubs,
    verify_equilibrium,
)
from .io import file_digest, write_document, write_table
from .synth import SynthConfig, synth_graph

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_DATA = 0, 2, 3, 4

_REQUIRED = object()

DEFAULTS: dict[str, dict[str, Any]] = {
    "solve": {
        "params": _REQUIRED,
        "stopping": "literal",
        "grid_size": 1001,
        "verify": {"n_grid": 200, "epsilon": 1e-3},
    },
    "solve-het": {
        "params": _REQUIRED,
        "grid_size": 201,
        "damping": 0.5,
        "tol": 1e-8,
        "max_iter": 10_000,
    },
    "simulate": {
        "params": None,
        "equilibrium": None,
        "stopping": "literal",
        "n": 1000,
        "placement": "iid_uniform",
        "max_sweeps": 200,
        "band_tol": 0.05,
        "seed": 0,
    },
    "synth": {
        "params": None,
        "equilibrium": None,
        "stopping": "literal",
        "synth": {},
        "seed": 0,
    },
    "analyze": {
        "edges": _REQUIRED,
        "users": None,
        "edges_has_header": True,
        "strict": False,
        "filters": FilterConfig.sample_defaults().to_mapping(),
        "bins": 100,
        "kde_points": 512,
        "list_offset": 1.0,
        "extra_regressors": [],
    },
    "verify": {
        "params": None,
        "equilibrium": None,
        "stopping": "literal",
        "n_grid": 200,
        "epsilon": 1e-3,
    },
}

# Sub-documents whose keys are validated by their own parsers.
_OPAQUE = {"params", "synth", "filters", "stopping"}


def _merge(defaults: dict, given: dict, prefix: str = "") -> dict:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(prefix + k for k in unknown)}")
    out = {}
    for key, default in defaults.items():
        if key in given:
            value = given[key]
            if isinstance(default, dict) and key not in _OPAQUE:
                if not isinstance(value, dict):
                    raise ConfigError(f"config key {prefix + key} must be an object")
                value = _merge(default, value, prefix + key + ".")
            elif isinstance(default, dict) and key == "filters" and isinstance(value, dict):
                value = {**default, **value}
            out[key] = value
        elif default is _REQUIRED:
            raise ConfigError(f"missing required config key: {prefix + key}")
        else:
            out[key] = copy.deepcopy(default)
    return out


def _apply_override(doc: dict, assignment: str) -> None:
    if "=" not in assignment:
        raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = key.split(".")
    node = doc
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part} is not an object")
    node[parts[-1]] = value


class Run:
    """State of one command invocation: config, paths, inputs and outputs."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.out = Path(args.out)
        self.threads = max(1, int(args.threads))
        given: dict = {}
        self.base = Path.cwd()
        if args.config:
            cfg_path = Path(args.config)
            try:
                given = json.loads(cfg_path.read_text())
            except FileNotFoundError as exc:
                raise ConfigError(f"config file not found: {cfg_path}") from exc
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {cfg_path} is not valid JSON: {exc}") from exc
            if not isinstance(given, dict):
                raise ConfigError("config document must be a JSON object")
            self.base = cfg_path.resolve().parent
        for assignment in args.set or ():
            _apply_override(given, assignment)
        if args.seed is not None:
            if "seed" not in DEFAULTS[command]:
                raise ConfigError(f"{command} takes no seed")
            given["seed"] = args.seed
        self.config = _merge(DEFAULTS[command], given)
        if "seed" in self.config:
            seed = self.config["seed"]
            if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
                raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []

    def input_path(self, key: str) -> Path:
        given = self.config[key]
        path = Path(given)
        if not path.is_absolute():
            path = self.base / path
        if not path.is_file():
            raise DataError(f"{key} file not found: {given}")
        self.inputs[key] = {"path": str(given), "sha256": file_digest(path)}
        return path

    def table(self, name: str, columns, rows) -> None:
        write_table(self.out / name, columns, rows)
        self.outputs.append(name)

    def document(self, name: str, doc) -> None:
        write_document(self.out / name, doc)
        self.outputs.append(name)

    def finish(self) -> None:
        manifest = {
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": {name: file_digest(self.out / name) for name in sorted(self.outputs)},
        }
        write_document(self.out / "manifest.json", manifest)


def _params(run: Run) -> ModelParams:
    doc = run.config["params"]
    if not isinstance(doc, dict):
        raise ConfigError("config key params must be an object")
    return ModelParams.from_mapping(doc)


def _equilibrium(run: Run):
    """Equilibrium from a document path, or solved from params and stopping."""
    if run.config.get("equilibrium"):
        path = run.input_path("equilibrium")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"equilibrium file is not valid JSON: {exc}") from exc
        return equilibrium_from_document(doc)
    if run.config.get("params") is None:
        raise ConfigError("missing required config key: params (or equilibrium)")
    return solve_clubs(_params(run), StoppingRule.parse(run.config["stopping"]))


def _int(run: Run, key: str, minimum: int) -> int:
    value = run.config[key]
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{key} must be an integer >= {minimum}, got {value!r}")
    return value


def cmd_solve(run: Run) -> int:
    params = _params(run)
    eq = solve_clubs(params, StoppingRule.parse(run.config["stopping"]))
    grid = np.linspace(0.0, 1.0, _int(run, "grid_size", 2))
    curve = outcome_curve(eq, grid)
    report = verify_equilibrium(
        eq, n_grid=run.config["verify"]["n_grid"], epsilon=run.config["verify"]["epsilon"], threads=run.threads
    )
    run.document("equilibrium.json", equilibrium_document(eq))
    run.table("curve.csv", CURVE_COLUMNS, curve.rows())
    run.table("followee_ranges.csv", FolloweeRange.COLUMNS, [r.row() for r in followee_ability_ranges(eq, grid)])
    run.document("verification.json", report.to_mapping())
    run.finish()
    print(f"{len(eq.clubs)} clubs, lurker threshold {eq.lurker_threshold:.6f}, max deviation gain {report.max_gain:.3e}")
    return EXIT_OK


def cmd_solve_het(run: Run) -> int:
    params = _params(run)
    cfg = run.config
    profile = solve_fixed_point(
        params,
        grid_size=_int(run, "grid_size", 3),
        damping=cfg["damping"],
        tol=cfg["tol"],
        max_iter=_int(run, "max_iter", 1),
    )
    r = reciprocal_profile(profile)
    residual = best_response_residual(profile, params)
    run.table(
        "profile.csv",
        ("ability", "threshold", "reciprocal"),
        zip(profile.grid.tolist(), profile.thresholds.tolist(), r.tolist()),
    )
    curve = hetero_outcome_curve(profile, params)
    run.table(
        "curve.csv",
        (*CURVE_COLUMNS, "threshold"),
        ((*row, f) for row, f in zip(curve.rows(), profile.thresholds.tolist())),
    )
    run.document(
        "solution.json",
        {"iterations": profile.iterations, "last_change": profile.last_change, "best_response_residual": residual},
    )
    run.finish()
    print(f"converged in {profile.iterations} sweeps, best-response residual {residual:.3e}")
    return EXIT_OK


def cmd_simulate(run: Run) -> int:
    cfg = run.config
    eq = _equilibrium(run)
    params = eq.params
    state = init_population(_int(run, "n", 2), cfg["seed"], params, cfg["placement"])
    result = run_until_stable(state, _int(run, "max_sweeps", 1), np.random.default_rng(cfg["seed"]))
    comparison = compare_to_analytic(result.final_state, eq, cfg["band_tol"])
    run.table("agents.csv", AGENT_COLUMNS, agent_rows(result.final_state))
    run.table("edges.csv", EDGE_COLUMNS, edge_rows(result.final_state))
    run.document(
        "comparison.json",
        {
            "converged": result.converged,
            "sweeps_used": result.sweeps_used,
            "changes_per_sweep": result.changes_per_sweep,
            "equilibrium": equilibrium_document(eq),
            **comparison.to_mapping(),
        },
    )
    run.finish()
    print(
        f"converged={result.converged} after {result.sweeps_used} sweeps, "
        f"in-band fraction {comparison.in_band_fraction:.4f}"
    )
    if not result.converged:
        raise ConvergenceError(f"simulation did not settle within {result.sweeps_used} sweeps")
    return EXIT_OK


def cmd_synth(run: Run) -> int:
    cfg = run.config
    eq = _equilibrium(run)
    if not isinstance(cfg["synth"], dict):
        raise ConfigError("config key synth must be an object")
    scfg = SynthConfig.from_mapping(cfg["synth"])
    run.config["synth"] = scfg.to_mapping()
    data = synth_graph(eq, scfg, cfg["seed"])
    run.out.mkdir(parents=True, exist_ok=True)
    data.edge_frame().to_csv(run.out / "edges.csv", index=False, lineterminator="\n")
    run.outputs.append("edges.csv")
    data.users.to_csv(run.out / "users.csv", index=False, lineterminator="\n")
    run.outputs.append("users.csv")
    clubs = [eq.club_index(a) for a in data.ability]
    run.table(
        "truth.csv",
        ("id", "ability", "club"),
        ((i, float(a), "" if k is None else k) for i, a, k in zip(data.ids, data.ability, clubs)),
    )
    run.document("synth.json", {"list_log_base_effective": data.base, "equilibrium": equilibrium_document(eq)})
    run.finish()
    print(f"{len(data.ids)} users, {data.src.size} edges")
    return EXIT_OK


def _kde_rows(name: str, sample, points: int):
    sample = np.asarray(sample, dtype=float)
    if sample.size < 2 or not np.std(sample) > 0:
        return [], (name, int(sample.size), float("nan"), float("nan"), float("nan"))
    res = kde(sample, kde_grid(sample, points))
    rows = [(name, float(x), float(d)) for x, d in zip(res.grid, res.density)]
    return rows, (name, int(sample.size), res.bandwidth, res.median, res.mean)


def cmd_analyze(run: Run) -> int:
    cfg = run.config
    edges_path = run.input_path("edges")
    if cfg["users"] is None:
        raise DataError("analyze needs a users file to build the ability index")
    users_path = run.input_path("users")
    users = load_users(users_path)
    graph = load_edges(edges_path, has_header=bool(cfg["edges_has_header"]), strict=bool(cfg["strict"]))
    if not isinstance(cfg["filters"], dict):
        raise ConfigError("config key filters must be an object")
    filters = FilterConfig.from_mapping(cfg["filters"])
    kept = apply_filters(graph, users, filters)
    if len(kept.retained) < 2:
        raise DataError(f"only {len(kept.retained)} users pass the filters")
    sample = users[users["id"].isin(set(kept.retained))].sort_values("id").reset_index(drop=True)
    sub = graph.subgraph(kept.retained)
    ability = ability_index(sample, offset=cfg["list_offset"], extra_regressors=tuple(cfg["extra_regressors"]))
    lookup = ability.lookup()
    stats = network_stats(sub)
    pct = np.array([lookup[i] for i in stats.ids])
    bins = _int(run, "bins", 1)

    run.table(
        "network_stats.csv",
        (*STAT_COLUMNS, "percentile"),
        ((*stats.row_values(k), float(pct[k])) for k in range(len(stats.ids))),
    )
    series_rows = []
    for metric in STAT_COLUMNS[1:]:
        series = percentile_series(getattr(stats, metric), pct, bins)
        scaled = normalize_unit(series.mean)
        for row, s in zip(series.rows(), scaled):
            series_rows.append((metric, *row, float(s)))
    run.table("percentile_series.csv", ("metric", "bin", "mean", "ci_low", "ci_high", "n", "mean_scaled"), series_rows)
    dist = followee_ability_distributions(sub, lookup, bins)
    run.table("followee_abilities.csv", DISTRIBUTION_COLUMNS, distribution_rows(dist))

    kde_rows, summary_rows = [], []
    for metric in ("followers", "followees", "ratio"):
        values = getattr(stats, metric)
        positive = values[np.isfinite(values) & (values > 0)]
        rows, summary = _kde_rows(f"log10_{metric}", np.log10(positive), int(cfg["kde_points"]))
        kde_rows.extend(rows)
        summary_rows.append(summary)
    run.table("kde.csv", ("variable", "x", "density"), kde_rows)
    run.table("kde_summary.csv", ("variable", "n", "bandwidth", "median", "mean"), summary_rows)
    run.document(
        "regressions.json",
        {
            "ability_index": ability.diagnostics(),
            "ability_on_tenure": tenure_regression(sample, ability),
            "filters": {"dropped": kept.dropped, "total": kept.total, "retained": len(kept.retained)},
            "graph": {**graph.diagnostics, **stats.diagnostics, "nodes": sub.n_nodes, "edges": sub.n_edges},
        },
    )
    run.finish()
    print(f"{len(kept.retained)} users analysed, {sub.n_edges} edges")
    return EXIT_OK


def cmd_verify(run: Run) -> int:
    eq = _equilibrium(run)
    report = verify_equilibrium(eq, n_grid=_int(run, "n_grid", 1), epsilon=run.config["epsilon"], threads=run.threads)
    run.document("verification.json", report.to_mapping())
    run.finish()
    print(f"max deviation gain {report.max_gain:.3e} ({'pass' if report.passed else 'fail'} at {report.epsilon})")
    return EXIT_OK


COMMANDS: dict[str, tuple[Callable[[Run], int], str]] = {
    "solve": (cmd_solve, "solve the homogeneous club equilibrium"),
    "solve-het": (cmd_solve_het, "solve the heterogeneous-preference threshold fixed point"),
    "simulate": (cmd_simulate, "run the agent-based best-response simulation"),
    "synth": (cmd_synth, "generate a synthetic follower graph and user table"),
    "analyze": (cmd_analyze, "compute network statistics and percentile series"),
    "verify": (cmd_verify, "brute-force check an equilibrium for profitable deviations"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--seed", type=int, help="random seed, overrides the config")
    common.add_argument("--threads", type=int, default=1, help="worker threads; never changes outputs")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (JSON value)")
    parser = argparse.ArgumentParser(prog="attnbarter", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = Run(args.command, args)
        return COMMANDS[args.command][0](run)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
