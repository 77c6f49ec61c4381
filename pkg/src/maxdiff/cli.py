"""Command-line entry point: design, diagnose, simulate, fit, report, power,
compare, serve.

All randomness flows from an explicit --seed (default 1729, never the
clock), so rerunning a command with the same flags writes byte-identical
output files. Every JSON artifact carries a ``meta`` block with the seed
and tool version; CSV artifacts carry them as columns.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .design import design_diagnostics, design_from_dict, design_to_dict, generate_design
from .domain import (
    BEST_ONLY,
    DEFAULT_SEED,
    RESPONSE_MODES,
    TOP_CHOICE,
    Dataset,
    DesignSpec,
    MaxDiffError,
    chance_cutoff,
    read_items_csv,
    read_responses_csv,
    validate_dataset,
    write_responses_csv,
)
from .estimator import (
    FitOptions,
    bootstrap_shares,
    fit,
    fit_result_to_dict,
    with_intervals,
)
from .simulator import (
    PopulationSpec,
    compare_methods,
    comparison_to_csv,
    comparison_to_dict,
    default_items,
    draw_population,
    power_analysis,
    power_table_to_csv,
    power_table_to_dict,
    simulate_dataset,
)


def _meta(seed: int) -> dict:
    return {"seed": seed, "tool_version": __version__}


def _dump_json(doc: dict, path: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _write_text(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _parse_utilities(args, n_items: int) -> np.ndarray:
    if args.utilities:
        values = np.array([float(x) for x in args.utilities.split(",")])
        if len(values) != n_items:
            raise MaxDiffError(
                f"--utilities has {len(values)} values, expected {n_items}"
            )
        return values
    if args.span:
        return np.linspace(-args.span / 2, args.span / 2, n_items)
    return np.zeros(n_items)


def render_report(result_doc: dict, fmt: str = "text") -> str:
    """Render an exported fit result as text, CSV, or JSON."""
    rows = sorted(result_doc["shares"], key=lambda r: r["rank"])
    cutoff = result_doc["chance_cutoff"]
    if fmt == "json":
        return json.dumps(result_doc, indent=2, sort_keys=True) + "\n"
    if fmt == "csv":
        lines = ["rank,id,share,ci_low,ci_high,above_chance"]
        for r in rows:
            ci_low = "" if "ci_low" not in r else repr(r["ci_low"])
            ci_high = "" if "ci_high" not in r else repr(r["ci_high"])
            lines.append(
                f"{r['rank']},{r['id']},{r['share']!r},{ci_low},{ci_high},"
                f"{str(r['above_chance']).lower()}"
            )
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise MaxDiffError(f"unknown report format {fmt!r}")
    width = max([len(r["id"]) for r in rows] + [4])
    lines = [f"{'rank':>4}  {'id':<{width}}  {'share':>7}  {'95% CI':>17}  flag"]
    for r in rows:
        ci = ""
        if "ci_low" in r:
            ci = f"[{r['ci_low']:6.2f},{r['ci_high']:6.2f}]"
        flag = "*" if r["above_chance"] else ""
        lines.append(
            f"{r['rank']:>4}  {r['id']:<{width}}  {r['share']:7.2f}  {ci:>17}  {flag}"
        )
    lines.append("")
    lines.append(
        f"chance cutoff: {cutoff:.1f}%  (* = share at or above cutoff)"
    )
    lines.append(
        f"n={result_doc['n_respondents']} respondents, "
        f"{result_doc['n_observations']} observations; "
        f"converged={str(result_doc['converged']).lower()} "
        f"in {result_doc['iterations']} iterations; "
        f"lambda={result_doc['lambda']:g}"
    )
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_design(args) -> int:
    items = read_items_csv(args.items)
    spec = DesignSpec(
        n_items=len(items),
        items_per_screen=args.items_per_screen,
        screens_per_respondent=args.screens,
        n_versions=args.versions,
        rng_seed=args.seed,
    )
    design = generate_design(spec)
    doc = design_to_dict(design, [i.id for i in items])
    doc["meta"] = _meta(args.seed)
    _dump_json(doc, args.output)
    for warning in design.metadata.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    return 0


def _cmd_diagnose(args) -> int:
    doc = json.loads(Path(args.design).read_text(encoding="utf-8"))
    design, _ = design_from_dict(doc)
    diag = design_diagnostics(design)
    out = {
        "balance_score": diag.balance_score,
        "violations": list(diag.violations),
        "frequencies": diag.frequencies.tolist(),
        "cooccurrence": diag.cooccurrence.tolist(),
        "positional": diag.positional.tolist(),
        "meta": _meta(design.spec.rng_seed),
    }
    _dump_json(out, args.output)
    return 0 if not diag.violations else 1


def _cmd_simulate(args) -> int:
    doc = json.loads(Path(args.design).read_text(encoding="utf-8"))
    design, item_ids = design_from_dict(doc)
    if args.items:
        items = read_items_csv(args.items)
        if tuple(i.id for i in items) != tuple(item_ids):
            raise MaxDiffError("items file does not match the design's item ids")
    else:
        items = default_items(design.spec.n_items)
    utilities = _parse_utilities(args, design.spec.n_items)
    pop = PopulationSpec(
        mean_utilities=tuple(utilities),
        heterogeneity_sd=args.sd,
        n_respondents=args.n,
        response_mode=args.mode,
        rng_seed=args.seed,
    )
    population = draw_population(pop)
    dataset = simulate_dataset(
        population,
        None if args.mode == TOP_CHOICE else design,
        args.mode,
        seed=args.seed,
        items=items,
    )
    write_responses_csv(dataset.observations, args.output)
    return 0


def _cmd_fit(args) -> int:
    items = read_items_csv(args.items)
    observations = read_responses_csv(args.responses)
    dataset = Dataset(items=items, observations=observations)
    problems = validate_dataset(dataset)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        raise MaxDiffError(f"dataset has {len(problems)} validation problems")
    options = FitOptions(l2_penalty=args.l2)
    result = fit(dataset, options)
    if args.bootstrap:
        intervals = bootstrap_shares(dataset, options, args.bootstrap, args.seed)
        result = with_intervals(result, intervals)
    doc = fit_result_to_dict(result, dataset.item_ids())
    doc["meta"] = _meta(args.seed)
    _dump_json(doc, args.output)
    return 0


def _cmd_report(args) -> int:
    doc = json.loads(Path(args.fit).read_text(encoding="utf-8"))
    _write_text(render_report(doc, args.format), args.output)
    return 0


def _cmd_power(args) -> int:
    n_grid = [int(x) for x in args.n_grid.split(",")]
    utilities = _parse_utilities(args, args.n_items)
    pop = PopulationSpec(
        mean_utilities=tuple(utilities),
        heterogeneity_sd=args.sd,
        n_respondents=max(n_grid),
        response_mode=args.mode,
        rng_seed=args.seed,
    )
    spec = DesignSpec(
        n_items=args.n_items,
        items_per_screen=args.items_per_screen,
        screens_per_respondent=args.screens,
        n_versions=args.versions,
        rng_seed=args.seed,
    )
    table = power_analysis(pop, spec, n_grid, args.reps, args.seed)
    if args.output and args.output.endswith(".json"):
        doc = power_table_to_dict(table)
        doc["meta"] = _meta(args.seed)
        _dump_json(doc, args.output)
    else:
        _write_text(power_table_to_csv(table), args.output)
    return 0


def _cmd_compare(args) -> int:
    utilities = _parse_utilities(args, args.n_items)
    pop = PopulationSpec(
        mean_utilities=tuple(utilities),
        heterogeneity_sd=args.sd,
        n_respondents=args.n,
        response_mode=BEST_ONLY,
        rng_seed=args.seed,
    )
    spec = DesignSpec(
        n_items=args.n_items,
        items_per_screen=args.items_per_screen,
        screens_per_respondent=args.screens,
        n_versions=args.versions,
        rng_seed=args.seed,
    )
    comparison = compare_methods(pop, args.n, spec, args.reps, args.seed)
    if args.output and args.output.endswith(".json"):
        doc = comparison_to_dict(comparison)
        doc["meta"] = _meta(args.seed)
        _dump_json(doc, args.output)
    else:
        _write_text(comparison_to_csv(comparison), args.output)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import StudyService, create_app

    service = StudyService(args.data_dir)
    app = create_app(service)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_design_args(p: argparse.ArgumentParser, with_k_items: bool) -> None:
    if with_k_items:
        p.add_argument("-K", "--n-items", type=int, required=True, help="item count")
    p.add_argument(
        "-k", "--items-per-screen", type=int, default=3, help="items per screen"
    )
    p.add_argument(
        "-T", "--screens", type=int, default=10, help="screens per respondent"
    )
    p.add_argument("-V", "--versions", type=int, default=10, help="design versions")


def _add_utility_args(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--utilities", default="", help="comma-separated true mean utilities"
    )
    p.add_argument(
        "--span",
        type=float,
        default=0.0,
        help="linearly spaced utilities spanning this range (ignored with --utilities)",
    )
    p.add_argument(
        "--sd", type=float, default=0.0, help="respondent heterogeneity (normal sd)"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maxdiff",
        description="Design, simulate, field, and analyze MaxDiff surveys.",
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="generate a balanced design from an items CSV")
    p.add_argument("--items", required=True, help="items CSV (id,label,description)")
    _add_design_args(p, with_k_items=False)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", default=None, help="design JSON path")
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("diagnose", help="audit a design JSON for balance")
    p.add_argument("--design", required=True)
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("simulate", help="simulate responses for a design")
    p.add_argument("--design", required=True, help="design JSON from `design`")
    p.add_argument("--items", default=None, help="optional items CSV for labels")
    p.add_argument("--mode", choices=RESPONSE_MODES, default=BEST_ONLY)
    p.add_argument("--n", type=int, default=300, help="number of respondents")
    _add_utility_args(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", required=True, help="responses CSV path")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit the choice model to a responses CSV")
    p.add_argument("--responses", required=True)
    p.add_argument("--items", required=True)
    p.add_argument("--l2", type=float, default=0.001, help="ridge penalty")
    p.add_argument(
        "--bootstrap", type=int, default=0, help="bootstrap replicates for 95%% CIs"
    )
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", default=None, help="fit result JSON path")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("report", help="render a fit result")
    p.add_argument("--fit", required=True, help="fit result JSON from `fit`")
    p.add_argument("--format", choices=("text", "csv", "json"), default="text")
    p.add_argument("-o", "--output", default=None)
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("power", help="simulation-based power analysis")
    _add_design_args(p, with_k_items=True)
    p.add_argument("--n-grid", required=True, help="comma-separated sample sizes")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--mode", choices=RESPONSE_MODES, default=BEST_ONLY)
    _add_utility_args(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", default=None, help=".csv or .json path")
    p.set_defaults(func=_cmd_power)

    p = sub.add_parser("compare", help="compare response modes at fixed N")
    _add_design_args(p, with_k_items=True)
    p.add_argument("--n", type=int, required=True, help="respondents per replication")
    p.add_argument("--reps", type=int, default=50)
    _add_utility_args(p)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("-o", "--output", default=None, help=".csv or .json path")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("serve", help="run the study HTTP service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (MaxDiffError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
