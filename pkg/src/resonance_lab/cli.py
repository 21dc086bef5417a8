"""Command line entry point: ``resonance-lab {check,manifold,annulus,bifurcate}``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import SCHEMA, bundled_configs, flag_name, load_config
from .errors import ResonanceLabError
from .pipeline import COMMAND_STAGE, STAGES, PipelineAbort, emit_report, run_experiment

COMMAND_HELP = {
    "check": "constants and the smallness condition only",
    "manifold": "constants plus the sampled center-manifold graphs",
    "annulus": "up to the certified invariant annulus",
    "bifurcate": "full pipeline: annulus, attractor cover and equilibrium branches",
}


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", help=f"INI file or bundled name ({', '.join(bundled_configs())})")
    p.add_argument("--lambda-grid", help="comma-separated lambda values (replaces the geometric grid)")
    p.add_argument("--out", help="output directory (default: [run] out)")
    p.add_argument("--seed", type=int, help="random seed (default: [run] seed)")
    p.add_argument("--stage", choices=STAGES, help="last stage to run (overrides the subcommand)")
    p.add_argument("-v", "--verbose", action="store_true", help="log stage progress")
    keys = p.add_argument_group("configuration keys", "every [section] key of the config file")
    for section, entries in SCHEMA.items():
        for key, (typ, default) in entries.items():
            if (section, key) == ("lambda", "grid"):
                continue  # served by --lambda-grid
            keys.add_argument(
                flag_name(section, key),
                dest=f"cfg__{section}__{key}",
                metavar=typ.__name__.upper(),
                help=f"[{section}] {key} (default: {'auto' if default is None else default})",
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resonance-lab",
        description="Bifurcation from infinity near a Dirichlet eigenvalue: certified numerics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMAND_HELP.items():
        _add_common(sub.add_parser(name, help=text, description=text))
    return parser


def _summary(report) -> str:
    lines = [f"status: {report.data['status']}"]
    c = report.data.get("constants", {})
    for key in ("mu_k", "beta_k", "M_beta", "L_f", "margin", "theta", "c0", "a", "b"):
        if key in c:
            lines.append(f"{key}: {c[key]:.6g}" if isinstance(c[key], float) else f"{key}: {c[key]}")
    for name, ok in sorted(report.data.get("claims", {}).items()):
        lines.append(f"{'PASS' if ok else 'FAIL'} {name}")
    return "\n".join(lines)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        for dest, raw in vars(args).items():
            if dest.startswith("cfg__") and raw is not None:
                _, section, key = dest.split("__")
                cfg.set(section, key, raw)
        if args.lambda_grid is not None:
            cfg.set("lambda", "grid", args.lambda_grid)
        if args.seed is not None:
            cfg.set("run", "seed", args.seed)
        if args.out is not None:
            cfg.set("run", "out", args.out)
        cfg.validate()
    except ResonanceLabError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    stop = args.stage or COMMAND_STAGE[args.command]
    out = cfg.get("run", "out")
    try:
        report = run_experiment(cfg, stop)
    except PipelineAbort as exc:
        emit_report(exc.report, out)
        print(_summary(exc.report), file=sys.stderr)
        print(f"aborted in stage '{exc.stage}': {exc.cause}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    try:
        emit_report(report, out)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2
    print(_summary(report))
    print(f"outputs written to {out}")
    return 0 if report.passed else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
