"""Command-line entry point: run experiments and convergence studies.

Subcommands::

    ldgflow run           --config run.ini [--out DIR] [--set sec.key=val ...]
    ldgflow converge-time --config run.ini --taus 1/32,1/64,... --ref-tau 1/4096
    ldgflow converge-space --config run.ini --Ms 32,64,128
    ldgflow presets

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 invariant violation.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, parse_config
from .harness import (
    PRESETS,
    InvariantViolation,
    convergence_study_space,
    convergence_study_time,
    run_simulation,
)
from .io import write_diagnostics, write_rate_table, write_snapshot
from .linsolve import SolverConvergenceError
from .sesav import BlowUpError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_INVARIANT = 4


def _number(text: str) -> float:
    """Parse a decimal literal or a rational like 1/512."""
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


def _number_list(text: str) -> list[float]:
    return [_number(part) for part in text.split(",") if part.strip()]


def _int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _load_config(args) -> "ExperimentConfig":
    path = Path(args.config)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, overrides=list(args.set or []))


def _cmd_run(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_simulation(config)
    write_diagnostics(result.records, out_dir / "diagnostics.csv")
    ext = config.out_format
    for snap in result.snapshots:
        write_snapshot(snap.state.Q, None,
                       out_dir / f"snapshot_{snap.step:06d}.{ext}", ext)
    last = result.records[-1] if result.records else None
    if last is not None:
        print(f"finished {config.scheme} on {config.initial}: "
              f"{last.step} steps to t={last.time:g}, "
              f"energy={last.energy:.6g}, sup_norm={last.sup_norm:.6g}")
    print(f"wrote {out_dir / 'diagnostics.csv'} and "
          f"{len(result.snapshots)} snapshots")
    return EXIT_OK


def _cmd_converge_time(args) -> int:
    config = _load_config(args)
    taus = _number_list(args.taus)
    table = convergence_study_time(config, taus, _number(args.ref_tau))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rate_table(table, out_dir / "rates.csv")
    print(table.format_text())
    print(f"wrote {out_dir / 'rates.csv'}")
    return EXIT_OK


def _cmd_converge_space(args) -> int:
    config = _load_config(args)
    table = convergence_study_space(config, _int_list(args.Ms))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_rate_table(table, out_dir / "rates.csv")
    print(table.format_text())
    print(f"wrote {out_dir / 'rates.csv'}")
    return EXIT_OK


def _cmd_presets(_args) -> int:
    for name, p in sorted(PRESETS.items()):
        print(f"{name}: {p.description}")
        print(f"  dim={p.dim} M={p.M} domain_length={p.domain_length:g}")
        print(f"  a={p.a:g} b={p.b:g} c={p.c:g} "
              f"L1={p.L1:g} L2={p.L2:g} L3={p.L3:g} kappa={p.kappa:g}")
        c_star = "computed lower bound" if p.c_star is None else f"{p.c_star:g}"
        print(f"  c_star={c_star}")
        if p.adaptive is not None:
            stepping = (f"adaptive tau in [{p.adaptive.tau_min:g}, "
                        f"{p.adaptive.tau_max:g}], alpha={p.adaptive.alpha:g}")
        else:
            stepping = f"tau={p.tau:g}"
        print(f"  scheme={p.scheme} T={p.T:g} {stepping}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldgflow",
        description="Energy-stable sESAV solvers for the Landau-de Gennes "
                    "Q-tensor gradient flow",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured simulation")
    run.add_argument("--config", required=True)
    run.add_argument("--out", default="out")
    run.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                     help="override a config value")
    run.set_defaults(func=_cmd_run)

    ct = sub.add_parser("converge-time", help="temporal accuracy study")
    ct.add_argument("--config", required=True)
    ct.add_argument("--taus", required=True,
                    help="comma-separated step sizes, e.g. 1/32,1/64")
    ct.add_argument("--ref-tau", required=True, dest="ref_tau")
    ct.add_argument("--out", default="out")
    ct.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    ct.set_defaults(func=_cmd_converge_time)

    cs = sub.add_parser("converge-space", help="spatial accuracy study")
    cs.add_argument("--config", required=True)
    cs.add_argument("--Ms", required=True,
                    help="comma-separated doubling resolutions, e.g. 32,64,128")
    cs.add_argument("--out", default="out")
    cs.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    cs.set_defaults(func=_cmd_converge_space)

    pr = sub.add_parser("presets", help="list the bundled experiments")
    pr.set_defaults(func=_cmd_presets)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverConvergenceError, BlowUpError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
