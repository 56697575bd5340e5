"""Command-line entry point.

    uavtrack run CONFIG [--seed N] [--out PATH]
    uavtrack compare CONFIG [--seed N] [--out PATH]

Exit codes: 0 success, 2 invalid configuration, 3 filter divergence.
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
import sys
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import ConfigError, ScenarioConfig, load_config
from .metrics import comparison_table, summarize
from .runlog import RunLog
from .simulator import run_paired, run_scenario, script_from_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3

log = logging.getLogger("uavtrack")


def metrics_text(run: RunLog, warmup_steps: int) -> str:
    """Flat ``key = value`` summary: whole run, then ``post_warmup.*`` when long enough."""
    out = ["# uavtrack metrics; rel_pos_err_pct = 100*|r_q_est - r_q_true| / |r_q/c_true|"]
    try:
        out.append(summarize(run).to_text().rstrip("\n"))
    except ValueError:
        out.append(f"diverged = {int(run.diverged)}")
        return "\n".join(out) + "\n"
    try:
        steady = summarize(run, skip_warmup=True, warmup_steps=warmup_steps)
    except ValueError:
        pass
    else:
        out.extend("post_warmup." + line for line in steady.to_text().splitlines())
    return "\n".join(out) + "\n"


def _write_run(run: RunLog, out: Path, warmup_steps: int) -> None:
    out.parent.mkdir(parents=True, exist_ok=True)
    run.to_csv(out.with_name(out.name + ".csv"))
    out.with_name(out.name + ".metrics.txt").write_text(metrics_text(run, warmup_steps))


def _load(path: str, seed: Optional[int]) -> ScenarioConfig:
    cfg = load_config(path)
    if seed is not None:
        cfg = cfg.with_overrides(run={"seed": seed})
    log.debug("scenario config: %s", cfg.model_dump())
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args.config, args.seed)
    out = Path(args.out or Path(args.config).stem)
    run = run_scenario(cfg)
    _write_run(run, out, cfg.ukf.window)
    if run.diverged:
        print(f"filter diverged at t={len(run) * cfg.run.dt:.2f}s: {run.message}", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"wrote {out}.csv and {out}.metrics.txt")
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args.config, args.seed)
    out = Path(args.out or Path(args.config).stem + "_compare")
    adaptive_run, fixed_run = run_paired(cfg)
    _write_run(adaptive_run, out.with_name(out.name + ".adaptive"), cfg.ukf.window)
    _write_run(fixed_run, out.with_name(out.name + ".fixed"), cfg.ukf.window)

    n = min(len(adaptive_run), len(fixed_run))
    qtrace = np.column_stack([adaptive_run.t[:n], adaptive_run.q_diag[:n].sum(1), fixed_run.q_diag[:n].sum(1)])
    lines = ["t,q_trace_adaptive,q_trace_fixed"]
    lines += [",".join("" if np.isnan(v) else repr(float(v)) for v in row) for row in qtrace]
    out.with_name(out.name + ".qtrace.csv").write_text("\n".join(lines) + "\n")

    if adaptive_run.diverged or fixed_run.diverged:
        print("filter diverged in at least one arm; no comparison table", file=sys.stderr)
        return EXIT_DIVERGED

    w = cfg.ukf.window
    pairs = {
        "post_warmup": (
            summarize(adaptive_run, skip_warmup=True, warmup_steps=w),
            summarize(fixed_run, skip_warmup=True, warmup_steps=w),
        )
    }
    switches = script_from_config(cfg).switch_times()
    if switches and switches[0] < cfg.run.duration:
        pairs["switching"] = (summarize(adaptive_run, t_start=switches[0]), summarize(fixed_run, t_start=switches[0]))
    table = comparison_table(pairs)
    out.with_name(out.name + ".compare.txt").write_text(table)
    print(table, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uavtrack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario, write <out>.csv and <out>.metrics.txt")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="overrides [run].seed")
    p.add_argument("--out", default=None, help="output path prefix (default: config file stem)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="paired adaptive-Q vs fixed-Q runs with a metrics table")
    p.add_argument("config")
    p.add_argument("--seed", type=int, default=None, help="overrides [run].seed")
    p.add_argument("--out", default=None, help="output path prefix (default: <config stem>_compare)")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
