"""Command line: ``advfl run | sweep | verify``.

Exit codes: 0 success, 1 run-time failure, 2 usage or config error.
"""

import argparse
import csv
import io
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import adversary, verify
from .client import DivergenceError
from .config import ConfigError
from .engine import run

log = logging.getLogger("advfl")

CSV_COLUMNS = ("t", "grad_norm_sq", "dist_sq", "eps_t", "train_loss", "participants")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj):
    return json.dumps(obj, sort_keys=True, default=cfgmod.jsonable)


def trajectory_jsonl(result, echo, seed):
    lines = [_dump({"type": "header", "config": echo, "masterSeed": seed})]
    lines += [_dump(r.to_dict()) for r in result.trajectory]
    return "\n".join(lines) + "\n"


def trajectory_csv(result, echo, seed):
    buf = io.StringIO()
    buf.write("# " + _dump({"config": echo, "masterSeed": seed}) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in result.trajectory:
        w.writerow([r.t, repr(r.grad_norm_sq), "" if r.dist_sq is None else repr(r.dist_sq),
                    repr(r.eps_realized), repr(r.train_loss), len(r.participating_set)])
    return buf.getvalue()


def tail_mean(values, fraction):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    k = max(1, int(round(fraction * len(vals))))
    return float(np.mean(vals[-k:]))


def execute(doc, seed, out_dir):
    """One run; writes trajectory.jsonl, trajectory.csv and summary.json."""
    rc = cfgmod.build_run_config(doc, seed)
    echo = cfgmod.echo(doc)
    t0 = time.perf_counter()
    result = run(rc)
    wall = time.perf_counter() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "trajectory.jsonl").write_text(trajectory_jsonl(result, echo, rc.seed))
    (out_dir / "trajectory.csv").write_text(trajectory_csv(result, echo, rc.seed))
    inst = rc.instance
    gn = float(inst.global_gradient(result.theta_R) @ inst.global_gradient(result.theta_R))
    dist = None
    if inst.optimum is not None:
        r = result.theta_R - inst.optimum
        dist = float(r @ r)
    frac = float(doc["output"].get("tail_fraction", 0.5))
    summary = {
        "config": echo, "masterSeed": rc.seed, "wallTime": wall, "R": result.R,
        "thetaR": {"grad_norm_sq": gn, "dist_sq": dist, "train_loss": inst.global_value(result.theta_R)},
        "tail": {"fraction": frac,
                 "grad_norm_sq": tail_mean([r.grad_norm_sq for r in result.trajectory], frac),
                 "dist_sq": tail_mean([r.dist_sq for r in result.trajectory], frac)},
        "maxEpsRealized": max(r.eps_realized for r in result.trajectory),
        "notes": result.notes,
    }
    if result.candidates is not None:
        summary["shadowCandidates"] = {"C1": list(result.candidates.C1), "C2": list(result.candidates.C2)}
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True,
                                                     default=cfgmod.jsonable) + "\n")
    return summary


def _load(args):
    doc = cfgmod.load(args.config) if args.config else {}
    return cfgmod.with_defaults(cfgmod.apply_overrides(doc, args.set))


def cmd_run(args):
    doc = _load(args)
    out = cfgmod.output_root(doc, args.out)
    seed = cfgmod.seed_list(doc, args.seed)[0]
    summary = execute(doc, seed, out)
    print(f"wrote {out}/trajectory.jsonl ({summary['wallTime']:.2f}s)")
    return 0


def _label(v):
    return json.dumps(v) if not isinstance(v, str) else v


def cmd_sweep(args):
    if not args.values:
        raise UsageError("sweep needs at least one value (--values)")
    doc = _load(args)
    try:
        cfgmod.get_path(doc, args.axis)
    except KeyError:
        raise ConfigError(args.axis, "not a config key") from None
    values = [cfgmod.parse_value(v) for v in args.values]
    seeds = cfgmod.seed_list(doc, args.seed)
    root = cfgmod.output_root(doc, args.out)
    rows = []
    for v in values:
        sub = cfgmod.apply_overrides(doc, [])
        cfgmod.set_path(sub, args.axis, v)
        for seed in seeds:
            summary = execute(sub, seed, root / f"{args.axis}={_label(v)}" / f"seed={seed}")
            rows.append((v, seed, summary))
    rows.sort(key=lambda r: (str(type(r[0])), r[0], r[1]))
    buf = io.StringIO()
    buf.write("# " + _dump({"config": cfgmod.echo(doc), "axis": args.axis, "values": values,
                            "seeds": seeds}) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("value", "seed", "tail_grad_norm_sq", "tail_dist_sq", "max_eps_t"))
    for v, seed, s in rows:
        td = s["tail"]["dist_sq"]
        w.writerow((_label(v), seed, repr(s["tail"]["grad_norm_sq"]),
                    "" if td is None else repr(td), repr(s["maxEpsRealized"])))
    root.mkdir(parents=True, exist_ok=True)
    (root / "aggregate.csv").write_text(buf.getvalue())
    print(f"wrote {root}/aggregate.csv ({len(rows)} runs)")
    return 0


def cmd_verify(args):
    suite = args.suite
    names = verify.SUITES if suite == "all" else (suite,)
    if suite != "all" and suite not in verify.SUITES:
        raise UsageError(f"unknown suite {suite!r}; expected one of {verify.SUITES + ('all',)}")
    reports = []
    for name in names:
        trials = args.trials
        if trials is None:
            trials = {"unbiased": 100_000, "lower-bound": 30}.get(name, 10_000)
        reports += verify.run_suite(name, trials, seed=args.seed or 0, eps=args.eps)
    ok = all(r.passed for r in reports)
    if "lower-bound" in names:
        eps = 0.5 if args.eps is None else args.eps
        print(f"minimax_gap = {verify.minimax_gap(eps, 1.0, 1.0):g}")
        lb = [r for r in reports if r.suite == "lower-bound"]
        print(f"indistinguishability {'PASS' if all(r.passed for r in lb) else 'FAIL'}")
    for r in reports:
        print(f"{r.suite}: trials={r.trials} violations={r.violations} "
              f"maxRatio={r.max_ratio:.6g} {'PASS' if r.passed else 'FAIL'}")
    doc = json.dumps([r.to_dict() for r in reports], indent=2, default=cfgmod.jsonable)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(doc + "\n")
    elif args.json:
        print(doc)
    return 0 if ok else 1


def build_parser():
    p = _Parser(prog="advfl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", metavar="PATH")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted override, value parsed as JSON (repeatable)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", metavar="DIR", help="output root (default $ADVFL_OUT_DIR or ./runs)")

    common(sub.add_parser("run", help="single experiment"))
    sw = sub.add_parser("sweep", help="one run per value per seed")
    common(sw)
    sw.add_argument("--axis", required=True, metavar="KEY")
    sw.add_argument("--values", nargs="*", default=[], metavar="V")

    vf = sub.add_parser("verify", help="numerical check suites")
    vf.add_argument("suite", help=f"one of {', '.join(verify.SUITES)}, all")
    vf.add_argument("--trials", type=int)
    vf.add_argument("--eps", type=float)
    vf.add_argument("--seed", type=int)
    vf.add_argument("--out", metavar="FILE", help="write the JSON report here")
    vf.add_argument("--json", action="store_true", help="print the JSON report")
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command is None:
            raise UsageError("advfl: a subcommand is required (run, sweep, verify)")
        if getattr(args, "trials", None) is not None and args.trials < 1:
            raise UsageError("--trials must be >= 1")
        return {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify}[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DivergenceError, adversary.BudgetViolation) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
