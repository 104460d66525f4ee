"""Command-line entry point: ``shedlab <subcommand> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from . import checkpoint
from .config import RunConfig, apply_overrides, config_from_dict, load_config
from .errors import ShedError
from .export import export_plots
from .harness import build_sets, run, run_worldmodel_check, test_returns
from .metrics import aggregate
from .runlog import RunLog


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else config_from_dict({})
    overrides = {}
    for item in args.set or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        overrides[key] = _value(val)
    for flag, key in (("family", "family"), ("teacher", "teacher"), ("seed", "seed"),
                      ("episodes", "episodes"), ("env_budget", "env_budget")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    return apply_overrides(cfg, overrides) if overrides else cfg


def _common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. --set student.steps_per_env=128")
    p.add_argument("--family", choices=["maze", "lander"])
    p.add_argument("--teacher", choices=["shed", "h-mdp", "dr", "accel", "accel-edit"])
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--env-budget", dest="env_budget", type=int)


def _dump(obj, path) -> None:
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def cmd_gen_eval_set(args) -> None:
    ev, te = build_sets(_config(args))
    os.makedirs(args.out, exist_ok=True)
    ev.save(os.path.join(args.out, "eval_set.json"))
    te.save(os.path.join(args.out, "test_set.json"))
    print(f"wrote {len(ev)} evaluation and {len(te)} test environments to {args.out}")


def cmd_train(args) -> None:
    cfg = _config(args)
    out = args.out or os.path.join("runs", f"{cfg.teacher}-{cfg.family}-s{cfg.seed}")
    log = run(cfg, out)
    end = log.of_type("run-end")[0]
    print(f"{out}: {end['envs_generated']} environments, {end['student_updates']} student updates, "
          f"config {log.header['config_hash']}")


def cmd_evaluate(args) -> None:
    cfg = _config(args)
    policy = checkpoint.load_student(args.checkpoint)
    _, te = build_sets(cfg)
    rets = test_returns(policy, te, cfg.test.episodes_per_env, cfg.test.deterministic)
    _dump({"family": cfg.family, "returns": rets, "mean": sum(rets) / len(rets)}, args.out)


def cmd_worldmodel_check(args) -> None:
    cfg = _config(args)
    kw = {} if args.train_steps is None else {"train_steps": args.train_steps}
    report = run_worldmodel_check(cfg, **kw)
    _dump(report, args.out)
    if not report["passed"]:
        sys.exit(1)


def _logs(paths):
    out = []
    for p in paths:
        out.append(RunLog.load(os.path.join(p, "runlog.jsonl") if os.path.isdir(p) else p))
    return out


def _bounds(args, logs):
    if args.bounds:
        return tuple(args.bounds)
    return RunConfig(**{"family": logs[0].header["config"]["family"],
                        "normalization": logs[0].header["config"].get("normalization")}).norm_bounds


def cmd_aggregate(args) -> None:
    logs = _logs(args.runs)
    _dump(aggregate(logs, _bounds(args, logs)), args.out)


def cmd_export_plots(args) -> None:
    logs = _logs(args.runs)
    report = aggregate(logs, _bounds(args, logs))
    files = export_plots(report, args.out, env_budget=logs[0].header["config"]["env_budget"])
    print("\n".join(files))


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shedlab", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-eval-set", help="build and save the evaluation and test sets")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_gen_eval_set)

    p = sub.add_parser("train", help="run one experiment and write its run log and checkpoints")
    _common(p)
    p.add_argument("--out", help="run directory (default runs/<teacher>-<family>-s<seed>)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a saved student on the test set")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("worldmodel-check", help="world-model fidelity on scripted dynamics")
    _common(p)
    p.add_argument("--train-steps", dest="train_steps", type=int)
    p.add_argument("--out", help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_worldmodel_check)

    for name, fn, helptext in (("aggregate", cmd_aggregate, "summarise runs across seeds"),
                               ("export-plots", cmd_export_plots, "write CSV learning-curve series")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("runs", nargs="+", help="run directories or runlog.jsonl files")
        p.add_argument("--bounds", type=float, nargs=2, metavar=("WORST", "BEST"))
        p.add_argument("--out", required=(name == "export-plots"))
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except ShedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
