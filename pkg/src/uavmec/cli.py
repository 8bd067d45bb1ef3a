"""Command-line experiment runner.

    uavmec train        --profile desk --seeds 0 1 2 --out runs/desk
    uavmec eval         --policy random --seeds 0 --out runs/random
    uavmec oracle-check --snapshots 100
    uavmec quant-bench  --rounds 5

Config precedence is flag > config file > profile > built-in default; every
flag that overrides a value is logged. Invalid configs print a diagnostic
and exit with status 2.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .config import PROFILES, ConfigError, dump_config, load_config, make_config
from .graphnn.nn import CheckpointError, load_checkpoint, save_checkpoint
from .metrics import export
from .runner import Learner, RunResult, oracle_check, quant_bench, run_learning, run_reference

log = logging.getLogger("uavmec")


def _on_off(value: str) -> bool:
    if value not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected 'on' or 'off'")
    return value == "on"


def _set_pair(text: str):
    """``a.b=value`` -> ({"a": {"b": value}}) with YAML-typed value."""
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"--set expects key=value, got {text!r}")
    key, raw = text.split("=", 1)
    value = yaml.safe_load(raw)
    for part in reversed(key.split(".")):
        value = {part: value}
    return value


def _merge(a: dict, b: dict) -> dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uavmec", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="mode", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file")
    common.add_argument("--profile", choices=sorted(PROFILES), help="base profile (default: desk)")
    common.add_argument("--seed", type=int, help="single seed (shorthand for --seeds N)")
    common.add_argument("--seeds", type=int, nargs="+", help="seeds to run")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--episodes", type=int, help="episodes per seed")
    common.add_argument("--quantization", type=_on_off, metavar="on|off")
    common.add_argument("--fl", type=_on_off, metavar="on|off", help="federated averaging")
    common.add_argument("--reputation", type=_on_off, metavar="on|off")
    common.add_argument("--features", choices=("gat", "mlp"), help="spatial feature extractor")
    common.add_argument("--set", dest="sets", type=_set_pair, action="append", default=[],
                        metavar="KEY=VALUE", help="override any config key, e.g. learn.gamma=0.9")
    common.add_argument("-v", "--verbose", action="store_true")

    tr = sub.add_parser("train", parents=[common], help="train agents")
    tr.add_argument("--keep-tasks", action="store_true", help="write per-task rows")

    ev = sub.add_parser("eval", parents=[common], help="evaluate a fixed policy")
    ev.add_argument("--policy", choices=("random", "greedy", "learned"), default="random",
                    help="reference policy, or 'learned' for frozen agents")
    ev.add_argument("--checkpoints", type=Path,
                    help="directory of uav<k>.ckpt files for --policy learned")
    ev.add_argument("--keep-tasks", action="store_true")

    oc = sub.add_parser("oracle-check", parents=[common], help="engine vs brute-force timing")
    oc.add_argument("--snapshots", type=int, default=100)
    oc.add_argument("--max-k", type=int, default=4)
    oc.add_argument("--max-hops", type=int, default=3)

    qb = sub.add_parser("quant-bench", parents=[common], help="FL bytes with vs without quantisation")
    qb.add_argument("--rounds", type=int, default=5)
    return p


def flag_overrides(args) -> dict:
    over: dict = {}
    if args.episodes is not None:
        over["episodes"] = args.episodes
    fed = {}
    if args.quantization is not None:
        fed["quantize"] = args.quantization
    if args.fl is not None:
        fed["enabled"] = args.fl
    if args.reputation is not None:
        fed["reputation"] = args.reputation
    if fed:
        over["fed"] = fed
    if args.features is not None:
        over["learn"] = {"features": args.features}
    for s in args.sets:
        over = _merge(over, s)
    return over


def resolve_config(args):
    over = flag_overrides(args)
    if args.config is not None:
        return load_config(args.config, args.profile, over)
    for key in over:
        log.info("flag sets config key %s", key)
    return make_config(args.profile or "desk", over)


def _seeds(args, cfg) -> list[int]:
    if args.seeds:
        return list(args.seeds)
    return [args.seed if args.seed is not None else cfg.seed]


def _progress(m) -> None:
    log.info("seed %d ep %3d  F_total %.3f  deadline %.3f  coverage %.3f",
             m.seed, m.episode, m.f_total, m.deadline_rate, m.coverage_rate)


def _write(results: list[RunResult], cfg, out: Path | None, extra: dict) -> None:
    if out is None:
        return
    export(results, out, cfg.config_hash(), {**extra, "seeds": [r.seed for r in results]})
    dump_config(cfg, out / "config.yaml")
    log.info("wrote %s", out)


def _summary_line(results: list[RunResult]) -> str:
    parts = []
    for r in results:
        last = min(10, len(r.episodes))
        parts.append(f"seed {r.seed}: F_total {r.final_mean('f_total', last):.4f} "
                     f"deadline {r.final_mean('deadline_rate', last):.4f} "
                     f"coverage {r.final_mean('coverage_rate', last):.4f}")
    return "\n".join(parts)


def cmd_train(args, cfg) -> int:
    results = []
    for seed in _seeds(args, cfg):
        r = run_learning(cfg, seed, keep_tasks=args.keep_tasks,
                         progress=_progress if args.verbose else None)
        results.append(r)
        if args.out is not None:
            ck = args.out / "checkpoints" / f"seed{seed}"
            ck.mkdir(parents=True, exist_ok=True)
            for ag in r.learner.agents:
                save_checkpoint(ag.params, ck / f"uav{ag.k}.ckpt")
    _write(results, cfg, args.out, {"mode": "train"})
    print(_summary_line(results))
    return 0


def cmd_eval(args, cfg) -> int:
    results = []
    for seed in _seeds(args, cfg):
        if args.policy == "learned":
            if args.checkpoints is None:
                r = run_learning(cfg, seed, train=False, keep_tasks=args.keep_tasks)
            else:
                learner = Learner(cfg, seed)
                for ag in learner.agents:
                    load_checkpoint(ag.params, args.checkpoints / f"uav{ag.k}.ckpt")
                r = RunResult("learned", "frozen", seed)
                for ep in range(cfg.episodes):
                    learner.episode(ep, train=False, keep_tasks=args.keep_tasks, out=r)
        else:
            r = run_reference(cfg, seed, args.policy, keep_tasks=args.keep_tasks)
        results.append(r)
    _write(results, cfg, args.out, {"mode": "eval", "policy": args.policy})
    print(_summary_line(results))
    return 0


def cmd_oracle(args, cfg) -> int:
    rep = oracle_check(cfg, args.snapshots, _seeds(args, cfg)[0], args.max_k, args.max_hops)
    ok = rep.worst_rel_error <= 1e-9 and rep.best_mismatches == 0
    print(f"snapshots {rep.snapshots}  paths {rep.paths}  worst relative error "
          f"{rep.worst_rel_error:.3e}  best-path mismatches {rep.best_mismatches}  "
          f"{rep.seconds:.2f}s  -> {'agree' if ok else 'DISAGREE'}")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "oracle.json").write_text(json.dumps(
            {**rep.__dict__, "agree": ok, "config_hash": cfg.config_hash()}, indent=2, sort_keys=True) + "\n")
    return 0 if ok else 1


def cmd_quant(args, cfg) -> int:
    q, f, red = quant_bench(cfg, _seeds(args, cfg)[0], args.rounds)
    print(f"bytes/message quantised {q:.0f}  full precision {f:.0f}  reduction {100 * red:.1f}%")
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "quant.json").write_text(json.dumps(
            {"bytes_quantised": q, "bytes_full": f, "reduction": red,
             "config_hash": cfg.config_hash()}, indent=2, sort_keys=True) + "\n")
    return 0


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "oracle-check": cmd_oracle, "quant-bench": cmd_quant}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"uavmec: invalid configuration: {exc}", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.mode](args, cfg)
    except CheckpointError as exc:
        print(f"uavmec: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
