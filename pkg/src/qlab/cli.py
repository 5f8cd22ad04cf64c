"""Command-line entry point: ``qlab <subcommand> ...``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import __version__, dataset, nn
from .analysis import SliceSpec, q_slice, seed_variance_study
from .cartpole import DEFAULT_PHYSICS
from .emit import (emit_eval_csv, emit_history_csv, emit_slice_csv, history_figure, read_csv, save_svg,
                   slice_figure, study_figure, write_metrics)
from .evaluation import evaluate_policy, write_report
from .q_iteration import RunConfig, Variant, load_targets, run_iterations
from .rollout import AntiAngle, EpsilonGreedy, GreedyQ, PushLeft, QFunction, RealDynamics, RolloutConfig

log = logging.getLogger("qlab")


class CliError(Exception):
    pass


def write_manifest(path, entries: dict) -> None:
    lines = [f"qlab_version={__version__}"] + [f"{k}={v}" for k, v in sorted(entries.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def _train_cfg(args, seed: int = 0) -> nn.TrainConfig:
    return nn.TrainConfig(learning_rate=args.lr, batch_size=args.batch_size, patience=args.patience,
                          max_epochs=args.max_epochs, seed=seed)


def _cfg_entries(prefix: str, cfg) -> dict:
    return {f"{prefix}.{k}": v for k, v in dataclasses.asdict(cfg).items()}


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise CliError(f"no such file: {path}")
    return p


def _load_dataset(args):
    if args.data:
        return dataset.load(_existing(args.data))
    return dataset.generate(args.n_data, DEFAULT_PHYSICS, seed=args.data_seed)


def _make_policy(args):
    if args.policy == "push-left":
        return PushLeft()
    if args.policy == "anti-angle":
        return AntiAngle()
    if not args.params:
        raise CliError(f"--policy {args.policy} needs --params")
    q = QFunction(nn.load_params(_existing(args.params)))
    if args.policy == "greedy":
        return GreedyQ(q)
    return EpsilonGreedy(q, args.epsilon)


def cmd_generate_data(args) -> None:
    d = dataset.generate(args.n, DEFAULT_PHYSICS, seed=args.seed)
    out = Path(args.out)
    dataset.save(d, out)
    write_manifest(out.with_name(out.name + ".manifest.txt"),
                   {"command": "generate-data", "n": args.n, "seed": args.seed, "dataset_sha256": d.sha256(),
                    "terminal_fraction": repr(float(d.terminals.mean()))})
    log.info("wrote %d transitions to %s", len(d), out)


def cmd_run(args) -> None:
    d = _load_dataset(args)
    cfg = RunConfig(train=_train_cfg(args), rollout=RolloutConfig(args.horizon, args.gamma),
                    model_train=_train_cfg(args), eval_episodes=args.episodes, eval_steps=args.steps)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = {"command": "run", "variant": Variant(args.variant).value, "iters": args.iters, "seed": args.seed,
               "dataset_sha256": d.sha256(), "dataset_size": len(d), "dataset_source": args.data or "generated",
               "dataset_seed": d.generation_seed, "eval_episodes": args.episodes, "eval_steps": args.steps,
               **_cfg_entries("train", cfg.train), **_cfg_entries("rollout", cfg.rollout)}
    write_manifest(out / "manifest.txt", entries)
    history = run_iterations(args.variant, args.iters, d, cfg, seed=args.seed, out_dir=out,
                             workers=args.workers, log=log.info)
    emit_history_csv(history, out / "history.csv")
    if args.plot:
        from .emit import emit_plot
        emit_plot(history, out / "history.svg")


def cmd_evaluate(args) -> None:
    policy = _make_policy(args)
    report = evaluate_policy(policy, args.episodes, args.steps, DEFAULT_PHYSICS, args.seed)
    print(f"avg_return={report.avg_return!r} success_rate={report.success_rate!r} successful={report.successful}")
    if args.out:
        out = Path(args.out)
        write_report(report, out)
        write_manifest(out.with_name(out.name + ".manifest.txt"),
                       {"command": "evaluate", "policy": policy.describe(), "params": args.params,
                        "episodes": args.episodes, "steps": args.steps, "seed": args.seed})


def cmd_seed_study(args) -> None:
    targets = load_targets(_existing(args.targets))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = _train_cfg(args, seed=args.seed)
    write_manifest(out / "manifest.txt",
                   {"command": "seed-study", "targets": args.targets, "n_seeds": args.seeds, "seed": args.seed,
                    "episodes": args.episodes, "steps": args.steps, **_cfg_entries("train", cfg)})
    study = seed_variance_study(targets, args.seeds, cfg, args.episodes, args.steps, DEFAULT_PHYSICS,
                                eval_seed=args.seed, log=log.info)
    emit_eval_csv(study, out / "seed_study.csv")
    summary = study.summary()
    (out / "summary.txt").write_text("".join(f"{k}={v!r}\n" for k, v in summary.items()))
    print(" ".join(f"{k}={v:.2f}" for k, v in summary.items()))


def cmd_slice(args) -> None:
    policy = _make_policy(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rollout = RolloutConfig(args.horizon, args.gamma)
    write_manifest(out / "manifest.txt",
                   {"command": "slice", "policy": policy.describe(), "params": args.params, "points": args.points,
                    "refine": args.refine, "repeats": args.repeats, "seed": args.seed,
                    "per_action": args.per_action, **_cfg_entries("rollout", rollout)})
    result = q_slice(policy, SliceSpec(args.points), RealDynamics(DEFAULT_PHYSICS), rollout, args.seed,
                     refine=args.refine, per_action=args.per_action, repeats=args.repeats)
    emit_slice_csv(result, out / "slice.csv")
    write_metrics(result, out / "metrics.txt")
    m = result.metrics
    print(f"max_adjacent_jump={m.max_adjacent_jump:.4g} jump_count={m.n_jumps} "
          f"refinement_ratio={m.refinement_ratio}")


def cmd_plot(args) -> None:
    cols = read_csv(_existing(args.input))
    kind = args.kind
    if kind == "auto":
        kind = "slice" if "theta" in cols else "history" if "iteration" in cols else "study"
    if kind == "slice":
        fig = slice_figure(cols["theta"], cols["value"], Path(args.input).parent.name)
    elif kind == "history":
        fig = history_figure(cols["iteration"], cols["avg_return"], cols["success_rate"], cols["successful"])
    else:
        fig = study_figure(cols["avg_return"])
    save_svg(fig, args.out)


def _add_train_args(p) -> None:
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--max-epochs", type=int, default=2000)


def _add_rollout_args(p) -> None:
    p.add_argument("--horizon", type=int, default=1000)
    p.add_argument("--gamma", type=float, default=0.99)


def _add_policy_args(p) -> None:
    p.add_argument("--policy", choices=["greedy", "eps-greedy", "push-left", "anti-angle"], required=True)
    p.add_argument("--params", help="Q-network parameter file (greedy / eps-greedy)")
    p.add_argument("--epsilon", type=float, default=0.05)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qlab", description="Offline fitted Q iteration experiments on cart-pole.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-data", help="random-policy dataset")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate_data)

    p = sub.add_parser("run", help="iterate NFQ / BSF-NFQ and evaluate every iteration")
    p.add_argument("--variant", choices=[v.value for v in Variant], required=True)
    p.add_argument("--iters", type=int, default=30)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", help="dataset CSV; generated when omitted")
    p.add_argument("--n-data", type=int, default=20000)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--plot", action="store_true")
    p.add_argument("--out", default="runs/latest")
    _add_train_args(p)
    _add_rollout_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="evaluate a policy on the real dynamics")
    _add_policy_args(p)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("seed-study", help="refit saved targets with many seeds")
    p.add_argument("--targets", required=True)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=1000)
    p.add_argument("--steps", type=int, default=5000)
    p.add_argument("--out", default="runs/seed_study")
    _add_train_args(p)
    p.set_defaults(func=cmd_seed_study)

    p = sub.add_parser("slice", help="rollout values along the pole angle")
    _add_policy_args(p)
    p.add_argument("--points", type=int, default=10000)
    p.add_argument("--refine", type=int, default=10)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--per-action", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="runs/slice")
    _add_rollout_args(p)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("plot", help="render a CSV written by another subcommand as SVG")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", choices=["auto", "slice", "history", "study"], default="auto")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (CliError, OSError, ValueError) as exc:
        print(f"qlab: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
