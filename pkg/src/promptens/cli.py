"""Operator surface: synth / train / eval / verify-causal / inspect.

Machine-readable JSON goes to stdout (one object per invocation, sorted
keys, no timestamps, flags echoed for provenance), human logs go to stderr.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 divergence.
The env var AMPLE_LOG (debug|info) controls stderr verbosity.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .causal import confounded_scm, conditional_y_given_z, do_z, identity_max_deviation
from .errors import DivergenceError, EngineError
from .evaluator import eval_base_to_novel, eval_transfer
from .feature_store import (
    SynthSpec,
    load_bundle,
    save_bundle,
    synth_bundle,
    verify_bundle_logits,
)
from .networks import load_checkpoint, save_checkpoint
from .trainer import TrainConfig, fit


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so run() owns the exit code."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")

    def exit(self, status=0, message=None):
        if status != 0:
            raise _UsageError(message or f"{self.prog}: usage error")
        raise SystemExit(0)  # --help


def _log_level() -> str:
    return os.environ.get("AMPLE_LOG", "info").lower()


def _emit(obj: dict, stdout) -> None:
    stdout.write(json.dumps(obj, sort_keys=True) + "\n")


def _info(msg: str, stderr) -> None:
    if _log_level() in ("info", "debug"):
        stderr.write(msg + "\n")


def _debug(msg: str, stderr) -> None:
    if _log_level() == "debug":
        stderr.write(msg + "\n")


def _build_parser() -> _Parser:
    parser = _Parser(prog="promptens", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic bundle")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--c", type=int, default=8)
    p.add_argument("--m", type=int, default=3)
    p.add_argument("--dims", default="16,16", help="comma-separated feature dims, one per backbone")
    p.add_argument("--sep", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nuisance", type=float, default=0.0)

    p = sub.add_parser("train", help="fit the networks on a bundle's train split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--alpha", type=float, default=2e-1)
    p.add_argument("--beta", type=float, default=1e-0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--batch-size", type=int, default=128)
    p.add_argument("--lr", type=float, default=2e-2)
    p.add_argument("--warmup-epochs", type=int, default=1)
    p.add_argument("--warmup-lr", type=float, default=1e-5)
    p.add_argument("--hidden-dim", type=int, default=None)

    p = sub.add_parser("eval", help="evaluate a checkpoint against a bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--task", required=True, choices=("b2n", "transfer", "dg"))
    p.add_argument("--target", default=None)

    p = sub.add_parser("verify-causal", help="enumerate the adjustment identity")
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("inspect", help="summarize a bundle and its consistency")
    p.add_argument("--bundle", required=True)
    return parser


def _cmd_synth(args, stdout, stderr) -> int:
    dims = tuple(int(d) for d in str(args.dims).split(",") if d != "")
    if not dims:
        raise _UsageError("--dims must name at least one backbone dim")
    spec = SynthSpec(
        n=args.n, c=args.c, m=args.m, dims=dims,
        class_separation=args.sep, nuisance=args.nuisance,
    )
    bundle = synth_bundle(spec, seed=args.seed)
    manifest_path = save_bundle(bundle, args.out)
    _info(f"wrote bundle with {bundle.num_samples} samples to {args.out}", stderr)
    _emit(
        {
            "command": "synth",
            "params": {
                "out": args.out, "n": args.n, "c": args.c, "m": args.m,
                "dims": list(dims), "sep": args.sep, "seed": args.seed,
                "nuisance": args.nuisance,
            },
            "manifest": str(manifest_path),
            "splits": {k: len(v) for k, v in bundle.manifest.splits.items()},
        },
        stdout,
    )
    return 0


def _cmd_train(args, stdout, stderr) -> int:
    bundle = load_bundle(Path(args.bundle) / "manifest.json")
    config = TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        lr=args.lr,
        warmup_epochs=args.warmup_epochs,
        warmup_lr=args.warmup_lr,
        alpha=args.alpha,
        beta=args.beta,
        seed=args.seed,
        hidden_dim_override=args.hidden_dim,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "train_log.jsonl"
    with open(log_path, "w") as log:

        def on_step(step, epoch, lr, report):
            record = {"step": step, "epoch": epoch, "lr": lr}
            record.update(report.to_dict())
            log.write(json.dumps(record, sort_keys=True) + "\n")
            _debug(f"step {step} epoch {epoch} total {report.total:.6f}", stderr)

        state = fit(bundle, config, on_step=on_step)
    save_checkpoint(out, state.wg, state.rd, bundle.manifest.num_prompts)
    _info(f"trained {state.step} steps; checkpoint at {args.out}", stderr)
    final = state.loss_history[-1].to_dict()
    _emit(
        {
            "command": "train",
            "params": {
                "bundle": args.bundle, "alpha": args.alpha, "beta": args.beta,
                "seed": args.seed, "out": args.out, "epochs": args.epochs,
                "batch_size": args.batch_size, "lr": args.lr,
                "warmup_epochs": args.warmup_epochs, "warmup_lr": args.warmup_lr,
                "hidden_dim": args.hidden_dim,
            },
            "steps": state.step,
            "final": final,
            "checkpoint": args.out,
            "log": str(log_path),
        },
        stdout,
    )
    return 0


def _cmd_eval(args, stdout, stderr) -> int:
    if args.task == "b2n" and args.target is not None:
        raise _UsageError("--target only applies to transfer/dg tasks")
    bundle = load_bundle(Path(args.bundle) / "manifest.json")
    wg, rd, _meta = load_checkpoint(args.ckpt)
    if args.task == "b2n":
        report = eval_base_to_novel(wg, rd, bundle)
    else:
        target = bundle if args.target is None else load_bundle(Path(args.target) / "manifest.json")
        task = "cross_dataset" if args.task == "transfer" else "domain_gen"
        report = eval_transfer(wg, rd, target, task=task)
    _info(f"evaluated task {args.task}", stderr)
    _emit(
        {
            "command": "eval",
            "params": {
                "bundle": args.bundle, "ckpt": args.ckpt,
                "task": args.task, "target": args.target,
            },
            "report": report.to_dict(),
        },
        stdout,
    )
    return 0


def _cmd_verify_causal(args, stdout, stderr) -> int:
    max_dev = identity_max_deviation(trials=args.trials, seed=args.seed)
    scm, z = confounded_scm()
    gap = float(abs(conditional_y_given_z(scm, z) - do_z(scm, z)).max())
    _info(
        f"adjustment identity over {args.trials} random models: max deviation {max_dev:.3e}",
        stderr,
    )
    _emit(
        {
            "command": "verify-causal",
            "params": {"trials": args.trials, "seed": args.seed},
            "max_deviation": max_dev,
            "tolerance": 1e-10,
            "identity_ok": max_dev <= 1e-10,
            "confounding_witness_gap": gap,
        },
        stdout,
    )
    return 0


def _cmd_inspect(args, stdout, stderr) -> int:
    bundle = load_bundle(Path(args.bundle) / "manifest.json")
    man = bundle.manifest
    try:
        deviation = verify_bundle_logits(bundle)
        consistency = {"ok": True, "max_deviation": deviation}
    except EngineError as exc:
        consistency = {"ok": False, "detail": str(exc)}
    _emit(
        {
            "command": "inspect",
            "params": {"bundle": args.bundle},
            "dataset": man.dataset_name,
            "num_samples": bundle.num_samples,
            "num_classes": man.num_classes,
            "num_prompts": man.num_prompts,
            "backbones": [{"id": b.id, "feature_dim": b.feature_dim} for b in man.backbones],
            "temperature": man.temperature,
            "splits": {k: len(v) for k, v in man.splits.items()},
            "consistency": consistency,
        },
        stdout,
    )
    return 0


_HANDLERS = {
    "synth": _cmd_synth,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "verify-causal": _cmd_verify_causal,
    "inspect": _cmd_inspect,
}


def run(argv, stdout=None, stderr=None) -> int:
    """Parse argv and execute one subcommand; returns the process exit code."""
    stdout = sys.stdout if stdout is None else stdout
    stderr = sys.stderr if stderr is None else stderr
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.command](args, stdout, stderr)
    except _UsageError as exc:
        stderr.write(str(exc) + "\n")
        stderr.write(parser.format_usage())
        return 1
    except SystemExit:  # --help / --version paths
        return 0
    except DivergenceError as exc:
        stderr.write(f"training diverged: {exc}\n")
        return 3
    except (EngineError, OSError) as exc:
        stderr.write(f"error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
