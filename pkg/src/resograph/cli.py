"""Command-line interface.

Subcommands: train, eval, synth-gen, gradcheck, export-adj, inspect.
Exit codes: 0 on success, 2 for usage errors (argparse), 1 for runtime
failures, which are reported as a single machine-parsable stderr line:
`error:<kind>:<message>`.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import SynthConfig, load_dataset, save_dataset, synth_generate
from .exceptions import (ConfigError, DatasetFormatError, EvaluationError,
                         NumericError, ShapeError, SplitError)
from .gradcheck import finite_difference_check_many
from .graphs import adjacency_weights
from .network import ArchitectureConfig, forward, init_params
from .tensor import Tensor
from .training import (RunConfig, apply_overrides, cross_entropy,
                       evaluate_checkpoint, load_checkpoint, load_config, train)

_KNOWN_ERRORS = (ConfigError, DatasetFormatError, EvaluationError,
                 NumericError, ShapeError, SplitError, FileNotFoundError,
                 ValueError, ArithmeticError)


def _fail(exc) -> int:
    kind = type(exc).__name__
    message = str(exc).replace("\n", " ")
    print(f"error:{kind}:{message}", file=sys.stderr)
    return 1


def _add_override_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="key=value config file")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    parser.add_argument("--dataset", help="dataset directory")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--checkpoint-dir", dest="checkpoint_dir")


def _build_config(args) -> RunConfig:
    config = load_config(args.config) if args.config else RunConfig()
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set needs KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for key in ("dataset", "epochs", "batch_size", "learning_rate", "seed",
                "checkpoint_dir"):
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return apply_overrides(config, overrides)


def _cmd_train(args) -> int:
    config = _build_config(args)
    result = train(config, log=print)
    print(f"best_epoch={result.best_epoch}")
    print(f"best_val_f1={result.best_f1:.6f}")
    print(f"checkpoint={result.checkpoint_path}")
    return 0


def _cmd_eval(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    report = evaluate_checkpoint(checkpoint, args.split)
    sys.stdout.write(report.to_text())
    return 0


def _cmd_synth_gen(args) -> int:
    subjects = tuple(int(v) for v in args.subjects_per_class.split(","))
    config = SynthConfig(
        timesteps=args.timesteps,
        channels=args.channels,
        classes=args.classes,
        subjects_per_class=subjects if len(subjects) > 1 else subjects[0],
        samples_per_subject=args.samples_per_subject,
        noise_sigma=args.noise_sigma,
        signature_amplitude=args.signature_amplitude,
        wander_amplitude=args.wander_amplitude,
    )
    dataset = synth_generate(config, args.seed)
    save_dataset(dataset, args.out)
    print(f"wrote {len(dataset)} samples to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    arch = ArchitectureConfig(kernel_sizes=(2, 4), embed_dim=6, heads=2,
                              head_dim=4, attn_dim=5, layers=1)
    params = init_params(arch, channels=2, classes=2, input_length=16, rng=rng)
    x = Tensor(rng.normal(size=(2, 16, 2)))
    labels = rng.integers(0, 2, size=2)

    def loss_fn():
        return cross_entropy(forward(x, params), labels)

    worst = finite_difference_check_many(loss_fn, params.parameters(), step=args.step)
    print(f"max_relative_error={worst:.3e}")
    if worst >= args.tolerance:
        print(f"error:GradCheckFailed:{worst:.3e} >= {args.tolerance}", file=sys.stderr)
        return 1
    return 0


def _cmd_export_adj(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    kernels = checkpoint.config.effective_kernels()
    for m, raw in enumerate(checkpoint.params.adjacency):
        weights = adjacency_weights(raw).data
        target = out_dir / f"adjacency_m{m}_k{kernels[m]}.txt"
        np.savetxt(target, weights, fmt="%.12f")
        print(f"wrote {target}")
    return 0


def _cmd_inspect(args) -> int:
    dataset = load_dataset(args.dataset)
    print(f"timesteps={dataset.timesteps}")
    print(f"channels={dataset.channels}")
    print(f"classes={dataset.classes}")
    print(f"class_names={','.join(dataset.class_names)}")
    print(f"samples={len(dataset)}")
    print(f"subjects={len(set(dataset.subject_ids))}")
    counts = np.bincount(dataset.labels, minlength=dataset.classes)
    print("label_counts=" + " ".join(str(int(v)) for v in counts))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="resograph",
        description="Multi-resolution graph networks for multichannel series",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model and save a checkpoint")
    _add_override_flags(p_train)
    p_train.set_defaults(fn=_cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--split", default="test", choices=("train", "val", "test"))
    p_eval.set_defaults(fn=_cmd_eval)

    p_synth = sub.add_parser("synth-gen", help="generate a synthetic dataset")
    p_synth.add_argument("--out", required=True)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--timesteps", type=int, default=128)
    p_synth.add_argument("--channels", type=int, default=4)
    p_synth.add_argument("--classes", type=int, default=3)
    p_synth.add_argument("--subjects-per-class", default="5",
                         dest="subjects_per_class",
                         help="one int, or one per class comma-separated")
    p_synth.add_argument("--samples-per-subject", type=int, default=10,
                         dest="samples_per_subject")
    p_synth.add_argument("--noise-sigma", type=float, default=0.5, dest="noise_sigma")
    p_synth.add_argument("--signature-amplitude", type=float, default=0.25,
                         dest="signature_amplitude")
    p_synth.add_argument("--wander-amplitude", type=float, default=0.0,
                         dest="wander_amplitude")
    p_synth.set_defaults(fn=_cmd_synth_gen)

    p_grad = sub.add_parser("gradcheck", help="finite-difference check of the model")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--step", type=float, default=1e-5)
    p_grad.add_argument("--tolerance", type=float, default=1e-4)
    p_grad.set_defaults(fn=_cmd_gradcheck)

    p_adj = sub.add_parser("export-adj", help="write learned adjacency matrices")
    p_adj.add_argument("--checkpoint", required=True)
    p_adj.add_argument("--out", required=True)
    p_adj.set_defaults(fn=_cmd_export_adj)

    p_inspect = sub.add_parser("inspect", help="summarize a dataset directory")
    p_inspect.add_argument("dataset")
    p_inspect.set_defaults(fn=_cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except _KNOWN_ERRORS as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
