"""Command-line entry point: ``xduct {generate,train,eval,decode,analyze}``.

Errors are reported as one line on stderr, ``error: <Kind>: <message>``.
Usage errors exit with status 2, every other failure with status 1.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .data import (
    TaskKind,
    build_vocab,
    gen_synthetic,
    join_target,
    read_tsv,
    require_examples,
    split_g2p,
    write_tsv,
)
from .decode import confusion_table, decode_many, export_heatmap
from .errors import ConfigError, XductError
from .metrics import TASK_METRICS, evaluate
from .models import PRESETS, Architecture, ModelConfig, build_model, parameter_count
from .training import Checkpoint, TrainConfig, fit, load_checkpoint, save_checkpoint

log = logging.getLogger("xduct")

# Training batch size per task when --batch-size is not given.
TASK_BATCH_SIZE = {"g2p": 20, "translit": 50, "inflection": 20, "synthetic": 20}
LARGE_CLIP_NORM = 5.0
MODEL_FIELDS = ("d_e", "d_h", "enc_layers", "d_dec", "dec_layers", "dropout", "d_s")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    task: str
    model: dict
    train: dict
    seed: int
    inputs: dict
    out: str
    build: str
    deterministic: bool = True
    extra: dict = field(default_factory=dict)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def build_id() -> str:
    """Package version plus the git revision of the source tree, when available."""
    try:
        rev = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True, text=True, timeout=5,
        )
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


# -- argument parsing ----------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--arch", choices=[a.value for a in Architecture], default="hard")
    p.add_argument("--reinforce", action="store_true", help="train hard attention with REINFORCE")
    p.add_argument("--samples", type=int, default=None, help="REINFORCE samples per step")
    p.add_argument("--preset", choices=sorted(PRESETS), default="small")
    p.add_argument("--uncontrolled", action="store_true",
                   help="soft-if without the parameter-count control")
    for name in ("d_e", "d_h", "enc_layers", "d_dec", "dec_layers", "d_s"):
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="xduct", description="Neural string transducers with exact hard attention.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a synthetic train/dev/test set")
    g.add_argument("--rule", choices=["copy", "reverse", "reduplicate"], required=True)
    g.add_argument("--n", type=int, default=2000)
    g.add_argument("--n-dev", type=int, default=None)
    g.add_argument("--n-test", type=int, default=None)
    g.add_argument("--min-len", type=int, default=None)
    g.add_argument("--max-len", type=int, default=8)
    g.add_argument("--alphabet", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="fit a model and write best.ckpt, log.tsv, manifest.json")
    t.add_argument("--task", choices=[k.value for k in TaskKind], required=True)
    _add_model_flags(t)
    t.add_argument("--data", required=True, help="training file")
    t.add_argument("--dev", default=None, help="development file (g2p: split off --data if absent)")
    t.add_argument("--test", default=None)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-floor", type=float, default=1e-5)
    t.add_argument("--max-epochs", type=int, default=50)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--clip", type=float, default=None, help="gradient norm cap (large preset: 5)")
    t.add_argument("--no-clip", action="store_true")
    t.add_argument("--threads", type=int, default=1, help="threads for dev decoding")
    t.add_argument("--deterministic", action="store_true",
                   help="single-threaded everywhere (training is always reproducible)")
    t.add_argument("--checked", action="store_true", help="fail fast on non-finite values")

    for name, helptext in (("eval", "decode a test file and score it"),
                           ("decode", "decode sources and print hypotheses"),
                           ("analyze", "monotonicity confusion table and heatmaps")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--checkpoint", required=True)
        c.add_argument("--task", choices=[k.value for k in TaskKind], default=None)
        c.add_argument("--arch", choices=[a.value for a in Architecture], default=None,
                       help="expected architecture; a mismatch is an error")
        c.add_argument("--data", "--test", dest="data", required=True)
        c.add_argument("--out", default=None if name == "decode" else ".")
        c.add_argument("--max-len", type=int, default=None)
        c.add_argument("--threads", type=int, default=1)
        c.add_argument("--deterministic", action="store_true")
        if name == "analyze":
            c.add_argument("--threshold", type=float, default=0.1)
            c.add_argument("--heatmaps", type=int, default=0)
            c.add_argument("--include-eos", action="store_true")
    return parser


def model_config_from_args(args) -> ModelConfig:
    overrides = {k: getattr(args, k) for k in MODEL_FIELDS if getattr(args, k) is not None}
    cfg = ModelConfig.preset(args.preset, arch=args.arch, reinforce=args.reinforce,
                             uncontrolled=args.uncontrolled, **overrides)
    if args.samples is not None:
        cfg.samples = args.samples
    cfg.validate()
    return cfg


def train_config_from_args(args) -> TrainConfig:
    clip = args.clip
    if clip is None and args.preset == "large":
        clip = LARGE_CLIP_NORM
    if args.no_clip:
        clip = None
    return TrainConfig(
        lr=args.lr, lr_floor=args.lr_floor, max_epochs=args.max_epochs,
        batch_size=args.batch_size or TASK_BATCH_SIZE[args.task],
        clip_norm=clip, seed=args.seed, checked=args.checked,
    )


# -- commands ------------------------------------------------------------

def cmd_generate(args) -> int:
    ds = gen_synthetic(args.rule, args.n, args.max_len, args.alphabet, args.seed,
                       min_len=args.min_len, n_dev=args.n_dev, n_test=args.n_test)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split in ("train", "dev", "test"):
        write_tsv(getattr(ds, split), out / f"{split}.tsv", TaskKind.SYNTHETIC)
    print(f"wrote {len(ds.train)}/{len(ds.dev)}/{len(ds.test)} examples to {out}")
    return 0


def _threads(args) -> int:
    return 1 if args.deterministic else max(1, args.threads)


def cmd_train(args) -> int:
    task = TaskKind(args.task)
    model_cfg = model_config_from_args(args)
    train_cfg = train_config_from_args(args)
    train_cfg.validate()
    train = read_tsv(args.data, task)
    require_examples(train, f"{args.data}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    extra = {}
    if args.dev is not None:
        dev = read_tsv(args.dev, task)
    elif task is TaskKind.G2P:
        train, dev, test = split_g2p(train, args.seed)
        for name, part in (("train", train), ("dev", dev), ("test", test)):
            write_tsv(part, out / f"split.{name}.tsv", task)
        extra["split"] = "85/5/10 split of --data written to split.*.tsv"
    else:
        raise UsageError("--dev is required for this task")
    require_examples(dev, f"{args.dev or 'dev split'}")

    manifest = RunManifest(
        command="train", task=task.value, model=model_cfg.to_dict(), train=asdict(train_cfg),
        seed=args.seed, inputs={"data": args.data, "dev": args.dev, "test": args.test},
        out=str(out), build=build_id(), deterministic=True, extra=extra,
    )
    manifest.write(out / "manifest.json")

    src_vocab = build_vocab(train, "source")
    tgt_vocab = build_vocab(train, "target")
    model = build_model(model_cfg, src_vocab, tgt_vocab, seed=args.seed)
    log.info("model %s, %d parameters", model.arch.value, parameter_count(model))

    log_path = out / "log.tsv"
    with log_path.open("w", encoding="utf-8") as fh:
        fh.write("epoch\ttrain_loss\tdev_loss\tdev_metric\tlr\n")

        def on_epoch(rec, improved, _model):
            fh.write(f"{rec.epoch}\t{rec.train_loss:.6f}\t{rec.dev_loss:.6f}\t{rec.dev_metric:.4f}\t{rec.lr:.6g}\n")
            fh.flush()

        result = fit(model, train, dev, train_cfg, task=task.value, on_epoch=on_epoch)
    save_checkpoint(result.checkpoint, out / "best.ckpt")
    print(f"best epoch {result.best_epoch}: dev accuracy {result.log[result.best_epoch - 1].dev_metric:.1f}")

    if args.test is not None:
        test = read_tsv(args.test, task)
        report = _score(model, test, task, _threads(args), None)
        report.write(out, task.value)
        print(report.summary_line(task.value))
    return 0


def _load(args):
    ckpt = load_checkpoint(args.checkpoint)
    if args.arch is not None and Architecture(args.arch) is not ckpt.config.arch:
        raise ConfigError(f"checkpoint holds a {ckpt.config.arch.value} model, not {args.arch}")
    task = args.task or ckpt.task
    if task is None:
        raise UsageError("--task is required: the checkpoint does not record one")
    if ckpt.task is not None and task != ckpt.task:
        raise ConfigError(f"checkpoint was trained on {ckpt.task}, not {task}")
    return ckpt.to_model(), TaskKind(task)


def _decode(model, examples, threads, max_len):
    srcs = [model.src_vocab.encode(ex.source) for ex in examples]
    return decode_many(model, srcs, threads=threads, max_len=max_len)


def _score(model, examples, task, threads, max_len):
    require_examples(examples, "test set")
    results = _decode(model, examples, threads, max_len)
    sep = " " if task is TaskKind.G2P else ""
    return evaluate(
        [list(ex.target) for ex in examples],
        [r.symbols for r in results],
        ["".join(ex.source) for ex in examples],
        joiner=sep,
    )


def cmd_eval(args) -> int:
    model, task = _load(args)
    examples = read_tsv(args.data, task)
    report = _score(model, examples, task, _threads(args), args.max_len)
    report.write(args.out, task.value)
    print(report.summary_line(task.value))
    return 0


def cmd_decode(args) -> int:
    model, task = _load(args)
    examples = read_tsv(args.data, task)
    results = _decode(model, examples, _threads(args), args.max_len)
    lines = [f"{''.join(ex.source)}\t{join_target(r.symbols, task)}\n" for ex, r in zip(examples, results)]
    if args.out is None:
        sys.stdout.writelines(lines)
    else:
        Path(args.out).write_text("".join(lines), encoding="utf-8")
    return 0


def cmd_analyze(args) -> int:
    if not 0.0 <= args.threshold < 1.0:
        raise UsageError("--threshold must lie in [0, 1)")
    if args.heatmaps < 0:
        raise UsageError("--heatmaps must be non-negative")
    model, task = _load(args)
    examples = read_tsv(args.data, task)
    require_examples(examples, str(args.data))
    results = _decode(model, examples, _threads(args), args.max_len)
    table = confusion_table(results, [list(ex.target) for ex in examples], args.threshold, args.include_eos)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "confusion.tsv").write_text(table.to_tsv(), encoding="utf-8")
    n_maps = min(args.heatmaps, len(results))
    for k in range(n_maps):
        export_heatmap(results[k], out / f"heatmap_{k:04d}.tsv")
    print(f"monotonic {100 * table.fraction_monotonic():.1f}% of {table.total}; {n_maps} heatmaps")
    return 0


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "decode": cmd_decode,
    "analyze": cmd_analyze,
}


def _setup_logging() -> None:
    level = os.environ.get("XDUCT_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(level=levels.get(level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: UsageError: {exc}", file=sys.stderr)
        return 2
    except XductError as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {type(exc).__name__}: {_one_line(exc)}", file=sys.stderr)
        return 1


def _one_line(exc) -> str:
    return " ".join(str(exc).split())


if __name__ == "__main__":
    sys.exit(main())
