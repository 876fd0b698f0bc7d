"""Command line: synth, prepare, train, generate, evaluate.

Exit codes: 0 success, 1 usage or configuration error, 2 data or I/O error,
3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import platform
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import RunConfig, load_run_config
from .data import corpus_stats
from .data.delex import relexicalize_partial
from .data.io import FORMATS, load_corpus, save_corpus
from .data.pipeline import AlignPolicy, align_filter, augment_corpus, make_partitions, prepare_corpus, split_by_group
from .data.synth import SynthConfig, synth_corpus
from .data.types import Corpus
from .errors import CheckpointError, ContractError, CorpusFormatError, MRParseError
from .estimator import parse_decode
from .metrics import evaluate_corpus, parse_metrics
from .model import ModelConfig, NlgModel, build_vocabs, decode_beam, decode_greedy, make_examples
from .trainer import TrainConfig, checkpoint, fingerprint_file, restore, train, write_manifest

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3

logger = logging.getLogger("mrnlg")


class UsageError(Exception):
    pass


class InvariantError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _say(msg: str = "") -> None:
    print(msg, flush=True)


def _stats_table(rows: list[tuple[str, dict]]) -> str:
    header = ["Dataset", "Size", "Slots", "DAs", "Words"]
    body = [[name] + [str(s[k]) for k in header[1:]] for name, s in rows]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([fmt(header)] + [fmt(r) for r in body])


def _on_off(value: str) -> bool:
    return value == "on"


def cmd_synth(args) -> int:
    config = SynthConfig(n_groups=args.groups, instances_per_group=args.per_group, n_slot_types=args.slot_types,
                         context=_on_off(args.context), noise_rate=args.noise)
    try:
        config.validate()
    except ContractError as exc:
        raise UsageError(str(exc)) from exc
    corpus = synth_corpus(config, seed=args.seed, name=Path(args.out).stem)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, args.out)
    _say(_stats_table([(corpus.name, corpus_stats(corpus))]))
    return EXIT_OK


def _parse_ints(text: str, what: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{what} must be comma-separated integers, got {text!r}") from None


def _check_prepared(parts: list[Corpus], splits: list[tuple[Corpus, Corpus, Corpus]]) -> None:
    for small, big in zip(parts, parts[1:]):
        if not {i.id for i in small}.issubset({i.id for i in big}):
            raise InvariantError(f"partition {small.name} is not contained in {big.name}")
    for part, split in zip(parts, splits):
        groups = [set(s.group_ids) for s in split]
        if groups[0] & groups[1] or groups[0] & groups[2] or groups[1] & groups[2]:
            raise InvariantError(f"splits of {part.name} share question groups")
        if sum(len(s) for s in split) != len(part):
            raise InvariantError(f"splits of {part.name} do not cover the partition")


def cmd_prepare(args) -> int:
    ratios = _parse_ints(args.split, "--split")
    if len(ratios) != 3 or min(ratios) < 0 or sum(ratios) == 0:
        raise UsageError("--split needs three non-negative integers, e.g. 80,10,10")
    ratios = [r / sum(ratios) for r in ratios]
    sizes = _parse_ints(args.partitions, "--partitions") if args.partitions else []

    raw = load_corpus(args.input, args.format)
    corpus = prepare_corpus(raw)
    kept, drops = align_filter(corpus, AlignPolicy())
    if _on_off(args.augment):
        kept = augment_corpus(kept)
    try:
        parts = make_partitions(kept, sizes) if sizes else [kept.with_instances(kept.instances, f"{kept.name}.all")]
        splits = [split_by_group(p, ratios, seed=args.seed) for p in parts]
    except ContractError as exc:
        raise UsageError(str(exc)) from exc
    _check_prepared(parts, splits)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = [f"part{k}" for k in range(1, len(parts) + 1)] if sizes else ["all"]
    rows = []
    for name, part, split in zip(names, parts, splits):
        (out / name).mkdir(exist_ok=True)
        for which, sub in zip(("train", "dev", "test"), split):
            save_corpus(sub, out / name / f"{which}.jsonl")
        rows.append((name, corpus_stats(part)))
    with (out / "drops.jsonl").open("w", encoding="utf-8") as f:
        for d in drops:
            f.write(json.dumps(d.to_json(), sort_keys=True) + "\n")
    write_manifest(out / "manifest.txt", {
        "command": "prepare", "input": str(args.input), "input_sha256": fingerprint_file(args.input),
        "format": args.format, "augment": args.augment, "split": args.split, "partitions": args.partitions or "",
        "seed": args.seed, "loaded": len(raw), "kept": len(kept), "dropped": len(drops),
    })
    _say(f"loaded {len(raw)}, kept {len(kept)}, dropped {len(drops)}")
    _say(_stats_table(rows))
    return EXIT_OK


_MODEL_FLAGS = [f for f in dataclasses.fields(ModelConfig) if f.name not in ("tasks", "seed")]
_TRAIN_FLAGS = [f for f in dataclasses.fields(TrainConfig) if f.name != "seed"]


def _build_run_config(args) -> RunConfig:
    config = load_run_config(args.config) if args.config else RunConfig()
    for section, fields in (("model", _MODEL_FLAGS), ("train", _TRAIN_FLAGS)):
        for f in fields:
            value = getattr(args, f"{section}_{f.name}")
            if value is not None:
                config.set(section, f.name, value)
    if args.seed is not None:
        config.set("model", "seed", str(args.seed))
        config.set("train", "seed", str(args.seed))
    if args.metrics is not None:
        config.set("data", "metrics", args.metrics)
    return config


def _resolve_data(entry: str) -> tuple[str, Path, Path]:
    if "=" not in entry:
        raise UsageError(f"--data expects task=path, got {entry!r}")
    task, path = entry.split("=", 1)
    task, path = task.strip(), Path(path.strip())
    if not task:
        raise UsageError(f"--data entry {entry!r} has an empty task name")
    if path.is_dir():
        train_path, dev_path = path / "train.jsonl", path / "dev.jsonl"
    else:
        train_path = path
        if "train" not in path.name:
            raise UsageError(f"cannot infer the dev file for {path}; pass a directory or a *train* file")
        dev_path = path.with_name(path.name.replace("train", "dev"))
    for p in (train_path, dev_path):
        if not p.is_file():
            raise UsageError(f"task {task!r}: missing file {p}")
    return task, train_path, dev_path


def cmd_train(args) -> int:
    try:
        run = _build_run_config(args)
        entries = [_resolve_data(e) for e in args.data]
        tasks = tuple(t for t, _, _ in entries)
        if len(set(tasks)) != len(tasks):
            raise UsageError(f"duplicate task names in --data: {list(tasks)}")
        model_config = run.model_config(tasks)
        train_config = run.train_config()
    except ContractError as exc:
        raise UsageError(str(exc)) from exc

    corpora = {}
    for task, train_path, dev_path in entries:
        corpora[task] = (prepare_corpus(load_corpus(train_path)), prepare_corpus(load_corpus(dev_path)))
        for corpus in corpora[task]:
            if not len(corpus):
                raise UsageError(f"task {task!r}: {corpus.name} is empty")
            if model_config.utterance_mode != "none" and any(i.mr.context is None for i in corpus):
                raise UsageError(f"utterance_mode={model_config.utterance_mode} but {corpus.name} "
                                 f"has instances without context")

    vocabs = build_vocabs(model_config, {t: corpora[t][0].instances for t in tasks})
    model = NlgModel(model_config, vocabs)
    datasets = {
        t: (make_examples(corpora[t][0], model_config, vocabs, t, run.all_references),
            make_examples(corpora[t][1], model_config, vocabs, t, all_references=False))
        for t in tasks
    }

    def report(rec):
        train_part = " ".join(f"{t}={v:.5f}" for t, v in rec.train_loss.items())
        dev_part = " ".join(f"{t}={v:.5f}" for t, v in rec.dev_loss.items())
        acc_part = " ".join(f"{t}={v:.4f}" for t, v in rec.train_accuracy.items())
        _say(f"epoch {rec.epoch:4d}  train {train_part}  dev {dev_part}  val {rec.val_loss:.5f}  acc {acc_part}")

    _say(f"architecture {model_config.architecture}; tasks {', '.join(tasks)}; "
         f"{sum(p.size for p in model.parameters())} parameters")
    start = time.perf_counter()
    model, history = train(model, datasets, train_config, on_epoch=report)
    elapsed = time.perf_counter() - start
    _say(f"stopped: {history.stop_reason}; best epoch {history.best_epoch} (val {history.best_val_loss:.5f})")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = out / "model.ckpt"
    checkpoint(model, history, ckpt)
    (out / "history.json").write_text(json.dumps(history.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    (out / "timing.json").write_text(json.dumps({"seconds": elapsed, "epochs": [
        {"epoch": r.epoch, "seconds": r.wall_time} for r in history.epochs]}) + "\n", encoding="utf-8")
    first_counts = {t: history.schedule.count(t) for t in tasks}
    write_manifest(out / "manifest.txt", {
        "command": "train",
        "architecture": model_config.architecture,
        "model": model_config.to_dict(),
        "train": train_config.to_dict(),
        "data": {t: {"train": str(tp), "dev": str(dp), "train_sha256": fingerprint_file(tp),
                     "dev_sha256": fingerprint_file(dp)} for t, tp, dp in entries},
        "run": run.to_dict()["data"],
        "schedule": {"order": ",".join(tasks), "mode": "round-robin, smaller tasks cycle",
                     "first_epoch_batches": first_counts},
        "shared_encoders": len(tasks) > 1,
        "best_epoch": history.best_epoch,
        "stop_reason": history.stop_reason,
        "checkpoint_sha256": fingerprint_file(ckpt),
        "numpy_version": np.__version__,
        "python_version": platform.python_version(),
    })
    return EXIT_OK


def cmd_generate(args) -> int:
    try:
        beam = parse_decode(args.decode)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    model, _ = restore(args.model)
    task = args.task or model.config.tasks[0]
    if task not in model.config.tasks:
        raise UsageError(f"model has no task {task!r}; available: {', '.join(model.config.tasks)}")
    corpus = load_corpus(args.input, args.format)
    unresolved_count = 0
    lines = []
    for inst in corpus:
        if beam:
            tokens = decode_beam(model, task, inst, beam)[0][0]
        else:
            tokens = decode_greedy(model, task, inst)
        text = " ".join(tokens)
        if _on_off(args.lexicalize):
            lexical, unresolved = relexicalize_partial(text, inst.mr.slots)
            if unresolved:
                unresolved_count += 1
                print(f"warning: {inst.id}: unresolved placeholders {' '.join(unresolved)}; "
                      f"emitting delexicalized text", file=sys.stderr)
            else:
                text = lexical
        lines.append(json.dumps({"id": inst.id, "output": text}, sort_keys=True))
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    Path(args.out).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    _say(f"generated {len(lines)} outputs ({args.decode}); {unresolved_count} with unresolved placeholders")
    return EXIT_OK


def read_outputs(path) -> list[tuple[str, str]]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(f"invalid JSON ({exc.msg})", path, n) from None
        if not isinstance(obj, dict) or not isinstance(obj.get("id"), str) or not isinstance(obj.get("output"), str):
            raise CorpusFormatError("each line needs string 'id' and 'output'", path, n)
        out.append((obj["id"], obj["output"]))
    return out


def cmd_evaluate(args) -> int:
    try:
        metrics = parse_metrics(args.metrics)
    except ContractError as exc:
        raise UsageError(str(exc)) from exc
    outputs = read_outputs(args.outputs)
    corpus = load_corpus(args.corpus, args.format)
    for k, inst in enumerate(corpus):
        got = outputs[k][0] if k < len(outputs) else None
        if got != inst.id:
            raise UsageError(f"outputs and corpus are misaligned at instance {inst.id!r} "
                             f"(outputs line {k + 1} has {got!r})")
    if len(outputs) > len(corpus):
        raise UsageError(f"outputs have extra entry {outputs[len(corpus)][0]!r} beyond the corpus")
    report = evaluate_corpus([o for _, o in outputs], corpus, metrics)
    if args.report:
        Path(args.report).parent.mkdir(parents=True, exist_ok=True)
        report.write(args.report)
    _say(report.table().rstrip("\n"))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrnlg", description="MR-to-text generation toolkit")
    parser.add_argument("--version", action="version", version=f"mrnlg {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log debug output")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic QA corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--groups", type=int, default=50)
    p.add_argument("--per-group", type=int, default=10)
    p.add_argument("--slot-types", type=int, default=20)
    p.add_argument("--context", choices=("on", "off"), default="on")
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("prepare", help="filter, augment, partition and split a corpus")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default="qa-jsonl")
    p.add_argument("--augment", choices=("on", "off"), default="on")
    p.add_argument("--split", default="80,10,10")
    p.add_argument("--partitions", default="", help="comma-separated slot-type counts, e.g. 147,210,369")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train a generator (several --data entries train jointly)")
    p.add_argument("--config")
    p.add_argument("--data", action="append", required=True, metavar="TASK=PATH",
                   help="directory with train.jsonl/dev.jsonl, or a *train* file with a *dev* sibling")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--metrics")
    for section, fields in (("model", _MODEL_FLAGS), ("train", _TRAIN_FLAGS)):
        for f in fields:
            p.add_argument(f"--{f.name.replace('_', '-')}", dest=f"{section}_{f.name}", metavar="VALUE")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="decode a corpus with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=FORMATS, default="qa-jsonl")
    p.add_argument("--task")
    p.add_argument("--decode", default="greedy", help="greedy or beam:K")
    p.add_argument("--lexicalize", choices=("on", "off"), default="on")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="score generated outputs")
    p.add_argument("--outputs", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=FORMATS, default="qa-jsonl")
    p.add_argument("--metrics", default="bleu,ser_mr,ser_trg,ser_mtrg")
    p.add_argument("--report")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"mrnlg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mrnlg {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, MRParseError, CheckpointError, OSError) as exc:
        print(f"mrnlg {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InvariantError, ContractError) as exc:
        print(f"mrnlg {args.command}: invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
