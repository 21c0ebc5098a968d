"""Command-line driver for corpus, training, sampling and scoring runs.

Subcommands cover vocabulary building, training, fine-tuning, sampling,
evaluation, validation, reaction-center listing and synthetic corpora.

Every command accepts ``--config FILE``, a flat ``key = value`` document
whose keys are the long flag names with dashes or underscores. Flags given
on the command line override file values. Each run writes its resolved
settings as ``<output>.run.cfg`` next to its main output, and feeding that
file back through ``--config`` repeats the run.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from . import chemgraph, metrics, synth
from .nn import VARIANTS, ModelConfig, build_model
from .sample import SamplerConfig, generate
from .tensor import Rng
from .train import FineTuneProtocol, TrainConfig, fine_tune, load_checkpoint, save_checkpoint, split_dataset, train_epochs
from .vocab import Vocab, build_vocab, read_corpus

log = logging.getLogger("cgrgen")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------- run config


@dataclass
class RunConfig:
    """Resolved settings of one invocation."""

    command: str
    settings: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"command = {self.command}"]
        for key in sorted(self.settings):
            value = self.settings[key]
            if value is None:
                continue
            if isinstance(value, (list, tuple)):
                value = ",".join(map(str, value))
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def save(self, output) -> Path:
        path = Path(str(output) + ".run.cfg")
        path.write_text(self.to_text(), encoding="utf-8")
        return path


def read_config_file(path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment line."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(t) for t in str(text).split(",") if t.strip())


def _strs(text: str) -> tuple[str, ...]:
    return tuple(t.strip() for t in str(text).split(",") if t.strip())


# ------------------------------------------------------------- commands


def cmd_vocab(a) -> tuple[RunConfig, str | None]:
    corpus, stats = read_corpus(a.data, a.max_len)
    _report_skips(stats)
    build_vocab(corpus).save(a.out)
    print(f"wrote {a.out} from {len(corpus)} strings")
    return RunConfig("vocab", {"data": a.data, "out": a.out, "max_len": a.max_len}), a.out


def _model_config(a, vocab_size: int) -> ModelConfig:
    cfg = ModelConfig(
        variant=a.variant,
        vocab_size=vocab_size,
        max_len=a.max_len,
        lstm_units=a.lstm_units,
        lstm_layers=a.lstm_layers,
        tcn_filters=a.tcn_filters,
        tcn_kernel=a.tcn_kernel,
        tcn_dilations=a.dilations,
        dropout=a.dropout,
        dtype=a.dtype,
        seed=a.seed,
    )
    cfg.validate()
    return cfg


def cmd_train(a) -> tuple[RunConfig, str | None]:
    corpus, stats = read_corpus(a.data, a.max_len)
    _report_skips(stats)
    vocab = Vocab.load(a.vocab) if a.vocab else build_vocab(corpus)
    seqs = [vocab.encode(s, i) for i, s in enumerate(corpus, 1)]
    train, test = split_dataset(seqs, a.split, a.seed)
    config = _model_config(a, len(vocab))
    model = build_model(config, vocab=list(vocab.tokens))
    tc = TrainConfig(lr=a.lr, epochs=a.epochs, batch_size=a.batch_size, split=a.split, seed=a.seed)
    history = train_epochs(model, train, tc, test_data=test)
    save_checkpoint(model, a.ckpt)
    last = history[-1]
    test_loss = "n/a" if last.test_loss is None else f"{last.test_loss:.4f}"
    print(f"trained {last.epoch} epochs: train loss {last.train_loss:.4f} test loss {test_loss}")
    settings = {k: getattr(a, k) for k in _TRAIN_KEYS}
    return RunConfig("train", settings), a.ckpt


def cmd_finetune(a) -> tuple[RunConfig, str | None]:
    corpus, stats = read_corpus(a.data, a.max_len)
    _report_skips(stats)
    model = load_checkpoint(a.ckpt)
    vocab = Vocab(tuple(model.vocab))
    seqs = [vocab.encode(s, i) for i, s in enumerate(corpus, 1)]
    protocol = FineTuneProtocol(variant=a.protocol, epochs=a.epochs, batch_size=a.batch_size, lr=a.lr)
    records = fine_tune(model, seqs, protocol, Rng(a.seed, stream=5))
    save_checkpoint(model, a.out)
    for rec in records:
        print(f"phase {','.join(rec.phase.names)}: {rec.phase.epochs} epochs, lr {rec.phase.lr:g}, {rec.updates} updates")
    settings = {k: getattr(a, k) for k in ("data", "ckpt", "out", "protocol", "epochs", "batch_size", "lr", "seed", "max_len")}
    return RunConfig("finetune", settings), a.out


def cmd_sample(a) -> tuple[RunConfig, str | None]:
    model = load_checkpoint(a.ckpt)
    cfg = SamplerConfig(temperature=a.temperature, max_len=a.max_len, count=a.n, seed=a.seed, batch_size=a.batch_size)
    lines = generate(model, cfg)
    text = "".join(s + "\n" for s in lines)
    if a.out:
        Path(a.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    settings = {k: getattr(a, k) for k in ("ckpt", "out", "n", "temperature", "max_len", "seed", "batch_size")}
    return RunConfig("sample", settings), a.out


def _read_lines(path) -> list[str]:
    return [s.strip() for s in Path(path).read_text(encoding="utf-8").splitlines() if s.strip() and not s.startswith("#")]


def _read_generated(path) -> list[str]:
    # a blank line is an empty sample and counts against validity
    return [s.strip() for s in Path(path).read_text(encoding="utf-8").splitlines()]


def cmd_eval(a) -> tuple[RunConfig, str | None]:
    generated = _read_generated(a.data)
    reference = _read_lines(a.reference) if a.reference else None
    report = metrics.generation_report(
        generated, reference, a.radius, a.tanimoto, a.pair_cap, a.seed, a.max_len
    )
    Path(a.report).write_text(report.to_text(), encoding="utf-8")
    print(report.to_text(), end="")
    settings = {k: getattr(a, k) for k in ("data", "reference", "report", "radius", "tanimoto", "pair_cap", "seed", "max_len")}
    return RunConfig("eval", settings), a.report


def cmd_validate(a) -> tuple[RunConfig, str | None]:
    lines = _read_generated(a.data)
    counts = Counter()
    for s in lines:
        rep = chemgraph.validate(s, max_len=a.max_len)
        counts["valid"] += rep.valid
        counts["parse_failures"] += not rep.parse_ok
        if rep.parse_ok:
            counts["valence_failures"] += not (rep.valence_ok_before and rep.valence_ok_after)
            counts["aromatic_failures"] += not rep.aromatic_ok
    keys = ("valid", "parse_failures", "valence_failures", "aromatic_failures")
    text = f"n: {len(lines)}\n" + "".join(f"{k}: {counts[k]}\n" for k in keys)
    Path(a.report).write_text(text, encoding="utf-8")
    print(text, end="")
    return RunConfig("validate", {"data": a.data, "report": a.report, "max_len": a.max_len}), a.report


def cmd_rc(a) -> tuple[RunConfig, str | None]:
    rows = []
    for s in _read_lines(a.data):
        try:
            key = chemgraph.rc_hash(chemgraph.reaction_center(chemgraph.parse_cgrsmiles(s, max_len=a.max_len), a.radius))
            rows.append(f"{key.key:016x}\t{key.canonical_form}\t{s}")
        except chemgraph.EmptyCenter:
            rows.append(f"none\t-\t{s}")
        except chemgraph.ChemError as exc:
            log.warning("skipped %r: %s", s, exc)
            rows.append(f"error\t-\t{s}")
    Path(a.report).write_text("".join(r + "\n" for r in rows), encoding="utf-8")
    print(f"wrote {len(rows)} rows to {a.report}")
    return RunConfig("rc", {"data": a.data, "report": a.report, "radius": a.radius, "max_len": a.max_len}), a.report


def cmd_synth(a) -> tuple[RunConfig, str | None]:
    if a.kind == "oxidation":
        exclude = _read_lines(a.exclude) if a.exclude else ()
        lines = synth.oxidation_corpus(a.n, a.seed, exclude=exclude, max_len=a.max_len)
    else:
        lines = synth.reaction_corpus(a.n, a.seed, max_len=a.max_len, depth=a.depth)
    Path(a.out).write_text("".join(s + "\n" for s in lines), encoding="utf-8")
    print(f"wrote {len(lines)} reactions to {a.out}")
    settings = {k: getattr(a, k) for k in ("kind", "n", "seed", "out", "max_len", "depth", "exclude")}
    return RunConfig("synth", settings), a.out


def _report_skips(stats: dict) -> None:
    skipped = stats["skipped_length"] + stats["skipped_syntax"]
    if skipped:
        print(
            f"skipped {skipped} of {stats['lines']} lines "
            f"({stats['skipped_length']} too long, {stats['skipped_syntax']} untokenizable)",
            file=sys.stderr,
        )


_TRAIN_KEYS = (
    "data", "vocab", "ckpt", "variant", "lstm_units", "lstm_layers", "tcn_filters", "tcn_kernel",
    "dilations", "dropout", "dtype", "epochs", "batch_size", "lr", "split", "seed", "max_len",
)


# --------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cgrgen", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        p.set_defaults(func=func)
        p.add_argument("--config", help="flat key = value file; flags override it")
        p.add_argument("--max-len", type=int, default=chemgraph.DEFAULT_MAX_LEN)
        p.add_argument("--seed", type=int, default=0)
        return p

    p = command("vocab", cmd_vocab, "build a token vocabulary from a corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = command("train", cmd_train, "train a model from scratch")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="output checkpoint")
    p.add_argument("--vocab")
    p.add_argument("--variant", choices=VARIANTS, default="Hybrid")
    p.add_argument("--lstm-units", type=int, default=512)
    p.add_argument("--lstm-layers", type=int)
    p.add_argument("--tcn-filters", type=int, default=256)
    p.add_argument("--tcn-kernel", type=int, default=2)
    p.add_argument("--dilations", type=_ints, default=(1, 2, 4, 8, 16, 32))
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--dtype", choices=("float32", "float64"), default="float32")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--split", type=float, default=0.8)

    p = command("finetune", cmd_finetune, "adapt a checkpoint to a small corpus")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True, help="pretrained checkpoint")
    p.add_argument("--out", required=True, help="fine-tuned checkpoint")
    p.add_argument("--protocol", choices=("AU", "LL", "P1"), required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=1)
    p.add_argument("--lr", type=float, default=1e-3)

    p = command("sample", cmd_sample, "generate strings from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("-n", type=int, required=True)
    p.add_argument("-T", "--temperature", type=float, default=0.7)
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--batch-size", type=int, default=256)

    p = command("eval", cmd_eval, "score generated strings")
    p.add_argument("--data", required=True, help="generated strings")
    p.add_argument("--reference", help="training corpus for novelty and nearest-neighbour similarity")
    p.add_argument("--report", required=True)
    p.add_argument("--radius", type=int, default=1)
    p.add_argument("--tanimoto", type=_strs, default=(), help="comma list: internal_pairwise,nearest_to_dataset")
    p.add_argument("--pair-cap", type=int, default=metrics.PAIR_CAP)

    p = command("validate", cmd_validate, "count parse, valence and aromaticity failures")
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)

    p = command("rc", cmd_rc, "list reaction-center keys")
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--radius", type=int, default=1)

    p = command("synth", cmd_synth, "write a template-based synthetic corpus")
    p.add_argument("--kind", choices=("general", "oxidation"), default="general")
    p.add_argument("-n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--depth", type=int, default=0)
    p.add_argument("--exclude", help="file of strings that must not be drawn")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Load ``--config`` values as subcommand defaults, then parse so that
    explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    subparsers = parser._subparsers._group_actions[0].choices
    command = next((t for t in argv if t in subparsers), None)
    if known.config and command:
        values = read_config_file(known.config)
        values.pop("command", None)
        subparser = subparsers[command]
        by_dest = {a.dest: a for a in subparser._actions}
        defaults = {}
        for key, text in values.items():
            action = by_dest.get(key)
            if action is None or key in ("config", "help"):
                raise UsageError(f"{known.config}: unknown key {key!r} for {command}")
            try:
                defaults[key] = action.type(text) if action.type else text
            except ValueError as exc:
                raise UsageError(f"{known.config}: bad value for {key}: {exc}") from None
            if action.choices is not None and defaults[key] not in action.choices:
                raise UsageError(f"{known.config}: {key} must be one of {list(action.choices)}")
            action.required = False
        subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"cgrgen: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        run, output = args.func(args)
        if output:
            run.save(output)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"cgrgen {args.command}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
