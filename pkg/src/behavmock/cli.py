"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error, 3 failure of the
program under test.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from pathlib import Path
from typing import List, Optional

from .errors import BehavmockError, PutFailure, PutTimeout

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_PUT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def parse_duration(text: str) -> float:
    """``10``, ``10s``, ``500ms``, ``2m`` -> seconds."""
    m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+)\s*(ms|s|m)?\s*", str(text))
    if not m:
        raise argparse.ArgumentTypeError(f"bad duration {text!r}")
    value = float(m.group(1))
    return value * {"ms": 1e-3, "s": 1.0, "m": 60.0, None: 1.0}[m.group(2)]


def _grammar(spec: str):
    from .grammar import bundled_grammar, load_grammar
    if Path(spec).is_file():
        return load_grammar(spec)
    return bundled_grammar(spec)


def _gen_config(args):
    from .generation import GeneratorConfig
    return GeneratorConfig(min_expansions=args.min, max_expansions=args.max, sliding_window=args.sliding,
                           worker_count=args.workers, batch_size=args.batch_size, master_seed=args.seed,
                           attempts_per_config=args.attempts, escalation_step=args.step, refiner=args.refiner)


def _add_gen_args(p):
    p.add_argument("--grammar", default="markdown", help="grammar file or bundled grammar name")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--min", type=int, default=10, help="minimum non-terminal expansions")
    p.add_argument("--max", type=int, default=20, help="maximum non-terminal expansions")
    p.add_argument("--sliding", action="store_true", help="advance bounds through a sliding window")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--attempts", type=int, default=100_000, help="failed attempts before escalating bounds")
    p.add_argument("--step", type=int, default=10, help="escalation step")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--refiner", default=None, help="semantic refiner, e.g. sql-join")
    p.add_argument("--out", required=True, help="output directory")


def cmd_generate(args):
    from .generation import HASHES_FILE, HashStore, Synthesizer, write_dataset
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    store = HashStore.load(out / HASHES_FILE)
    records = Synthesizer(_grammar(args.grammar), _gen_config(args), store).run(args.count)
    write_dataset(records, out / "inputs.jsonl")
    store.save(out / HASHES_FILE)
    print(f"wrote {len(records)} inputs to {out / 'inputs.jsonl'}")


def cmd_collect(args):
    from .generation import HASHES_FILE, HashStore, collect_pairs
    out = Path(args.out)
    store = HashStore.load(out / HASHES_FILE)
    _, summary = collect_pairs(_grammar(args.grammar), _gen_config(args), args.put, args.count, out,
                               timeout=args.timeout, store=store)
    print(f"collected {summary.records} pairs ({summary.put_failures} PUT failures, "
          f"{summary.escalations} escalations) in {out}")


def cmd_tokenize(args):
    from .corpus import tokenize_records, vocabularies
    from .generation import read_dataset
    records = read_dataset(args.dataset)
    src, tgt = tokenize_records(records, args.source_format, args.target_format, args.policy, args.inverse)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "tokens.jsonl", "w", encoding="utf-8") as fh:
        for s, t in zip(src, tgt):
            fh.write(json.dumps({"source": s, "target": t}, ensure_ascii=False) + "\n")
    sv, tv = vocabularies(src, tgt)
    sv.save(out / "source.vocab")
    tv.save(out / "target.vocab")
    print(f"{len(src)} pairs; source vocabulary {len(sv)}, target vocabulary {len(tv)}")


def _encoded_dataset(args, inverse=False):
    from .corpus import encode_pairs, tokenize_records, vocabularies
    from .generation import read_dataset
    records = read_dataset(args.dataset)
    src, tgt = tokenize_records(records, args.source_format, args.target_format, args.policy, inverse)
    sv, tv = vocabularies(src, tgt)
    return encode_pairs(src, tgt, sv, tv), sv, tv


def cmd_tune(args):
    from .hyperopt import SearchSpace, TuningData, two_phase_search
    pairs, sv, tv = _encoded_dataset(args)
    if args.samples:
        pairs = pairs[:args.samples]
    report = two_phase_search(TuningData(pairs, sv, tv), args.phase1_trials, args.phase2_trials, args.seed,
                              SearchSpace(), args.phase1_epochs, args.phase2_epochs)
    report.save(args.report)
    print(f"best model config: {report.model_config.to_dict()}")
    print(f"best train config: {report.train_config.to_dict()}")


def cmd_train(args):
    from .model import ModelConfig, TrainConfig, init_model, save_checkpoint, train
    from .tokenization import MaskPolicy
    pairs, sv, tv = _encoded_dataset(args, args.inverse)
    mcfg = ModelConfig(args.encoder_layers, args.decoder_layers, args.embedding_size, args.feedforward_size,
                       args.attention_heads, args.dropout)
    tcfg = TrainConfig(learning_rate=args.learning_rate, weight_decay=args.weight_decay, schedule=args.schedule,
                       clip_gradients=not args.no_clip, epochs=args.epochs, batch_size=args.batch_size,
                       seed=args.seed)
    if args.config:
        from .pipeline import PipelineConfig
        pcfg = PipelineConfig.load(args.config)
        mcfg, tcfg = pcfg.model, pcfg.training
    model = init_model(mcfg, sv, tv, tcfg.seed)
    _, history = train(model, pairs, tcfg)
    fmts = (args.target_format, args.source_format) if args.inverse else (args.source_format, args.target_format)
    save_checkpoint(model, args.out, extra={"source_format": fmts[0], "target_format": fmts[1],
                                            "policy": MaskPolicy.coerce(args.policy).value,
                                            "mode": "inverse" if args.inverse else "forward"})
    last = history[-1]
    print(f"trained {model.param_count()} parameters; final train loss {last['train_loss']:.4f}, "
          f"validation loss {last['val_loss']}")


def _read_samples(path, tokens: bool, fmt: Optional[str]):
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if tokens:
        return [line.split() for line in lines]
    from .deployment import content_tokens
    from .tokenization import get_tokenizer
    docs = [json.loads(line) for line in lines if line.strip()]
    if fmt is None:
        return [d.split() for d in docs]
    tok = get_tokenizer(fmt)
    return [content_tokens(tok, d) for d in docs]


def cmd_evaluate(args):
    from .metrics import evaluate
    refs = _read_samples(args.ref, args.tokens, args.format)
    hyps = _read_samples(args.hyp, args.tokens, args.format)
    if len(refs) != len(hyps):
        raise BehavmockError(f"{len(refs)} references but {len(hyps)} hypotheses")
    report = evaluate(refs, hyps)
    print(report.to_text(), end="")
    if args.out:
        report.save(args.out)


def cmd_predict(args):
    from .deployment import DeploymentSession, predict_many, validate_forward, validate_inverse
    session = DeploymentSession.from_checkpoint(args.checkpoint, mode=args.mode, put=args.put,
                                                max_len=args.max_len, timeout=args.timeout)
    text = sys.stdin.read() if args.input == "-" else Path(args.input).read_text(encoding="utf-8")
    docs = [json.loads(line) for line in text.splitlines() if line.strip()] if args.jsonl else [text]
    results = predict_many(session, docs)
    outputs = [o for o, _ in results]
    if args.jsonl:
        body = "".join(json.dumps(o, ensure_ascii=False) + "\n" for o in outputs)
    else:
        body = outputs[0]
    if args.out:
        Path(args.out).write_text(body, encoding="utf-8")
    else:
        sys.stdout.write(body)
    if args.trace:
        Path(args.trace).write_text("".join(t.to_text() for _, t in results), encoding="utf-8")
    if args.validate:
        if args.put is None:
            raise BehavmockError("--validate needs --put")
        for doc, out in zip(docs, outputs):
            if args.mode == "inverse":
                verdict = validate_inverse(session, doc, out)
                if verdict.rejected:
                    print(f"rejected: {verdict.reason}", file=sys.stderr)
                else:
                    print(verdict.report.to_text(), end="", file=sys.stderr)
            else:
                print(validate_forward(session, doc, out).to_text(), end="", file=sys.stderr)


def cmd_pipeline(args):
    from .pipeline import PipelineConfig, pipeline_run
    if args.config == "demo" and not Path("demo").exists():
        from importlib import resources
        text = resources.files("behavmock").joinpath("data", "demo.ini").read_text(encoding="utf-8")
        cfg = PipelineConfig.from_string(text, base_dir=".")
    else:
        cfg = PipelineConfig.load(args.config)
    if args.workdir:
        cfg.workdir = str(Path(args.workdir).resolve())
    report = pipeline_run(cfg)
    print(json.dumps(report, indent=2))


def cmd_subject_convert(args):
    from .subject import main
    return main()


def _add_dataset_args(p):
    p.add_argument("--dataset", required=True, help="dataset directory or JSONL file")
    p.add_argument("--source-format", default="markdown")
    p.add_argument("--target-format", default="html")
    p.add_argument("--policy", default="optimizing", choices=["simplified", "optimizing", "exhaustive"])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="behavmock", description="Learn reversible input/output models of programs.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="synthesize unique grammar inputs")
    _add_gen_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("collect", help="synthesize inputs and record the PUT's outputs")
    _add_gen_args(p)
    p.add_argument("--put", default="builtin", help='PUT command, e.g. "pandoc -f markdown" or builtin')
    p.add_argument("--timeout", type=parse_duration, default=10.0)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("tokenize", help="tokenize a dataset and build vocabularies")
    _add_dataset_args(p)
    p.add_argument("--inverse", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("tune", help="two-phase hyperparameter search")
    _add_dataset_args(p)
    p.add_argument("--phase1-trials", type=int, default=25)
    p.add_argument("--phase2-trials", type=int, default=10)
    p.add_argument("--phase1-epochs", type=int, default=3)
    p.add_argument("--phase2-epochs", type=int, default=5)
    p.add_argument("--samples", type=int, default=0, help="use only the first N pairs (0 = all)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("train", help="train a forward or inverse model")
    _add_dataset_args(p)
    p.add_argument("--inverse", action="store_true", help="swap inputs and outputs")
    p.add_argument("--config", help="INI file whose [model] and [training] sections override the flags")
    p.add_argument("--encoder-layers", type=int, default=1)
    p.add_argument("--decoder-layers", type=int, default=1)
    p.add_argument("--embedding-size", type=int, default=64)
    p.add_argument("--feedforward-size", type=int, default=256)
    p.add_argument("--attention-heads", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--weight-decay", type=float, default=1e-2)
    p.add_argument("--schedule", default="cosine", choices=["cosine", "step", "multiplicative", "constant"])
    p.add_argument("--no-clip", action="store_true")
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--tokens", action="store_true", help="files hold whitespace-separated tokens per line")
    p.add_argument("--format", default=None, help="with JSONL documents, tokenize with this format")
    p.add_argument("--out", help="write the report (.json or key=value text)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="run a trained model")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--mode", choices=["forward", "inverse"], default=None)
    p.add_argument("--in", dest="input", required=True, help="input file, or - for stdin")
    p.add_argument("--jsonl", action="store_true", help="input holds one JSON string per line")
    p.add_argument("--max-len", type=int, default=None)
    p.add_argument("--validate", action="store_true")
    p.add_argument("--put", default=None)
    p.add_argument("--timeout", type=parse_duration, default=10.0)
    p.add_argument("--trace", help="write a phase-labelled trace to this file")
    p.add_argument("--out", help="write predictions here instead of stdout")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("pipeline", help="run or resume the whole pipeline from a config file")
    p.add_argument("--config", required=True, help="INI file, or 'demo' for the bundled demo config")
    p.add_argument("--workdir", default=None)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("subject-convert", help="built-in Markdown-subset to HTML converter (stdin to stdout)")
    p.set_defaults(func=cmd_subject_convert)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except (PutFailure, PutTimeout) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PUT
    except (BehavmockError, ValueError, OSError, json.JSONDecodeError) as exc:
        cause = getattr(exc, "cause", None)
        if isinstance(cause, (PutFailure, PutTimeout)):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_PUT
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return code or EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
