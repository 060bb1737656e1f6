"""Command-line pipeline: preprocess -> extract-apis -> build-kb ->
attach-docs -> train/generate/metrics, plus the experiment driver `run`.

Stages communicate through JSONL; every stage passes unknown fields through
so later stages see the union.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from comgen import apikb, corpus, harness, metrics
from comgen.javaparse import (
    ParseError, extract_api_calls, flatten_ast, parse_method_result,
)
from comgen.nnet.config import ModelConfig
from comgen.nnet.train import greedy_decode, load_checkpoint, save_checkpoint, train


def _iter_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                yield lineno, json.loads(line)


def _write_jsonl(path, objs):
    with open(path, "w", encoding="utf-8") as fh:
        for obj in objs:
            fh.write(json.dumps(obj) + "\n")


def cmd_preprocess(args):
    records, errors = corpus.load_corpus(args.infile)
    for err in errors:
        print(f"preprocess: {err}", file=sys.stderr)
    rules = corpus.FilterRules(max_code_len=args.max_code_len,
                               max_comment_len=args.max_comment_len)
    kept, reasons = corpus.preprocess(records, rules)
    out = []
    for r in kept:
        out.append({"id": r.id, "code": r.source, "docstring": r.comment,
                    "code_tokens": r.code_tokens,
                    "comment_tokens": r.comment_tokens})
    _write_jsonl(args.outfile, out)
    vocab_dir = args.vocab_dir or os.path.dirname(os.path.abspath(args.outfile))
    os.makedirs(vocab_dir, exist_ok=True)
    for side in ("code", "comment"):
        vocab = corpus.build_vocab(kept, side, args.min_count, args.max_vocab)
        vocab.save(os.path.join(vocab_dir, f"vocab_{side}.tsv"))
    print(f"kept {len(kept)}/{len(records)} records "
          f"({len(reasons)} filtered, {len(errors)} malformed lines)")
    return 0


def cmd_extract_apis(args):
    out = []
    failures = 0
    for _lineno, obj in _iter_jsonl(args.infile):
        try:
            result = parse_method_result(obj["code"])
            calls = extract_api_calls(result.ast)
            flat = flatten_ast(result.ast, max_len=args.ast_max_len)
        except (ParseError, ValueError):
            failures += 1
            calls, flat = [], []
        obj["api_calls"] = [{"name": c.name, "arity": c.arity,
                             "position": c.position} for c in calls]
        obj["flat_ast"] = flat
        out.append(obj)
    _write_jsonl(args.outfile, out)
    print(f"extracted apis for {len(out)} records ({failures} parse failures)")
    return 0


def cmd_build_kb(args):
    entries = apikb.load_entries(args.infile)
    kb = apikb.build_kb(entries)
    kb.save(args.outfile)
    print(f"kb: {len(kb)} (name, arity) keys from {len(entries)} entries "
          f"({kb.rejected} rejected)")
    return 0


def cmd_attach_docs(args):
    kb = apikb.ApiDocKb.load(args.kb)
    out = []
    with_docs = 0
    for _lineno, obj in _iter_jsonl(args.infile):
        calls = harness.as_api_calls(obj.get("api_calls"))
        tokens = apikb.docs_for_method(kb, calls, args.max_doc_len)
        obj["doc_tokens"] = tokens
        with_docs += bool(tokens)
        out.append(obj)
    _write_jsonl(args.outfile, out)
    print(f"attached docs to {len(out)} records ({with_docs} non-empty)")
    return 0


def _load_model_config(path, overrides=None):
    try:
        import tomllib
    except ImportError:
        import tomli as tomllib
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    model = doc.get("model", doc)
    if overrides:
        model.update(overrides)
    return ModelConfig.from_dict(model)


def cmd_train(args):
    config = _load_model_config(args.config)
    train_recs, errs = corpus.load_corpus(args.train_file)
    valid_recs, errs2 = corpus.load_corpus(args.valid_file)
    for err in errs + errs2:
        print(f"train: {err}", file=sys.stderr)
    sides = list(config.sources) + ["comment"]
    vocabs = harness.build_all_vocabs(train_recs, args.min_count,
                                      args.max_vocab, sides=sides)

    def progress(epoch, _model, info):
        print(f"epoch {epoch}: train {info['train_loss']:.4f} "
              f"val {info['val_loss']:.4f} lr {info['lr']:.2e}")
        return False

    ckpt = train(config, train_recs, valid_recs, vocabs, callback=progress)
    os.makedirs(args.out_dir, exist_ok=True)
    save_checkpoint(ckpt, os.path.join(args.out_dir, "model.ckpt"))
    for side, vocab in vocabs.items():
        vocab.save(os.path.join(args.out_dir, f"vocab_{side}.tsv"))
    with open(os.path.join(args.out_dir, "config.json"), "w") as fh:
        json.dump(dataclasses.asdict(config), fh, indent=1)
    print(f"best epoch {ckpt.best_epoch} val loss {ckpt.best_val_loss:.4f} "
          f"-> {args.out_dir}")
    return 0


def _load_ckpt_dir(ckpt_dir):
    ckpt = load_checkpoint(os.path.join(ckpt_dir, "model.ckpt"))
    vocabs = {}
    for side in list(ckpt.config.sources) + ["comment"]:
        vocab = corpus.Vocab.load(os.path.join(ckpt_dir, f"vocab_{side}.tsv"))
        expect = ckpt.vocab_hashes.get(side)
        if expect and vocab.sha256() != expect:
            raise ValueError(f"vocab_{side}.tsv does not match the checkpoint")
        vocabs[side] = vocab
    return ckpt, vocabs


def cmd_generate(args):
    ckpt, vocabs = _load_ckpt_dir(args.ckpt_dir)
    model = ckpt.build_model()
    records, errs = corpus.load_corpus(args.infile)
    for err in errs:
        print(f"generate: {err}", file=sys.stderr)
    from comgen.nnet.train import encode_dataset
    arrays = encode_dataset(records, vocabs, ckpt.config)
    sources = {k: v for k, v in arrays.items() if k != "comment"}
    hyp_ids = greedy_decode(model, sources, max_len=args.max_len)
    with open(args.outfile, "w", encoding="utf-8") as fh:
        for ids in hyp_ids:
            fh.write(" ".join(corpus.decode_sequence(ids, vocabs["comment"])) + "\n")
    print(f"generated {len(hyp_ids)} comments -> {args.outfile}")
    return 0


def cmd_metrics(args):
    report = metrics.evaluate(args.refs, args.hyps, beta=args.beta)
    payload = report.to_dict()
    if args.outfile:
        with open(args.outfile, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)
    for key, value in payload.items():
        print(f"{key}: {value}")
    return 0


def cmd_run(args):
    spec = harness.ExperimentSpec.from_toml(args.spec)
    manifest = harness.run_experiment(spec)
    for combo, status in manifest["combos"].items():
        line = f"{combo}: {status}"
        if status == "failed":
            line += f" ({manifest['failures'][combo]})"
        print(line)
    print(f"reports in {spec.out_dir}")
    return 0 if all(s == "ok" for s in manifest["combos"].values()) else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="comgen",
        description="Java comment generation pipeline (corpus -> KB -> "
                    "training -> evaluation)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter and tokenize a raw corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--max-code-len", type=int, default=256)
    p.add_argument("--max-comment-len", type=int, default=64)
    p.add_argument("--vocab-dir", default=None)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--max-vocab", type=int, default=30000)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("extract-apis", help="parse methods, extract call "
                                            "sites and flattened ASTs")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--ast-max-len", type=int, default=512)
    p.set_defaults(func=cmd_extract_apis)

    p = sub.add_parser("build-kb", help="index an API documentation TSV")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.set_defaults(func=cmd_build_kb)

    p = sub.add_parser("attach-docs", help="resolve call docs and attach "
                                           "doc_tokens")
    p.add_argument("--kb", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--max-doc-len", type=int, default=256)
    p.set_defaults(func=cmd_attach_docs)

    p = sub.add_parser("train", help="train one variant/cell combination")
    p.add_argument("--config", required=True, help="TOML with a [model] table")
    p.add_argument("--train", dest="train_file", required=True)
    p.add_argument("--valid", dest="valid_file", required=True)
    p.add_argument("--out", dest="out_dir", required=True)
    p.add_argument("--min-count", type=int, default=2)
    p.add_argument("--max-vocab", type=int, default=30000)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="greedy-decode comments for a corpus")
    p.add_argument("--ckpt", dest="ckpt_dir", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--max-len", type=int, default=64)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("metrics", help="score hypotheses against references")
    p.add_argument("--refs", required=True)
    p.add_argument("--hyps", required=True)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--out", dest="outfile", default=None)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("run", help="run a full experiment matrix from TOML")
    p.add_argument("--spec", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
