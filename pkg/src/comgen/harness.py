"""Experiment driver: splitting, annotation, the variant training matrix,
API-count stratification, low-frequency word accounting, and report tables.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from comgen.apikb import ApiDocKb, docs_for_method, resolved_calls
from comgen.corpus import (
    RESERVED, SEP_TOKEN, Vocab, build_vocab, decode_sequence, load_corpus,
)
from comgen.javaparse import (
    ApiCall, ParseError, extract_api_calls, flatten_ast, parse_method_result,
)
from comgen.metrics import EvalPair, evaluate_pairs
from comgen.nnet.config import VARIANT_SOURCES, ModelConfig
from comgen.nnet.train import encode_dataset, greedy_decode, train

METRIC_KEYS = ("bleu-1", "bleu-2", "bleu-3", "bleu-4", "meteor", "rouge_l")
STRATA = ("1", "2", "3", "4+")
LOWFREQ_BUCKETS = (("<50", 0, 50), ("50-100", 50, 100), ("100-150", 100, 150),
                   ("150-200", 150, 200), ("200-300", 200, 300),
                   ("300-400", 300, 400), ("400-500", 400, 500))


def split_dataset(records, ratios=(8, 1, 1), seed=0):
    """Deterministic shuffle + ratio partition; the remainder goes to train."""
    n = len(records)
    if n < 10:
        raise ValueError(f"need at least 10 records to split, got {n}")
    order = np.random.default_rng(seed).permutation(n)
    total = sum(ratios)
    n_valid = n * ratios[1] // total
    n_test = n * ratios[2] // total
    n_train = n - n_valid - n_test
    shuffled = [records[i] for i in order]
    return (shuffled[:n_train],
            shuffled[n_train:n_train + n_valid],
            shuffled[n_train + n_valid:])


def as_api_calls(raw):
    """Normalize JSONL dicts back into ApiCall objects."""
    calls = []
    for c in raw or []:
        if isinstance(c, ApiCall):
            calls.append(c)
        else:
            calls.append(ApiCall(c["name"], int(c["arity"]),
                                 int(c.get("position", -1))))
    return calls


def annotate_records(records, kb: ApiDocKb | None, ast_max_len=512,
                     max_doc_len=256):
    """Fill api_calls / flat_ast / doc_tokens in place.

    Unparseable methods get an empty AST and no calls; the count of such
    records is returned.
    """
    failures = 0
    for r in records:
        try:
            result = parse_method_result(r.source)
            r.api_calls = extract_api_calls(result.ast)
            r.flat_ast = flatten_ast(result.ast, max_len=ast_max_len)
        except (ParseError, ValueError):
            failures += 1
            r.api_calls = []
            r.flat_ast = []
        if kb is not None:
            r.doc_tokens = docs_for_method(kb, r.api_calls, max_doc_len)
    return failures


def resolvable_api_count(record, kb: ApiDocKb) -> int:
    return len(resolved_calls(kb, as_api_calls(record.api_calls)))


def stratum_of(count: int) -> str:
    if count <= 0:
        return "0"
    if count >= 4:
        return "4+"
    return str(count)


def stratify_by_api_count(records, kb: ApiDocKb):
    """Partition records by resolvable API count: 1, 2, 3, 4+ plus a zero
    bookkeeping bucket (excluded from table output)."""
    strata = {"0": [], "1": [], "2": [], "3": [], "4+": []}
    for r in records:
        strata[stratum_of(resolvable_api_count(r, kb))].append(r)
    return strata


def low_frequency_analysis(hyps_tokens, refs_tokens, freqs):
    """Bucket counts of low-frequency train-set words.

    For each hypothesis token occurrence that also appears in its aligned
    reference, bucket it by the token's train-corpus frequency; reference
    token occurrences are bucketed unconditionally.  Tokens at or above 500
    occurrences fall outside every bucket.
    """
    out = {name: {"reference": 0, "hypothesis": 0}
           for name, _, _ in LOWFREQ_BUCKETS}

    def bucket(freq):
        for name, lo, hi in LOWFREQ_BUCKETS:
            if lo <= freq < hi:
                return name
        return None

    for hyp, ref in zip(hyps_tokens, refs_tokens):
        ref_set = set(ref)
        for tok in ref:
            b = bucket(freqs.get(tok, 0))
            if b:
                out[b]["reference"] += 1
        for tok in hyp:
            if tok in ref_set:
                b = bucket(freqs.get(tok, 0))
                if b:
                    out[b]["hypothesis"] += 1
    return out


def build_ast_vocab(records, min_count=2, max_size=30000):
    """Vocabulary over flattened-AST tokens (case-preserving)."""
    counts = {}
    for r in records:
        for t in r.flat_ast or []:
            counts[t] = counts.get(t, 0) + 1
    if not counts:
        raise ValueError("cannot build ast vocabulary: no flat_ast tokens")
    retained = sorted((t for t, c in counts.items()
                       if c >= min_count and t not in RESERVED),
                      key=lambda t: (-counts[t], t))
    retained = retained[:max(0, max_size - len(RESERVED))]
    token_to_id = {t: i for i, t in enumerate(RESERVED)}
    for t in retained:
        token_to_id[t] = len(token_to_id)
    return Vocab(token_to_id, counts)


def build_all_vocabs(train_records, min_count=2, max_size=30000, sides=None):
    """One vocabulary per requested side (default: all four)."""
    sides = tuple(sides) if sides is not None else ("code", "ast", "doc",
                                                    "comment")
    vocabs = {}
    for side in sides:
        if side == "ast":
            vocabs[side] = build_ast_vocab(train_records, min_count, max_size)
        elif side == "doc":
            vocabs[side] = build_vocab(train_records, side, min_count,
                                       max_size, always_keep=(SEP_TOKEN,))
        else:
            vocabs[side] = build_vocab(train_records, side, min_count, max_size)
    return vocabs


@dataclass
class ExperimentSpec:
    out_dir: str
    kb_path: str
    corpus: str | None = None
    train_path: str | None = None
    valid_path: str | None = None
    test_path: str | None = None
    ratios: tuple = (8, 1, 1)
    seed: int = 0
    combos: list = field(default_factory=lambda: [("base", "transformer"),
                                                  ("api", "transformer")])
    per_stratum_training: bool = False
    decode_max_len: int = 64
    min_count: int = 2
    max_vocab: int = 30000
    model: dict = field(default_factory=dict)

    def __post_init__(self):
        self.combos = [(v.lower(), c.lower()) for v, c in self.combos]
        bad = [f"{v}/{c}" for v, c in self.combos
               if v not in ("base", "ast", "api", "full")
               or c not in ("transformer", "gru")]
        if bad:
            raise ValueError(f"unknown variant/cell combos: {bad}")
        if self.corpus is None and not (self.train_path and self.valid_path
                                        and self.test_path):
            raise ValueError("need either corpus or train/valid/test paths")

    @classmethod
    def from_toml(cls, path):
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        data = doc.get("data", {})
        exp = doc.get("experiment", {})
        return cls(
            out_dir=exp.get("out_dir", "experiment_out"),
            kb_path=data["kb"],
            corpus=data.get("corpus"),
            train_path=data.get("train"),
            valid_path=data.get("valid"),
            test_path=data.get("test"),
            ratios=tuple(data.get("ratios", (8, 1, 1))),
            seed=int(data.get("seed", 0)),
            combos=[tuple(c) for c in exp.get("combos",
                                              [["base", "transformer"],
                                               ["api", "transformer"]])],
            per_stratum_training=bool(exp.get("per_stratum_training", False)),
            decode_max_len=int(exp.get("decode_max_len", 64)),
            min_count=int(exp.get("min_count", 2)),
            max_vocab=int(exp.get("max_vocab", 30000)),
            model=doc.get("model", {}),
        )


def _config_for(spec: ExperimentSpec, variant, cell) -> ModelConfig:
    d = dict(spec.model)
    d["variant"] = variant
    d["cell"] = cell
    d.setdefault("seed", spec.seed)
    return ModelConfig.from_dict(d)


def _decode_records(model, records, vocabs, config, max_len):
    arrays = encode_dataset(records, vocabs, config)
    sources = {k: v for k, v in arrays.items() if k != "comment"}
    hyp_ids = greedy_decode(model, sources, max_len=max_len)
    return [decode_sequence(ids, vocabs["comment"]) for ids in hyp_ids]


def _metric_pairs(records, hyps):
    return [EvalPair(r.comment_tokens, h) for r, h in zip(records, hyps)]


def improvement_vs_base(base_report: dict, other_report: dict):
    """Per-metric percent change vs the base variant plus their average."""
    imps = {}
    vals = []
    for key in METRIC_KEYS:
        b, o = base_report[key], other_report[key]
        imp = 100.0 * (o - b) / b if b != 0 else 0.0
        imps[key] = round(imp, 2)
        vals.append(imp)
    imps["avg"] = round(sum(vals) / len(vals), 2)
    return imps


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _needs_training_records(records, side_attrs):
    for r in records:
        for attr in side_attrs:
            if getattr(r, attr) is None:
                raise ValueError(f"record {r.id} missing {attr}; run the "
                                 "preprocess/extract-apis/attach-docs steps first")


def run_experiment(spec: ExperimentSpec):
    """Train every (variant, cell) combo, evaluate, stratify, and write the
    report bundle (report_*.json, strata.tsv, lowfreq.tsv, manifest.json).

    A failure in one combo is recorded in the manifest and the rest continue.
    """
    os.makedirs(spec.out_dir, exist_ok=True)
    kb = ApiDocKb.load(spec.kb_path)
    if spec.corpus is not None:
        records, _errors = load_corpus(spec.corpus)
        train_recs, valid_recs, test_recs = split_dataset(
            records, spec.ratios, spec.seed)
    else:
        train_recs, _ = load_corpus(spec.train_path)
        valid_recs, _ = load_corpus(spec.valid_path)
        test_recs, _ = load_corpus(spec.test_path)
    needed = {"code", "comment"}
    for variant, _cell in spec.combos:
        needed.update(VARIANT_SOURCES[variant])
    attr = {"code": "code_tokens", "comment": "comment_tokens",
            "ast": "flat_ast", "doc": "doc_tokens"}
    _needs_training_records(train_recs + valid_recs + test_recs,
                            tuple(attr[s] for s in sorted(needed)))

    vocabs = build_all_vocabs(train_recs, spec.min_count, spec.max_vocab,
                              sides=sorted(needed))
    test_strata = stratify_by_api_count(test_recs, kb)
    strata_counts = {k: len(v) for k, v in test_strata.items()}
    assert sum(strata_counts.values()) == len(test_recs)

    manifest = {"started": time.strftime("%Y-%m-%d %H:%M:%S"),
                "combos": {}, "files": {}, "failures": {},
                "test_size": len(test_recs), "strata_counts": strata_counts}
    results = {}
    emitted = []

    for variant, cell in spec.combos:
        tag = f"{variant}_{cell}"
        try:
            config = _config_for(spec, variant, cell)
            ckpt = train(config, train_recs, valid_recs, vocabs)
            model = ckpt.build_model()
            hyps = _decode_records(model, test_recs, vocabs, config,
                                   spec.decode_max_len)
            overall = evaluate_pairs(_metric_pairs(test_recs, hyps))
            strata_reports = {}
            if spec.per_stratum_training:
                train_strata = stratify_by_api_count(train_recs, kb)
                valid_strata = stratify_by_api_count(valid_recs, kb)
                for s in STRATA:
                    if not test_strata[s] or not train_strata[s]:
                        continue
                    s_ckpt = train(config, train_strata[s],
                                   valid_strata[s] or train_strata[s], vocabs)
                    s_model = s_ckpt.build_model()
                    s_hyps = _decode_records(s_model, test_strata[s], vocabs,
                                             config, spec.decode_max_len)
                    strata_reports[s] = evaluate_pairs(
                        _metric_pairs(test_strata[s], s_hyps)).to_dict()
            else:
                hyp_by_id = {r.id: h for r, h in zip(test_recs, hyps)}
                for s in STRATA:
                    if not test_strata[s]:
                        continue
                    pairs = _metric_pairs(test_strata[s],
                                          [hyp_by_id[r.id] for r in test_strata[s]])
                    strata_reports[s] = evaluate_pairs(pairs).to_dict()
            lowfreq = low_frequency_analysis(
                hyps, [r.comment_tokens for r in test_recs],
                vocabs["comment"].counts)
            report = {
                "variant": variant, "cell": cell,
                "metrics": overall.to_dict(),
                "strata": strata_reports,
                "lowfreq": lowfreq,
                "best_epoch": ckpt.best_epoch,
                "best_val_loss": ckpt.best_val_loss,
            }
            results[(variant, cell)] = report
            hyp_path = os.path.join(spec.out_dir, f"hyps_{tag}.txt")
            with open(hyp_path, "w", encoding="utf-8") as fh:
                for h in hyps:
                    fh.write(" ".join(h) + "\n")
            report_path = os.path.join(spec.out_dir, f"report_{tag}.json")
            with open(report_path, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=1)
            emitted += [hyp_path, report_path]
            manifest["combos"][tag] = "ok"
        except Exception as e:  # noqa: BLE001 - combo isolation is the contract
            manifest["combos"][tag] = "failed"
            manifest["failures"][tag] = f"{type(e).__name__}: {e}"

    # improvement columns vs the base variant of the same cell
    for (variant, cell), report in results.items():
        if variant == "base":
            continue
        base = results.get(("base", cell))
        if base is None:
            continue
        report["improvement_vs_base"] = improvement_vs_base(
            base["metrics"], report["metrics"])
        strata_imp = {}
        for s, sr in report["strata"].items():
            if s in base["strata"]:
                strata_imp[s] = improvement_vs_base(base["strata"][s], sr)
        report["strata_improvement_vs_base"] = strata_imp
        report_path = os.path.join(spec.out_dir,
                                   f"report_{variant}_{cell}.json")
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=1)

    strata_path = os.path.join(spec.out_dir, "strata.tsv")
    with open(strata_path, "w", encoding="utf-8") as fh:
        fh.write("stratum\tn\tvariant\tcell\t" + "\t".join(METRIC_KEYS)
                 + "\tavg_improvement_pct\n")
        for s in STRATA:
            for (variant, cell), report in results.items():
                if s not in report["strata"]:
                    continue
                row = report["strata"][s]
                imp = report.get("strata_improvement_vs_base", {}).get(s, {})
                fh.write("\t".join(
                    [s, str(len(test_strata[s])), variant, cell]
                    + [f"{row[k]:.2f}" for k in METRIC_KEYS]
                    + [f"{imp['avg']:.2f}" if imp else ""]) + "\n")
    lowfreq_path = os.path.join(spec.out_dir, "lowfreq.tsv")
    with open(lowfreq_path, "w", encoding="utf-8") as fh:
        fh.write("bucket\tsource\t" + "\t".join(
            f"{v}_{c}" for v, c in results) + "\n")
        for name, _, _ in LOWFREQ_BUCKETS:
            ref_counts = [str(r["lowfreq"][name]["reference"])
                          for r in results.values()]
            hyp_counts = [str(r["lowfreq"][name]["hypothesis"])
                          for r in results.values()]
            fh.write("\t".join([name, "reference"] + ref_counts) + "\n")
            fh.write("\t".join([name, "hypothesis"] + hyp_counts) + "\n")
    emitted += [strata_path, lowfreq_path]

    for path in emitted:
        manifest["files"][os.path.basename(path)] = _sha256_file(path)
    manifest_path = os.path.join(spec.out_dir, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return manifest
