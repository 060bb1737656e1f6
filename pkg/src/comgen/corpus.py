"""Corpus ingestion, filtering, subtokenization, and vocabularies.

Records arrive as JSONL objects with "code" and "docstring" fields.  The
filter rules mirror the upstream dataset curation: short comments, short
bodies, test-named methods, constructors, over-long token sequences, and
duplicate bodies are dropped.  Identifiers are split at underscores and
camel-case boundaries and everything is lowercased.
"""

from __future__ import annotations

import hashlib
import json
import re
import string
from dataclasses import dataclass

from comgen import javalex
from comgen.javaparse import method_signature_info

PAD_ID, UNK_ID, BOS_ID, EOS_ID = 0, 1, 2, 3
PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN = "<pad>", "unk", "<bos>", "<eos>"
RESERVED = (PAD_TOKEN, UNK_TOKEN, BOS_TOKEN, EOS_TOKEN)
SEP_TOKEN = "<sep>"

# every single-char Java operator/separator counts as punctuation
CODE_PUNCTUATION = set("{}()[];,.<>=+-*/%!&|^~?:@")


@dataclass
class MethodRecord:
    id: str
    source: str
    comment: str
    code_tokens: list[str] | None = None
    comment_tokens: list[str] | None = None
    # filled by later pipeline stages
    api_calls: list | None = None
    flat_ast: list[str] | None = None
    doc_tokens: list[str] | None = None


@dataclass
class FilterRules:
    max_code_len: int = 256
    max_comment_len: int = 64
    min_comment_tokens: int = 3
    min_source_lines: int = 3


def load_corpus(path, format="jsonl"):
    """Read one MethodRecord per line; malformed lines are tallied, not fatal.

    Returns (records, errors) where errors is a list of 'line N: reason'.
    """
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format {format!r}")
    records, errors = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                errors.append(f"line {lineno}: invalid json ({e.msg})")
                continue
            if "code" not in obj or "docstring" not in obj:
                missing = [k for k in ("code", "docstring") if k not in obj]
                errors.append(f"line {lineno}: missing field {missing[0]!r}")
                continue
            records.append(MethodRecord(
                id=str(obj.get("id", lineno)),
                source=obj["code"],
                comment=obj["docstring"],
                code_tokens=obj.get("code_tokens"),
                comment_tokens=obj.get("comment_tokens"),
                doc_tokens=obj.get("doc_tokens"),
                flat_ast=obj.get("flat_ast"),
                api_calls=obj.get("api_calls"),
            ))
    return records, errors


def split_subtokens(identifier: str) -> list[str]:
    """Split at underscores and camel-case boundaries, lowercase the pieces.

    A run of uppercase letters stays together until a lowercase letter starts
    a new subtoken: parseHTTPResponse -> parse, http, response.
    """
    pieces = []
    for part in identifier.replace("$", "_").split("_"):
        if not part:
            continue
        start = 0
        for i in range(1, len(part)):
            prev, cur = part[i - 1], part[i]
            boundary = (cur.isupper() and prev.islower()) or (
                cur.isupper() and prev.isupper()
                and i + 1 < len(part) and part[i + 1].islower())
            if boundary:
                pieces.append(part[start:i])
                start = i
        pieces.append(part[start:])
    return [p.lower() for p in pieces if p]


def _clean_word(word: str) -> list[str]:
    """Lowercase, strip surrounding punctuation, split on in-word code
    punctuation so no token retains punctuation characters."""
    word = word.strip(string.punctuation)
    if not word:
        return []
    out, cur = [], []
    for ch in word.lower():
        if ch in CODE_PUNCTUATION:
            if cur:
                out.append("".join(cur))
                cur = []
        else:
            cur.append(ch)
    if cur:
        out.append("".join(cur))
    return out


def tokenize(text: str, mode: str, first_sentence: bool = True) -> list[str]:
    """Normalize text into subtokens.

    code mode: lex, drop punctuation/operator tokens, camel/snake-split
    identifiers, lowercase. comment mode: whitespace split, strip surrounding
    punctuation, lowercase; only the first sentence (up to the first period)
    is kept unless first_sentence=False.
    """
    if mode == "code":
        try:
            toks = javalex.code_tokens(text)
        except javalex.LexError:
            return tokenize(text, "comment", first_sentence=False)
        out = []
        for t in toks:
            if t.kind in ("operator", "separator"):
                continue
            if t.kind in ("identifier", "keyword"):
                out.extend(split_subtokens(t.text))
            elif t.kind == "number":
                out.extend(_clean_word(t.text))
            elif t.kind in ("string", "char"):
                for piece in re.findall(r"[A-Za-z0-9]+", t.text[1:-1]):
                    out.extend(split_subtokens(piece))
        return out
    if mode == "comment":
        if first_sentence and "." in text:
            text = text[:text.index(".")]
        out = []
        for word in text.split():
            out.extend(_clean_word(word))
        return out
    raise ValueError(f"unknown tokenize mode {mode!r}")


def filter_record(r: MethodRecord, rules: FilterRules):
    """(keep, reason) for a single record; the reason names the first rule hit.

    Duplicate detection needs corpus-wide state and lives in preprocess().
    """
    comment_tokens = (r.comment_tokens if r.comment_tokens is not None
                      else tokenize(r.comment, "comment"))
    if len(comment_tokens) < rules.min_comment_tokens:
        return False, "comment_too_short"
    if len(r.source.strip().splitlines()) < rules.min_source_lines:
        return False, "source_too_short"
    name, is_ctor = method_signature_info(r.source)
    if name is not None and "test" in name.lower():
        return False, "test_name"
    if is_ctor:
        return False, "constructor"
    code_tokens = (r.code_tokens if r.code_tokens is not None
                   else tokenize(r.source, "code"))
    if len(code_tokens) > rules.max_code_len:
        return False, "code_too_long"
    if len(comment_tokens) > rules.max_comment_len:
        return False, "comment_too_long"
    return True, None


def dedup_key(source: str) -> str:
    return " ".join(source.split())


def preprocess(records, rules: FilterRules | None = None):
    """Tokenize and filter a corpus, dropping duplicate bodies (first kept).

    Returns (kept_records, drop_reasons) where drop_reasons maps record id to
    the first rule violated.
    """
    rules = rules or FilterRules()
    kept, reasons = [], {}
    seen = set()
    for r in records:
        r.code_tokens = tokenize(r.source, "code")
        r.comment_tokens = tokenize(r.comment, "comment")
        keep, reason = filter_record(r, rules)
        if not keep:
            reasons[r.id] = reason
            continue
        key = dedup_key(r.source)
        if key in seen:
            reasons[r.id] = "duplicate"
            continue
        seen.add(key)
        kept.append(r)
    return kept, reasons


class Vocab:
    """token <-> dense id bijection with reserved PAD/UNK/BOS/EOS slots.

    Ids are stable across rebuilds: non-reserved tokens are ordered by
    descending train-set count, ties broken lexicographically.  The full
    frequency table (including tokens below the cutoff) is kept for the
    low-frequency reporting.
    """

    def __init__(self, token_to_id, counts):
        self.token_to_id = token_to_id
        self.id_to_token = {i: t for t, i in token_to_id.items()}
        self.counts = counts

    def __len__(self):
        return len(self.token_to_id)

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def decode(self, idx: int) -> str:
        return self.id_to_token.get(idx, UNK_TOKEN)

    def encode_tokens(self, tokens):
        return [self.encode(t) for t in tokens]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for token, idx in sorted(self.token_to_id.items(), key=lambda kv: kv[1]):
                fh.write(f"{token}\t{idx}\t{self.counts.get(token, 0)}\n")

    @classmethod
    def load(cls, path):
        token_to_id, counts = {}, {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                token, idx, count = line.rstrip("\n").split("\t")
                token_to_id[token] = int(idx)
                if int(count) > 0:
                    counts[token] = int(count)
        return cls(token_to_id, counts)

    def sha256(self) -> str:
        h = hashlib.sha256()
        for token, idx in sorted(self.token_to_id.items(), key=lambda kv: kv[1]):
            h.update(f"{token}\t{idx}\t{self.counts.get(token, 0)}\n".encode())
        return h.hexdigest()


def build_vocab(records, side: str, min_count: int = 2, max_size: int = 30000,
                always_keep=()) -> Vocab:
    """Count tokens on one side of the corpus and keep the frequent ones."""
    attr = {"code": "code_tokens", "comment": "comment_tokens",
            "doc": "doc_tokens"}[side]
    counts: dict[str, int] = {}
    any_tokens = False
    for r in records:
        tokens = getattr(r, attr)
        if tokens is None:
            continue
        any_tokens = True
        for t in tokens:
            counts[t] = counts.get(t, 0) + 1
    if not any_tokens:
        raise ValueError(f"cannot build {side} vocabulary from an empty corpus")
    retained = [t for t, c in counts.items()
                if (c >= min_count or t in always_keep) and t not in RESERVED]
    retained.sort(key=lambda t: (-counts[t], t))
    budget = max(0, max_size - len(RESERVED))
    retained = retained[:budget]
    token_to_id = {t: i for i, t in enumerate(RESERVED)}
    for t in retained:
        token_to_id[t] = len(token_to_id)
    return Vocab(token_to_id, counts)


def encode_sequence(tokens, vocab: Vocab, max_len: int) -> list[int]:
    """BOS + ids + EOS, truncated so EOS is always last, padded to max_len."""
    ids = [BOS_ID] + vocab.encode_tokens(tokens) + [EOS_ID]
    if len(ids) > max_len:
        ids = ids[:max_len - 1] + [EOS_ID]
    return ids + [PAD_ID] * (max_len - len(ids))


def decode_sequence(ids, vocab: Vocab) -> list[str]:
    """Strip PAD/BOS/EOS (stopping at the first EOS), map UNK to 'unk'."""
    out = []
    for idx in ids:
        if idx == EOS_ID:
            break
        if idx in (PAD_ID, BOS_ID):
            continue
        out.append(vocab.decode(int(idx)))
    return out
