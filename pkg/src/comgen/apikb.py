"""Knowledge base mapping (API name, arity) to method documentation.

Entries come from a local TSV mirror of reference documentation
(``name<TAB>arity<TAB>class_path<TAB>description``).  When several classes
document the same (name, arity) with exactly the same text, those entries are
grouped and the group size becomes the candidate's frequency; lookups return
the highest-frequency description.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from comgen.corpus import SEP_TOKEN, tokenize

KB_FORMAT = "comgen-apikb"
KB_VERSION = 1


@dataclass(frozen=True)
class ApiDocEntry:
    name: str
    arity: int
    class_path: str
    description: str


class ApiDocKb:
    def __init__(self, index, rejected=0):
        # index: (name, arity) -> list of (description, frequency),
        # sorted by frequency descending then description ascending
        self.index = index
        self.rejected = rejected

    def __len__(self):
        return len(self.index)

    def candidates(self, name, arity):
        return self.index.get((name, arity), [])

    def save(self, path):
        payload = {
            "format": KB_FORMAT,
            "version": KB_VERSION,
            "rejected": self.rejected,
            "entries": [
                {"name": n, "arity": a, "docs": [[d, f] for d, f in cands]}
                for (n, a), cands in sorted(self.index.items())
            ],
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        if payload.get("format") != KB_FORMAT:
            raise ValueError(f"{path}: not a {KB_FORMAT} file")
        if payload.get("version") != KB_VERSION:
            raise ValueError(f"{path}: unsupported version {payload.get('version')}")
        index = {(e["name"], e["arity"]): [(d, f) for d, f in e["docs"]]
                 for e in payload["entries"]}
        return cls(index, payload.get("rejected", 0))


def load_entries(path):
    """Parse the TSV knowledge source; blank lines and #comments skipped."""
    entries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 tab-separated fields")
            name, arity, class_path, description = parts
            entries.append(ApiDocEntry(name, int(arity), class_path, description))
    return entries


def build_kb(entries) -> ApiDocKb:
    """Group entries by (name, arity); identical texts merge, frequency =
    number of distinct classes sharing that text.  Entries with an empty name
    or description are rejected (tallied on the result)."""
    groups: dict[tuple, dict[str, set]] = {}
    rejected = 0
    for e in entries:
        if not e.name or not e.description.strip():
            rejected += 1
            continue
        key = (e.name, e.arity)
        groups.setdefault(key, {}).setdefault(e.description, set()).add(e.class_path)
    index = {}
    for key, by_text in groups.items():
        cands = [(text, len(classes)) for text, classes in by_text.items()]
        cands.sort(key=lambda cf: (-cf[1], cf[0]))
        index[key] = cands
    return ApiDocKb(index, rejected)


def resolve_doc(kb: ApiDocKb, call) -> str | None:
    """Exact (name, arity) lookup; highest-frequency description wins, ties
    break lexicographically; a name hit at the wrong arity is still a miss."""
    cands = kb.candidates(call.name, call.arity)
    return cands[0][0] if cands else None


def resolved_calls(kb: ApiDocKb, calls):
    """Calls that resolve, in order, with consecutive repeats of the same
    (name, arity) collapsed; returns (call, description) pairs."""
    out = []
    prev_key = None
    for call in calls:
        doc = resolve_doc(kb, call)
        if doc is None:
            continue
        key = (call.name, call.arity)
        if key == prev_key:
            continue
        out.append((call, doc))
        prev_key = key
    return out


def docs_for_method(kb: ApiDocKb, calls, max_doc_len: int = 256) -> list[str]:
    """Concatenated doc tokens for a method's calls, in call order.

    Descriptions keep all their sentences (unlike reference comments) and are
    joined by a <sep> token; the result is truncated to max_doc_len.  Methods
    with no resolvable call yield an empty sequence.
    """
    out = []
    for i, (_call, doc) in enumerate(resolved_calls(kb, calls)):
        if i > 0:
            out.append(SEP_TOKEN)
        out.extend(tokenize(doc, "comment", first_sentence=False))
    return out[:max_doc_len]
