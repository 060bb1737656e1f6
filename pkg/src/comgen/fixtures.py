"""Bundled synthetic corpora: a 32-pair overfit set, a filter/strata fixture
corpus, a doc-seeded corpus for the encoder-ablation direction check, and a
bank of lexer fixture methods.

Everything is generated deterministically so tests can hand-count
expectations.
"""

from __future__ import annotations

import importlib.resources as resources
import json

import numpy as np

from comgen.apikb import ApiDocEntry
from comgen.corpus import MethodRecord


def mini_kb_path():
    """Path to the bundled miniature JDK documentation TSV."""
    return resources.files("comgen").joinpath("data/jdk_mini.tsv")


def write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            obj = {"id": r.id, "code": r.source, "docstring": r.comment}
            fh.write(json.dumps(obj) + "\n")


# --------------------------------------------------------------------------
# 32-pair overfit corpus
# --------------------------------------------------------------------------

_MICRO_TEMPLATES = [
    ("int count{N}(List {v}) {{\n    return {v}.size();\n}}",
     "returns the number of {n} entries"),
    ("String head{N}(String {v}) {{\n    int k = {v}.indexOf(\" \");\n"
     "    return {v}.substring(k);\n}}",
     "cuts the {n} after the first space"),
    ("boolean has{N}(Map m, String key) {{\n    return m.containsKey(key);\n}}",
     "checks whether the {n} key exists"),
    ("String show{N}(Object o) {{\n    return o.toString();\n}}",
     "formats the {n} as readable text"),
    ("char pick{N}(String s, int i) {{\n    return s.charAt(i);\n}}",
     "selects one {n} letter by position"),
    ("void push{N}(List out, Object x) {{\n    out.add(x);\n}}",
     "appends a fresh {n} entry"),
    ("int measure{N}(String s) {{\n    return s.length();\n}}",
     "gives the {n} text width"),
    ("String tidy{N}(String s) {{\n    return s.trim();\n}}",
     "cleans the raw {n} string"),
]

_MICRO_NOUNS = [
    ["order", "ticket", "basket", "invoice"],
    ["title", "label", "slogan", "caption"],
    ["session", "account", "profile", "token"],
    ["report", "record", "payload", "bundle"],
    ["vowel", "digit", "symbol", "accent"],
    ["queue", "batch", "layer", "branch"],
    ["banner", "footer", "header", "margin"],
    ["input", "draft", "memo", "notice"],
]


def micro_corpus():
    """32 tiny (method, comment) pairs built to be memorized exactly."""
    records = []
    for t, (src_tpl, com_tpl) in enumerate(_MICRO_TEMPLATES):
        for k, noun in enumerate(_MICRO_NOUNS[t]):
            name = noun.capitalize()
            records.append(MethodRecord(
                id=f"micro-{t}-{k}",
                source=src_tpl.format(N=name, v="arg"),
                comment=com_tpl.format(n=noun),
            ))
    return records


# --------------------------------------------------------------------------
# filter / stratification fixture corpus
# --------------------------------------------------------------------------

# statements with exactly one resolvable call in the bundled KB
_API_STATEMENTS = [
    "s.trim()", "s.length()", "s.charAt(0)", "box.size()",
    "box.add(x)", "s.indexOf(\"a\")", "x.toString()",
    "box.containsKey(\"k\")", "s.substring(1)", "it.hasNext()",
    "s.toLowerCase()", "s.isEmpty()", "box.keySet()", "it.next()",
    "s.startsWith(\"p\")", "s.endsWith(\"q\")",
]

_ADJS = ["quick", "spare", "plain", "fixed", "local", "inner", "outer",
         "upper", "lower", "minor", "major", "prior", "rough", "tidy",
         "wide", "slim"]
_NOUNS = ["merge", "clean", "scan", "split", "patch", "probe", "shift",
          "guard", "trace", "audit", "fetch", "stash", "drain", "prune",
          "weave", "blend"]


def _stratum_method(idx, n_apis, rng):
    stmts = []
    picks = rng.choice(len(_API_STATEMENTS), size=n_apis, replace=False)
    for p in picks:
        stmts.append(f"    {_API_STATEMENTS[p]};")
    body = "\n".join(stmts)
    adj = _ADJS[idx % len(_ADJS)]
    noun = _NOUNS[(idx // len(_NOUNS)) % len(_NOUNS)]
    source = (f"void work{idx}(String s, Map box, Iterator it, Object x) {{\n"
              f"{body}\n}}")
    comment = f"runs the {adj} {noun} pass number {idx}"
    return MethodRecord(id=f"fx-{n_apis}api-{idx}", source=source, comment=comment)


def pipeline_corpus():
    """Raw fixture corpus plus hand-countable expectations.

    Returns (records, expected) where expected maps each drop reason to its
    count and records how many survive.
    """
    rng = np.random.default_rng(7)
    records = []
    idx = 0
    for n_apis in (1, 2, 3, 4):
        for _ in range(16):
            records.append(_stratum_method(idx, n_apis, rng))
            idx += 1
    for z in range(4):  # zero-API methods
        records.append(MethodRecord(
            id=f"fx-0api-{z}",
            source=f"int plus{z}(int a, int b) {{\n    int c = a + b;\n    return c;\n}}",
            comment=f"adds two plain numbers case {z}",
        ))
    dropped = [
        MethodRecord("bad-short-comment-1",
                     "int f1(int a) {\n    return a;\n}", "ok done"),
        MethodRecord("bad-short-comment-2",
                     "int f2(int a) {\n    return a;\n}", "noop"),
        MethodRecord("bad-short-source-1",
                     "int g1(int a) { return a; }", "gives back the argument"),
        MethodRecord("bad-short-source-2",
                     "int g2(int a) { return a + 1; }", "adds one to the argument"),
        MethodRecord("bad-test-name-1",
                     "void testParser() {\n    run();\n    stop();\n}",
                     "checks the parser behaviour"),
        MethodRecord("bad-test-name-2",
                     "void runLatestCheck() {\n    run();\n    stop();\n}",
                     "runs the latest check"),
        MethodRecord("bad-ctor-1",
                     "public Widget(int w) {\n    this.w = w;\n    init();\n}",
                     "builds a widget with width"),
        MethodRecord("bad-ctor-2",
                     "Gadget(String name) {\n    this.name = name;\n    init();\n}",
                     "builds a gadget with a name"),
        MethodRecord("bad-long-comment",
                     "int h(int a) {\n    return a * 2;\n}",
                     "word " * 70),
        MethodRecord("bad-long-code",
                     "int big() {\n" + "".join(f"    int v{i} = {i};\n"
                                               for i in range(150)) + "    return v0;\n}",
                     "holds far too many statements"),
    ]
    duplicates = [
        MethodRecord("dup-1", records[0].source.replace("\n", "\n "),
                     "duplicate body with different comment"),
        MethodRecord("dup-2", records[1].source + "\n",
                     "another duplicate body here"),
    ]
    expected = {
        "kept": len(records),
        "raw": len(records) + len(dropped) + len(duplicates),
        "reasons": {
            "comment_too_short": 2,
            "source_too_short": 2,
            "test_name": 2,
            "constructor": 2,
            "comment_too_long": 1,
            "code_too_long": 1,
            "duplicate": 2,
        },
    }
    return records + dropped + duplicates, expected


# --------------------------------------------------------------------------
# doc-seeded corpus: comments are prefixes of the (synthetic) API docs
# --------------------------------------------------------------------------

_DOC_WORDS = [
    "amber", "basin", "cedar", "delta", "ember", "fjord", "gravel", "harbor",
    "ivory", "juniper", "kernel", "lagoon", "marble", "nickel", "onyx",
    "pearl", "quartz", "raven", "slate", "timber", "umber", "velvet",
    "walnut", "xenon", "yarrow", "zephyr", "cobalt", "dune", "flint", "moss",
]


def directionality_corpus(n_apis=100, per_api=5, train_apis=80, doc_len=8,
                          comment_len=5, seed=11):
    """Methods that call one synthetic API whose doc text seeds the comment.

    The comment is the first ``comment_len`` words of the API's doc, so a
    model that reads the doc encoder has the answer in its input while a
    code-only model must memorize opaque callee names.  Test methods use APIs
    never seen in training (their docs are still in the KB).

    Returns (train_records, test_records, kb_entries).
    """
    rng = np.random.default_rng(seed)
    kb_entries = []
    docs = []
    for a in range(n_apis):
        words = [_DOC_WORDS[w] for w in rng.choice(len(_DOC_WORDS),
                                                   size=doc_len, replace=False)]
        docs.append(words)
        kb_entries.append(ApiDocEntry(f"op{a}q", 0, f"synthetic.Api{a}",
                                      " ".join(words) + "."))
    train, test = [], []
    for a in range(n_apis):
        for j in range(per_api):
            rec = MethodRecord(
                id=f"dir-{a}-{j}",
                source=(f"void apply(Data d) {{\n    d.op{a}q();\n"
                        f"    mark({j});\n}}"),
                comment=" ".join(docs[a][:comment_len]),
            )
            (train if a < train_apis else test).append(rec)
    return train, test, kb_entries


# --------------------------------------------------------------------------
# lexer fixture methods
# --------------------------------------------------------------------------

_LEXER_TEMPLATES = [
    'int add{N}(int a, int b) {{\n    return a + b;\n}}',
    'String quote{N}(String s) {{\n    String t = "pre;fix" + s;\n    return t.trim();\n}}',
    'char escape{N}() {{\n    char c = \'\\n\';\n    return c;\n}}',
    'int hex{N}(int mask) {{\n    int v = 0xFF & mask;\n    return v >>> 2;\n}}',
    'double scale{N}(double x) {{\n    double f = 1.5e-3;\n    return f * x;\n}}',
    'boolean gate{N}(int a, int b) {{\n    return a >= b && b != 0;\n}}',
    'int pick{N}(boolean flag, int a, int b) {{\n    return flag ? a : b;\n}}',
    '// helper\nint dec{N}(int n) {{\n    n--;\n    return n;\n}}',
    'int sum{N}(int[] xs) {{\n    int s = 0;\n    for (int i = 0; i < xs.length; i++) {{\n        s += xs[i];\n    }}\n    return s;\n}}',
    'String both{N}(String a, String b) {{\n    return a.concat(b.trim());\n}}',
    'int floor{N}(double x) {{\n    return (int) x;\n}}',
    'void spin{N}(int n) {{\n    while (n > 0) {{\n        n = n - 1;\n    }}\n}}',
    'void note{N}() {{\n    /* block\n       comment */\n    log("done\\t");\n}}',
    'int first{N}(List<Integer> xs) {{\n    return xs.get(0);\n}}',
    'Object make{N}() {{\n    return new Holder(1, "two");\n}}',
    'int nest{N}(String s) {{\n    return outer(inner(s.length()), 2);\n}}',
    'void each{N}(List<String> xs) {{\n    for (String x : xs) {{\n        sink(x);\n    }}\n}}',
    'long clock{N}() {{\n    return System.currentTimeMillis();\n}}',
    'int mod{N}(int a) {{\n    int r = a % 7;\n    r <<= 1;\n    return r;\n}}',
    'String chain{N}(String s) {{\n    return s.trim().toLowerCase().substring(1);\n}}',
    'boolean neg{N}(boolean p) {{\n    return !p;\n}}',
    'int loop{N}(int n) {{\n    int i = 0;\n    do {{\n        i++;\n    }} while (i < n);\n    return i;\n}}',
    'void fill{N}(Map m) {{\n    m.put("k", 1);\n    m.put("v", 2);\n}}',
    'String fmt{N}(int n) {{\n    return String.format("n=%d", n);\n}}',
    'int abs{N}(int v) {{\n    if (v < 0) {{\n        return -v;\n    }}\n    return v;\n}}',
]

_LEXER_NAMES = ["Alpha", "Bravo", "Cedar", "Delta"]


def lexer_methods():
    """100 parseable Java methods exercising the lexer token classes."""
    out = []
    for tpl in _LEXER_TEMPLATES:
        for name in _LEXER_NAMES:
            out.append(tpl.format(N=name))
    return out
