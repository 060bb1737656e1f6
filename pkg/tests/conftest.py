import numpy as np
import pytest

from comgen import kernels
from comgen.apikb import build_kb, load_entries
from comgen.corpus import preprocess
from comgen.fixtures import micro_corpus, mini_kb_path
from comgen.harness import annotate_records, build_all_vocabs


@pytest.fixture(scope="session", autouse=True)
def jit_warmup():
    kernels.warmup()


@pytest.fixture(scope="session")
def mini_kb():
    return build_kb(load_entries(mini_kb_path()))


@pytest.fixture(scope="session")
def annotated_micro(mini_kb):
    """The 32-pair overfit corpus, fully annotated, with vocabularies."""
    records, _ = preprocess(micro_corpus())
    annotate_records(records, mini_kb, ast_max_len=32)
    vocabs = build_all_vocabs(records, min_count=1)
    return records, vocabs


def rel_error(a, b, floor=1e-6):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(floor, np.maximum(np.abs(a), np.abs(b)))
