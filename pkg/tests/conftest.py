import os

# single-threaded BLAS keeps timings and float reductions stable
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import json  # noqa: E402

import pytest  # noqa: E402

from storysalad.corpus import Document  # noqa: E402


def make_doc(doc_id, key, n_paragraphs=3, per_paragraph=3, word="w"):
    paras = [[[f"{word}{p}", f"{word}{p}_{s}", "the"] for s in range(per_paragraph)]
             for p in range(n_paragraphs)]
    return Document(id=doc_id, group_key=key, paragraphs=paras)


@pytest.fixture
def docs():
    return [make_doc(f"d{i}", key, word=f"t{i}x")
            for i, key in enumerate(["war-east", "war-west", "sports", "sports", "war-north"])]


@pytest.fixture
def write_jsonl(tmp_path):
    def _write(name, rows):
        path = tmp_path / name
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        return path
    return _write


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n])
