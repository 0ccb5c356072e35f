import numpy as np
import pytest

from mgmae.data import ParallelCorpus, tokenize, tokenize_logical_form

FIVE_SENTENCES = [
    "the cat sat on the mat .",
    "what is the capital of texas ?",
    "how many rivers are in ohio ?",
    "i like green apples and pears .",
    "go home now !",
]

STATES = ["texas", "ohio", "utah", "iowa", "maine", "idaho", "kansas", "oregon", "alaska", "nevada"]


def geo_pairs(states=STATES):
    """Two structurally different question families over the same entities."""
    rows = []
    for s in states:
        rows.append((f"what is the capital of {s} ?", f"answer(capital({s}))"))
        rows.append((f"how many rivers run through the state of {s} ?", f"answer(count(river(loc({s}))))"))
    return rows


def write_geo_split(root, train_rows, dev_rows):
    d = root / "geoquery"
    d.mkdir(parents=True, exist_ok=True)
    (d / "train.tsv").write_text("".join(f"{q}\t{a}\n" for q, a in train_rows), encoding="utf-8")
    (d / "dev.tsv").write_text("".join(f"{q}\t{a}\n" for q, a in dev_rows), encoding="utf-8")
    return d


def geo_corpus(rows=None):
    rows = geo_pairs() if rows is None else rows
    return ParallelCorpus.from_tokens([(tokenize(q), tokenize_logical_form(a)) for q, a in rows])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def five_corpus():
    return ParallelCorpus.from_tokens([(tokenize(s), tokenize(s)) for s in FIVE_SENTENCES])


@pytest.fixture
def geo_data(tmp_path):
    rows = geo_pairs()
    write_geo_split(tmp_path, rows, rows[:6])
    return tmp_path


_ACCEPTANCE: dict[int, tuple[str, str]] = {}


@pytest.fixture
def verdict():
    """Record the outcome of one acceptance criterion: verdict(n, status, detail)."""
    def record(n, status, detail=""):
        _ACCEPTANCE[n] = (status, detail)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}".rstrip())
