import json
from datetime import date, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contrasim.corpus import (
    DailyNewsSet,
    Headline,
    MarketLabel,
    TfidfModel,
    derive_label,
    ingest_dataset,
    label_from_pct,
    label_from_review_score,
    relevance_filter,
    split_corpus,
    tfidf_prune,
)
from contrasim.embeddings import MockEmbedder, embed_text

from conftest import make_day


# ---------------------------------------------------------------------------
# labels
# ---------------------------------------------------------------------------

def test_derive_label_examples():
    assert derive_label(100.0, 101.0) == (pytest.approx(1.0), MarketLabel.RISE)
    pct, label = derive_label(100.0, 100.5)
    assert pct == pytest.approx(0.5) and label is MarketLabel.NEUTRAL
    assert derive_label(200.0, 198.0) == (pytest.approx(-1.0), MarketLabel.FALL)


def test_derive_label_rejects_nonpositive_close():
    with pytest.raises(ValueError):
        derive_label(0.0, 100.0)
    with pytest.raises(ValueError):
        derive_label(-5.0, 100.0)


def test_label_boundaries_inclusive_neutral():
    cases = {-0.51: MarketLabel.FALL, -0.5: MarketLabel.NEUTRAL, 0.0: MarketLabel.NEUTRAL,
             0.5: MarketLabel.NEUTRAL, 0.51: MarketLabel.RISE}
    for pct, expected in cases.items():
        assert label_from_pct(pct) is expected


@given(st.floats(allow_nan=False, allow_infinity=False, width=64))
def test_label_total_function(pct):
    assert label_from_pct(pct) in (MarketLabel.FALL, MarketLabel.NEUTRAL, MarketLabel.RISE)


def test_review_score_mapping():
    assert label_from_review_score(3.0) is MarketLabel.FALL
    assert label_from_review_score(5.5) is MarketLabel.FALL
    assert label_from_review_score(6.0) is MarketLabel.NEUTRAL
    assert label_from_review_score(7.5) is MarketLabel.NEUTRAL
    assert label_from_review_score(9.9) is MarketLabel.RISE
    assert MarketLabel.RISE.display("review") == "High"
    assert MarketLabel.FALL.display("wsj") == "Fall"


# ---------------------------------------------------------------------------
# ingestion
# ---------------------------------------------------------------------------

def _write_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def test_ingest_single_line(tmp_path):
    path = tmp_path / "data.jsonl"
    _write_jsonl(path, [{"date": "2020-01-02", "headlines": ["a headline"]}])
    days = ingest_dataset(path)
    assert len(days) == 1
    assert days[0].date == date(2020, 1, 2)
    assert days[0].headlines[0].text == "a headline"


def test_ingest_empty_file(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text("")
    assert ingest_dataset(path) == []


def test_ingest_rejects_empty_headline_list(tmp_path):
    path = tmp_path / "data.jsonl"
    _write_jsonl(path, [{"date": "2020-01-02", "headlines": []}])
    with pytest.raises(ValueError, match="empty headline list"):
        ingest_dataset(path)


def test_ingest_rejects_duplicate_date(tmp_path):
    path = tmp_path / "data.jsonl"
    _write_jsonl(path, [
        {"date": "2020-01-02", "headlines": ["a"]},
        {"date": "2020-01-02", "headlines": ["b"]},
    ])
    with pytest.raises(ValueError, match="duplicate date"):
        ingest_dataset(path)


def test_ingest_reports_line_number(tmp_path):
    path = tmp_path / "data.jsonl"
    path.write_text('{"date": "2020-01-02", "headlines": ["a"]}\nnot json\n')
    with pytest.raises(ValueError, match=":2"):
        ingest_dataset(path)


def test_ingest_rejects_inconsistent_label_pct(tmp_path):
    path = tmp_path / "data.jsonl"
    _write_jsonl(path, [{"date": "2020-01-02", "headlines": ["a"],
                         "label": "Rise", "pct_change": -3.0}])
    with pytest.raises(ValueError, match="inconsistent"):
        ingest_dataset(path)


def test_ingest_keeps_consistent_label_pct(tmp_path):
    path = tmp_path / "data.jsonl"
    _write_jsonl(path, [{"date": "2020-01-02", "headlines": ["a"],
                         "label": "Rise", "pct_change": 2.0, "source": "tweet"}])
    day = ingest_dataset(path)[0]
    assert day.label is MarketLabel.RISE
    assert day.headlines[0].source == "tweet"


def test_ingest_rejects_unknown_keys(tmp_path):
    path = tmp_path / "data.jsonl"
    _write_jsonl(path, [{"date": "2020-01-02", "headlines": ["a"], "sentiment": 1}])
    with pytest.raises(ValueError, match="unknown keys"):
        ingest_dataset(path)


def test_headline_requires_nonempty_text():
    with pytest.raises(ValueError):
        Headline(id="x", date=date(2020, 1, 2), text="   ")


def test_dns_headline_dates_must_match():
    h = Headline(id="x", date=date(2020, 1, 3), text="t")
    with pytest.raises(ValueError):
        DailyNewsSet(date=date(2020, 1, 2), headlines=(h,))


# ---------------------------------------------------------------------------
# tf-idf pruning
# ---------------------------------------------------------------------------

@pytest.fixture
def fitted_model():
    docs = [
        "markets rally on earnings beat",
        "markets slide on rate fears",
        "oil prices surge on supply cuts",
        "quiet session as traders wait",
    ]
    return TfidfModel().fit(docs)


def test_prune_identity_below_cap(fitted_model):
    text = "ten words of text should stay exactly as they are"
    assert tfidf_prune(text, fitted_model, max_words=3000) == text


def test_prune_truncation_only_when_all_scores_high(fitted_model):
    # single repeated rare word: tf = 1, idf > 1, so every word scores >= 0.2
    text = " ".join(["zirconium"] * 50)
    out = tfidf_prune(text, fitted_model, threshold=0.2, max_words=10)
    assert out == " ".join(["zirconium"] * 10)


def test_prune_empty_text(fitted_model):
    assert tfidf_prune("", fitted_model) == ""


def test_prune_drops_low_scoring_words(fitted_model):
    # "markets" appears in half the fitted docs (low idf); diluted across a
    # long text its score falls below the threshold while the dominant rare
    # word keeps scoring above it.
    text = " ".join(["markets"] * 3 + ["kryptonite"] * 37)
    out = tfidf_prune(text, fitted_model, threshold=0.2, max_words=20)
    assert "markets" not in out.split()
    assert set(out.split()) == {"kryptonite"}
    assert len(out.split()) <= 20


def test_prune_requires_fitted_model():
    with pytest.raises(ValueError, match="unfitted"):
        tfidf_prune("a b", TfidfModel())


@given(st.lists(st.sampled_from("alpha beta gamma delta".split()), min_size=0, max_size=60))
@settings(max_examples=50)
def test_prune_never_exceeds_cap(words):
    model = TfidfModel().fit(["alpha beta", "gamma delta alpha"])
    out = tfidf_prune(" ".join(words), model, threshold=0.1, max_words=8)
    assert len(out.split()) <= max(8, min(len(words), 8))
    if len(words) <= 8:
        assert out == " ".join(words)


# ---------------------------------------------------------------------------
# relevance filter
# ---------------------------------------------------------------------------

def test_relevance_keeps_exact_reference_match():
    embedder = MockEmbedder(dim=16, seed=3)
    day = date(2020, 1, 2)
    h = Headline(id="a", date=day, text="oil rallies")
    ref = embed_text("oil rallies", embedder)
    kept = relevance_filter([h], [ref], embedder, threshold=0.2)
    assert kept == [h]


def test_relevance_drops_orthogonal():
    class OneHot:
        dim = 4

        def embed(self, text):
            vec = np.zeros(4)
            vec[hash(text) % 2] = 1.0  # texts land on axis 0 or 1
            return vec

    day = date(2020, 1, 2)
    heads = [Headline(id=str(i), date=day, text=f"t{i}") for i in range(4)]
    embedder = OneHot()
    ref = np.array([0.0, 0.0, 1.0, 0.0])  # orthogonal to every headline
    assert relevance_filter(heads, [ref], embedder, threshold=0.2) == []


def test_relevance_mixed_batch_matches_cosine_oracle():
    embedder = MockEmbedder(dim=24, seed=11)
    day = date(2020, 1, 2)
    texts = ["alpha news", "beta news", "gamma news"]
    heads = [Headline(id=str(i), date=day, text=t) for i, t in enumerate(texts)]
    refs = [embed_text("alpha news", embedder), embed_text("delta news", embedder)]

    threshold = 0.15
    expected = []
    for h in heads:  # brute-force cosine against each reference
        v = embed_text(h.text, embedder)
        best = max(float(np.dot(v, r)) for r in refs)
        if best >= threshold:
            expected.append(h.id)
    got = [h.id for h in relevance_filter(heads, refs, embedder, threshold=threshold)]
    assert got == expected
    assert "0" in got  # exact match always survives


def test_relevance_monotone_in_threshold():
    embedder = MockEmbedder(dim=24, seed=5)
    day = date(2020, 1, 2)
    heads = [Headline(id=str(i), date=day, text=f"story {i}") for i in range(10)]
    refs = [embed_text("story 0", embedder), embed_text("story 5", embedder)]
    previous = None
    for threshold in (0.0, 0.1, 0.3, 0.7, 1.0):
        kept = {h.id for h in relevance_filter(heads, refs, embedder, threshold=threshold)}
        if previous is not None:
            assert kept <= previous
        previous = kept


def test_relevance_propagates_provider_failure_with_id():
    class Broken:
        def embed(self, text):
            raise ConnectionError("boom")

    day = date(2020, 1, 2)
    h = Headline(id="h-17", date=day, text="text")
    with pytest.raises(RuntimeError, match="h-17"):
        relevance_filter([h], [np.ones(4) / 2.0], Broken(), threshold=0.2)


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------

def _days(n):
    start = date(2021, 1, 1)
    return [make_day(start + timedelta(days=i), [f"headline {i}"]) for i in range(n)]


def test_split_ten_days_chronological():
    split = split_corpus(_days(10))
    assert (len(split.train), len(split.valid), len(split.test)) == (8, 1, 1)
    assert split.test[0].date == date(2021, 1, 10)


def test_split_three_days_gets_one_each():
    split = split_corpus(_days(3))
    assert (len(split.train), len(split.valid), len(split.test)) == (1, 1, 1)


def test_split_random_deterministic_under_seed():
    days = _days(12)
    a = split_corpus(days, mode="random", seed=9)
    b = split_corpus(days, mode="random", seed=9)
    assert [d.date for d in a.train] == [d.date for d in b.train]
    assert [d.date for d in a.test] == [d.date for d in b.test]


def test_split_rejects_too_few():
    with pytest.raises(ValueError):
        split_corpus(_days(2))


def test_split_rejects_bad_fractions():
    with pytest.raises(ValueError):
        split_corpus(_days(5), fractions=(0.5, 0.2, 0.2))


@given(st.integers(3, 60), st.booleans(), st.integers(0, 5))
@settings(max_examples=60)
def test_split_disjoint_exhaustive(n, chrono, seed):
    days = _days(n)
    split = split_corpus(days, mode="chronological" if chrono else "random", seed=seed)
    pieces = [split.train, split.valid, split.test]
    dates = [d.date for piece in pieces for d in piece]
    assert len(dates) == n
    assert len(set(dates)) == n
    assert set(dates) == {d.date for d in days}
    assert all(len(piece) >= 1 for piece in pieces)
