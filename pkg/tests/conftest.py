from datetime import date, timedelta

import numpy as np
import pytest

from contrasim.corpus import DailyNewsSet, Headline, MarketLabel


def make_day(day, texts, label=None, pct=None, source="wsj"):
    headlines = tuple(
        Headline(id=f"{day.isoformat()}#{i}", date=day, text=t, source=source)
        for i, t in enumerate(texts)
    )
    return DailyNewsSet(date=day, headlines=headlines, label=label, pct_change=pct)


@pytest.fixture
def tiny_corpus():
    """Five consecutive days, 2-3 headlines each, mixed labels."""
    base = date(2020, 3, 2)
    specs = [
        (["Oil prices surge on supply cuts", "Banks rally on earnings"], MarketLabel.RISE),
        (["Tech shares slide after warning", "Retail sales disappoint", "Autos fall on recall"],
         MarketLabel.FALL),
        (["Markets tread water before data", "Mixed session for energy"], MarketLabel.NEUTRAL),
        (["Chipmakers jump on record orders", "Housing starts beat forecasts"], MarketLabel.RISE),
        (["Airlines sink as fuel costs bite", "Miners drop on demand fears"], MarketLabel.FALL),
    ]
    return [
        make_day(base + timedelta(days=i), texts, label)
        for i, (texts, label) in enumerate(specs)
    ]


class ScriptedGenerator:
    """Returns queued texts in order (cycling); records calls."""

    def __init__(self, outputs):
        self.outputs = list(outputs)
        self.calls = []

    def generate(self, action, text, attempt=0, temperature=0.7):
        self.calls.append((action, text, attempt))
        return self.outputs[(len(self.calls) - 1) % len(self.outputs)]


class ScriptedDiscriminator:
    """Returns queued scores in order (cycling); records calls."""

    def __init__(self, scores):
        self.scores = list(scores)
        self.calls = []

    def score(self, text_a, text_b):
        self.calls.append((text_a, text_b))
        return self.scores[(len(self.calls) - 1) % len(self.scores)]


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(42))
