#!/usr/bin/env python3
"""Regenerate the bundled 20-day synthetic corpus.

Deterministic: headline templates are filled from fixed word pools with a
seeded generator, labels derived from synthetic close-to-close moves. Output
goes to src/contrasim/data/synthetic_20d.jsonl (or --out).
"""

from __future__ import annotations

import argparse
import json
from datetime import date, timedelta
from pathlib import Path

import numpy as np

SECTORS = ["Energy", "Tech", "Banking", "Retail", "Auto", "Pharma", "Housing", "Shipping"]
GOOD = [
    "{sector} Stocks Rally on Strong Earnings",
    "{sector} Sector Gains as Demand Rebounds",
    "Investors Cheer {sector} Merger Announcement",
    "{sector} Output Beats Forecasts This Quarter",
]
BAD = [
    "{sector} Shares Slump After Profit Warning",
    "{sector} Sector Hit by Supply Disruptions",
    "Regulators Probe {sector} Giants Over Pricing",
    "{sector} Orders Dry Up as Growth Slows",
]
FLAT = [
    "{sector} Stocks Little Changed Ahead of Data",
    "Mixed Session for {sector} Names",
    "{sector} Sector Treads Water as Traders Wait",
]


def label_for(pct: float) -> str:
    if pct < -0.5:
        return "Fall"
    if pct > 0.5:
        return "Rise"
    return "Neutral"


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=None)
    parser.add_argument("--days", type=int, default=20)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    out = Path(args.out) if args.out else (
        Path(__file__).resolve().parent.parent / "src" / "contrasim" / "data" / "synthetic_20d.jsonl"
    )
    rng = np.random.Generator(np.random.PCG64(args.seed))
    start = date(2024, 1, 2)
    close = 100.0
    rows = []
    day = start
    for _ in range(args.days):
        while day.weekday() >= 5:
            day += timedelta(days=1)
        move = float(rng.normal(0.0, 0.9))
        new_close = close * (1 + move / 100.0)
        pct = (new_close - close) / close * 100.0
        label = label_for(pct)
        pool = {"Rise": GOOD, "Fall": BAD, "Neutral": FLAT}[label]
        n_headlines = int(rng.integers(2, 6))
        headlines = []
        for _ in range(n_headlines):
            template = pool[int(rng.integers(0, len(pool)))]
            sector = SECTORS[int(rng.integers(0, len(SECTORS)))]
            text = template.format(sector=sector)
            if text in headlines:  # keep headlines within a day distinct
                text = f"{text} ({sector} Watch)"
            headlines.append(text)
        rows.append({
            "date": day.isoformat(),
            "headlines": headlines,
            "label": label,
            "pct_change": round(pct, 6),
            "source": "wsj",
        })
        close = new_close
        day += timedelta(days=1)

    with open(out, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    print(f"wrote {len(rows)} days to {out}")


if __name__ == "__main__":
    main()
