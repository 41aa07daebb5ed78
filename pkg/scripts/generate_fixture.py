#!/usr/bin/env python3
"""Regenerate the deterministic fixture dataset under tests/data/.

Synthesizes a small eight-protocol portfolio with monthly TVL histories,
portfolio incidents (protocol P5 deliberately has none, to exercise the
peer-interval path), and a pool of ecosystem incidents for severity
fitting with a mix of total, partial, and missing-TVL losses.
"""

import json
import math
from pathlib import Path

import numpy as np

DATA_DIR = Path(__file__).resolve().parent.parent / "tests" / "data"

PROTOCOLS = [
    # (id, chain, inception, base log10 TVL)
    ("P1", "ETH", "2020-05", 8.6),
    ("P2", "ETH", "2020-01", 9.0),
    ("P3", "ETH", "2020-02", 8.2),
    ("P4", "ETH", "2020-03", 8.8),
    ("P5", "ETH", "2021-05", 8.0),
    ("P6", "ETH", "2020-03", 8.9),
    ("P7", "BSC", "2020-11", 8.3),
    ("P8", "OTHER", "2021-09", 7.9),
]
WINDOW_END = (2023, 12)
THETA = 0.5


def month_iter(start, end):
    y, m = start
    while (y, m) <= end:
        yield y, m
        m += 1
        if m == 13:
            y, m = y + 1, 1


def similarity_matrix():
    d = len(PROTOCOLS)
    sim = np.full((d, d), 0.2)
    np.fill_diagonal(sim, 1.0)
    sim[0, 3] = sim[3, 0] = 0.6  # P1-P4 share a lending code base
    sim[1, 2] = sim[2, 1] = 0.5  # P2-P3 are forked exchanges
    sim[4, 5] = sim[5, 4] = 0.4
    sim[6, 7] = sim[7, 6] = 0.1
    assert np.linalg.eigvalsh(sim).min() > 1e-3, "fixture similarity must be PD"
    return sim


def main():
    gen = np.random.default_rng(20240601)
    DATA_DIR.mkdir(parents=True, exist_ok=True)

    tvl_rows = []
    tvl_series = {}
    for pid, _chain, inception, base in PROTOCOLS:
        start = tuple(int(v) for v in inception.split("-"))
        months = list(month_iter(start, WINDOW_END))
        log_tvl = base * math.log(10.0) + np.cumsum(gen.normal(0.0, 0.25, size=len(months)))
        series = {}
        for (y, m), lt in zip(months, log_tvl):
            value = float(np.exp(lt))
            series[(y, m)] = value
            tvl_rows.append(f"{pid},{y:04d}-{m:02d},{value:.2f}")
        tvl_series[pid] = series

    incident_rows = []
    issue_types = ["access_control", "flash_loan", "oracle", "phishing", "reentrancy", "other"]

    # Portfolio incidents: roughly 6% of months, none for P5.
    for pid, chain, inception, _base in PROTOCOLS:
        if pid == "P5":
            continue
        months = list(tvl_series[pid])
        hits = [mo for mo in months if gen.random() < 0.06]
        if not hits:
            hits = [months[len(months) // 2]]
        for y, m in hits:
            day = int(gen.integers(1, 28))
            tvl = tvl_series[pid][(y, m)]
            if gen.random() < 0.25:
                loss = tvl  # drained
            else:
                ratio = float(gen.beta(1.2, 6.0))
                loss = max(ratio * tvl, 1000.0)
            issue = issue_types[int(gen.integers(0, len(issue_types)))]
            incident_rows.append(
                f"{pid},{y:04d}-{m:02d}-{day:02d},{chain},{issue},{loss:.2f},{tvl:.2f}"
            )

    # Ecosystem incidents for severity fitting.
    chains = ["ETH", "BSC", "OTHER"]
    for i in range(250):
        chain = chains[int(gen.choice(3, p=[0.55, 0.25, 0.20]))]
        y = int(gen.integers(2020, 2024))
        m = int(gen.integers(1, 13))
        day = int(gen.integers(1, 28))
        issue = issue_types[int(gen.integers(0, len(issue_types)))]
        log_tvl = gen.normal(16.0, 1.8)
        tvl = float(np.exp(log_tvl))
        u = gen.random()
        if u < 0.30:
            # TVL snapshot unavailable: report the loss alone.
            loss = float(np.exp(gen.normal(14.0, 1.5)))
            incident_rows.append(f"E{i},{y:04d}-{m:02d}-{day:02d},{chain},{issue},{loss:.2f},")
            continue
        if u < 0.45:
            loss = tvl * float(gen.uniform(1.0, 1.3))  # drained beyond the snapshot
        else:
            ratio = float(gen.beta(1.5, 4.0))
            loss = max(ratio * tvl, 1000.0)
        incident_rows.append(
            f"E{i},{y:04d}-{m:02d}-{day:02d},{chain},{issue},{loss:.2f},{tvl:.2f}"
        )

    incident_rows.sort(key=lambda row: (row.split(",")[1], row.split(",")[0]))

    (DATA_DIR / "incidents.csv").write_text(
        "protocol_id,date,chain,issue_type,loss_usd,tvl_usd\n" + "\n".join(incident_rows) + "\n",
        encoding="utf-8",
    )
    (DATA_DIR / "tvl.csv").write_text(
        "protocol_id,month,tvl_usd\n" + "\n".join(tvl_rows) + "\n", encoding="utf-8"
    )

    sim = similarity_matrix()
    portfolio = {
        "protocols": [
            {"id": pid, "chain": chain, "inception": inception, "description": f"fixture protocol {pid}"}
            for pid, chain, inception, _ in PROTOCOLS
        ],
        "similarity": [[round(float(v), 6) for v in row] for row in sim],
        "theta": THETA,
    }
    (DATA_DIR / "portfolio.json").write_text(
        json.dumps(portfolio, indent=2) + "\n", encoding="utf-8"
    )

    # Sub-portfolio without the never-attacked P5: the pricing and
    # simulation commands need a fitted frequency model per protocol.
    keep = [i for i, (pid, *_rest) in enumerate(PROTOCOLS) if pid != "P5"]
    priced = {
        "protocols": [portfolio["protocols"][i] for i in keep],
        "similarity": [[portfolio["similarity"][i][j] for j in keep] for i in keep],
        "theta": THETA,
    }
    (DATA_DIR / "portfolio_priced.json").write_text(
        json.dumps(priced, indent=2) + "\n", encoding="utf-8"
    )
    print(f"wrote fixture data to {DATA_DIR}")


if __name__ == "__main__":
    main()
