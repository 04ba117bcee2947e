"""Percent-bias benchmark over the synthetic scenarios.

Every (scenario, seed) dataset is scored by four estimators: least squares
with all covariates, TSLS with all covariates as instruments, the
shared-conditioning tetrad baseline and the per-instrument conditioning
search.  The PAG is learned once per dataset and shared by the two tetrad
methods.
"""

from __future__ import annotations

import csv
import io
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .estimation import lsr, naive_tsls
from .exceptions import AivgtError
from .search import AivgtConfig, run_aivgt, run_shared_conditioning_baseline
from .simdata import Scenario, SimConfig, generate, true_beta

METHODS = ("lsr", "naive_tsls", "shared_conditioning", "aivgt")


def percent_bias(beta: float | None, truth: float) -> float:
    """``|(beta - truth) / truth| * 100``; an NA estimate counts as infinite bias."""
    if beta is None or not np.isfinite(beta):
        return float("inf")
    return abs((beta - truth) / truth) * 100


@dataclass(frozen=True)
class BenchRow:
    scenario: str
    seed: int
    method: str
    beta: float | None
    bias_pct: float
    status: str
    pair: str


def _run_one(args) -> list[BenchRow]:
    sc, seed, n, cfg = args
    data = generate(sc, SimConfig(n=n, seed=seed))
    truth = true_beta(sc)
    covs = [c for c in data.names if c not in ("W", "Y")]
    rows = []

    def add(method, beta, status="estimated", pair=""):
        rows.append(BenchRow(sc.value, seed, method, beta, percent_bias(beta, truth), status, pair))

    for method, fn in (("lsr", lambda: lsr(data, "W", "Y", covs)),
                       ("naive_tsls", lambda: naive_tsls(data, "W", "Y", covs))):
        try:
            add(method, fn().beta)
        except AivgtError as exc:
            add(method, None, f"error: {exc}")
    rep = run_aivgt(data, "W", "Y", cfg)
    base = run_shared_conditioning_baseline(data, "W", "Y", cfg, graph=rep.graph)
    for method, r in (("shared_conditioning", base), ("aivgt", rep)):
        pair = f"{r.chosen.s_i}+{r.chosen.s_j}" if r.chosen else ""
        add(method, r.beta, r.status.value if r.estimated else f"na:{r.reason.value}", pair)
    order = {m: k for k, m in enumerate(METHODS)}
    return sorted(rows, key=lambda r: order[r.method])


def _workers() -> int:
    env = os.environ.get("AIVGT_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def run_bench(scenarios: Iterable = "abcde", reps: int = 30, n: int = 10_000,
              cfg: AivgtConfig = AivgtConfig(), seed0: int = 0, workers: int | None = None) -> list[BenchRow]:
    """Rows ordered by scenario, then seed, then method, whatever the worker count."""
    jobs = [(Scenario.parse(s), seed0 + k, n, cfg) for s in scenarios for k in range(reps)]
    workers = _workers() if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        results = map(_run_one, jobs)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    return [row for rows in results for row in rows]


def summarize(rows: Sequence[BenchRow]) -> list[dict]:
    """Median percent bias and NA count per (scenario, method)."""
    out = []
    for sc in dict.fromkeys(r.scenario for r in rows):
        for m in METHODS:
            sel = [r for r in rows if r.scenario == sc and r.method == m]
            if not sel:
                continue
            bias = np.array([r.bias_pct for r in sel])
            out.append({
                "scenario": sc,
                "method": m,
                "reps": len(sel),
                "median_bias_pct": float(np.median(bias)),
                "na_count": int(sum(r.beta is None for r in sel)),
                "pair_s1_s2": int(sum(r.pair == "S1+S2" for r in sel)),
            })
    return out


def _csv(records: list[dict]) -> str:
    buf = io.StringIO()
    if records:
        w = csv.DictWriter(buf, fieldnames=list(records[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(records)
    return buf.getvalue()


def rows_csv(rows: Sequence[BenchRow]) -> str:
    return _csv([{**r.__dict__, "beta": "" if r.beta is None else repr(r.beta)} for r in rows])


def summary_csv(summary: list[dict]) -> str:
    return _csv(summary)


def summary_table(summary: list[dict]) -> str:
    lines = [f"{'scenario':<9}{'method':<22}{'median bias %':>14}{'NA':>5}{'S1+S2':>7}"]
    for s in summary:
        lines.append(f"{s['scenario']:<9}{s['method']:<22}{s['median_bias_pct']:>14.2f}"
                     f"{s['na_count']:>5}{s['pair_s1_s2']:>7}")
    return "\n".join(lines)
