"""Instrument search by the generalised tetrad condition.

Pipeline: learn a PAG over all columns, take the neighbours of the
treatment and the outcome as candidate instruments, give each candidate
its own conditioning set (possible ancestors of the candidate and the
outcome), estimate one TSLS effect per candidate, test every unordered
pair for a vanishing tetrad, and return the mean effect of the passing
pair with the smallest consistency score ``lambda = |epsilon - delta|``.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .data import Dataset
from .discovery import FisherZBackend, LearnerConfig, learn_pag
from .estimation import tsls
from .exceptions import AivgtError, InputError
from .graph import CIRCLE, GraphKind, MixedGraph, adjacents, possible_ancestors
from .graphio import serialize_graph
from .stats import VARIANCE_MODES, cov_matrix, fisher_z_test, tetrad_test

SCHEMA_VERSION = 1


class Status(str, enum.Enum):
    ESTIMATED = "estimated"
    NA = "na"


class NaReason(str, enum.Enum):
    TOO_FEW_CANDIDATES = "TooFewCandidates"
    NO_PAIR_PASSED = "NoPairPassed"


@dataclass(frozen=True)
class AivgtConfig:
    """Search options.

    ``alpha`` is used both by the CI tests of the PAG learner and by the
    tetrad test.  ``seed`` drives the tetrad bootstrap.
    """

    alpha: float = 0.05
    tetrad_var: str = "bootstrap"
    n_boot: int = 500
    seed: int = 0
    max_cond_size: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise InputError("alpha must lie in (0, 1)")
        if self.tetrad_var not in VARIANCE_MODES:
            raise InputError(f"tetrad_var must be one of {VARIANCE_MODES}")
        if self.n_boot < 2:
            raise InputError("n_boot must be at least 2")


@dataclass(frozen=True)
class CandidatePair:
    """Diagnostics for one unordered candidate pair.

    ``epsilon_std``, ``delta_std`` and ``lambda_std`` are unit-free
    versions (tetrad divided by the marginal standard deviations of the four
    variables, effect difference rescaled by ``sd(w) / sd(y)``).  They are
    reported only and never used for selection.
    """

    s_i: str
    s_j: str
    z_i: tuple[str, ...]
    z_j: tuple[str, ...]
    beta_i: float
    beta_j: float
    tau: float
    epsilon: float
    delta: float
    lam: float
    p_value: float
    sd: float
    passed: bool
    epsilon_std: float = float("nan")
    delta_std: float = float("nan")
    lambda_std: float = float("nan")
    warnings: tuple[str, ...] = ()
    error: str | None = None

    @property
    def beta(self) -> float:
        return (self.beta_i + self.beta_j) / 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return {k: _jsonable(v) for k, v in d.items()}


def _jsonable(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    if isinstance(v, tuple):
        return list(v)
    return v


@dataclass(frozen=True)
class EstimateReport:
    status: Status
    beta: float | None
    reason: NaReason | None
    chosen: CandidatePair | None
    all_pairs: tuple[CandidatePair, ...]
    candidates: tuple[str, ...]
    conditioning: dict
    graph: MixedGraph | None
    config: AivgtConfig
    treatment: str
    outcome: str
    method: str = "aivgt"
    warnings: tuple[str, ...] = ()
    n: int = 0
    columns: tuple[str, ...] = field(default=())

    @property
    def estimated(self) -> bool:
        return self.status is Status.ESTIMATED

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "status": self.status.value,
            "beta": self.beta,
            "reason": None if self.reason is None else self.reason.value,
            "treatment": self.treatment,
            "outcome": self.outcome,
            "n": self.n,
            "columns": list(self.columns),
            "config": asdict(self.config),
            "candidates": list(self.candidates),
            "conditioning_sets": {k: list(v) for k, v in self.conditioning.items()},
            "chosen": None if self.chosen is None else self.chosen.to_dict(),
            "pairs": [p.to_dict() for p in self.all_pairs],
            "graph": None if self.graph is None else serialize_graph(self.graph),
            "warnings": list(self.warnings),
        }

    def summary(self) -> str:
        lines = [f"method: {self.method}", f"candidates: {', '.join(self.candidates) or '(none)'}"]
        for s in self.candidates:
            if s in self.conditioning:
                lines.append(f"  Z[{s}] = {{{', '.join(self.conditioning[s])}}}")
        lines.append(f"pairs tested: {len(self.all_pairs)}, passed: {sum(p.passed for p in self.all_pairs)}")
        if self.estimated:
            c = self.chosen
            lines.append(f"chosen pair: {{{c.s_i}, {c.s_j}}}  lambda={c.lam:.6g}  p={c.p_value:.4g}")
            lines.append(f"  Z[{c.s_i}] = {{{', '.join(c.z_i)}}}  beta={c.beta_i:.6g}")
            lines.append(f"  Z[{c.s_j}] = {{{', '.join(c.z_j)}}}  beta={c.beta_j:.6g}")
            lines.append(f"beta: {self.beta:.6g}")
        else:
            lines.append(f"beta: NA ({self.reason.value})")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


# ---------------------------------------------------------------------------
# graph queries

def candidate_aivs(g: MixedGraph, w: str, y: str) -> tuple[str, ...]:
    """Neighbours of ``w`` or ``y`` other than ``w`` and ``y``, sorted."""
    _check_pag(g, w, y)
    return tuple(sorted((set(adjacents(g, w)) | set(adjacents(g, y))) - {w, y}))


def conditioning_set(g: MixedGraph, s: str, w: str, y: str) -> tuple[str, ...]:
    """Possible ancestors of ``{s, y}`` without ``s``, ``w`` and ``y``, sorted."""
    _check_pag(g, w, y)
    g.index(s)
    return tuple(sorted(set(possible_ancestors(g, [s, y])) - {s, w, y}))


def _check_pag(g, w, y):
    if not isinstance(g, MixedGraph) or g.kind is not GraphKind.PAG:
        raise InputError("expected a PAG")
    g.index(w)
    g.index(y)


# ---------------------------------------------------------------------------
# orchestration

def _prepare(data: Dataset, w: str, y: str) -> Dataset:
    if w == y:
        raise InputError("treatment and outcome must differ")
    data.index(w)
    data.index(y)
    if data.n <= data.p + 5:
        raise InputError(f"need more than p + 5 = {data.p + 5} rows, got {data.n}")
    # canonical column order makes the result independent of input order
    return data.select(sorted(data.names))


def _learn(data: Dataset, w: str, y: str, cfg: AivgtConfig, cov) -> tuple[MixedGraph, tuple[str, ...]]:
    if data.p >= 3:
        res = learn_pag(FisherZBackend(cov, cfg.alpha), data.names, LearnerConfig(cfg.alpha, cfg.max_cond_size))
        return res.graph, res.warnings
    marks = np.zeros((2, 2), dtype=np.int8)
    i, j = data.index(w), data.index(y)
    if fisher_z_test(cov, w, y).p_value <= cfg.alpha:
        marks[i, j] = marks[j, i] = CIRCLE
    return MixedGraph(data.names, marks, GraphKind.PAG), ()


def _scales(cov) -> dict[str, float]:
    return {c: float(np.sqrt(cov.matrix[i, i])) for i, c in enumerate(cov.labels)}


def _score_pair(cov, boot_cov, w, y, si, sj, zi, zj, bi, bj, cfg, sd, warnings) -> CandidatePair:
    t = tetrad_test(boot_cov, si, sj, w, y, zi, zj, cfg.alpha, cfg.tetrad_var, cfg.n_boot, cfg.seed)
    eps = t.epsilon
    delta = abs(bi - bj)
    eps_std = eps / (sd[si] * sd[sj] * sd[w] * sd[y])
    delta_std = delta * sd[w] / sd[y]
    return CandidatePair(
        si, sj, tuple(zi), tuple(zj), bi, bj, t.tau, eps, delta, abs(eps - delta), t.p_value, t.sd,
        t.accepted, eps_std, delta_std, abs(eps_std - delta_std), tuple(warnings),
    )


def _failed_pair(si, sj, zi, zj, bi, bj, err: str) -> CandidatePair:
    nan = float("nan")
    return CandidatePair(si, sj, tuple(zi), tuple(zj), bi, bj, nan, nan, nan, nan, nan, nan, False, error=err)


def _select(pairs: Sequence[CandidatePair]) -> CandidatePair | None:
    passed = [p for p in pairs if p.passed]
    if not passed:
        return None
    return min(passed, key=lambda p: (p.lam, p.s_i, p.s_j))


def _finish(method, data, w, y, cfg, graph, cands, conds, pairs, warnings) -> EstimateReport:
    common = dict(
        all_pairs=tuple(pairs), candidates=tuple(cands), conditioning=conds, graph=graph, config=cfg,
        treatment=w, outcome=y, method=method, warnings=tuple(dict.fromkeys(warnings)), n=data.n,
        columns=data.names,
    )
    if len(cands) <= 1:
        return EstimateReport(Status.NA, None, NaReason.TOO_FEW_CANDIDATES, None, **common)
    best = _select(pairs)
    if best is None:
        return EstimateReport(Status.NA, None, NaReason.NO_PAIR_PASSED, None, **common)
    return EstimateReport(Status.ESTIMATED, best.beta, None, best, **common)


def _sub_cov(data: Dataset, cols):
    return cov_matrix(data, sorted(set(cols)))


def run_aivgt(data: Dataset, w: str, y: str, cfg: AivgtConfig = AivgtConfig(),
              graph: MixedGraph | None = None) -> EstimateReport:
    """Estimate the effect of ``w`` on ``y`` with a data-driven instrument pair.

    When ``graph`` is given it is used instead of learning a PAG; it must be a
    PAG over a subset of the data columns containing ``w`` and ``y``.
    """
    data = _prepare(data, w, y)
    cov = cov_matrix(data)
    warnings: list[str] = []
    if graph is None:
        graph, learn_warn = _learn(data, w, y, cfg, cov)
        warnings += learn_warn
    else:
        for c in graph.names:
            data.index(c)
    cands = candidate_aivs(graph, w, y)
    conds = {s: conditioning_set(graph, s, w, y) for s in cands}
    if len(cands) <= 1:
        return _finish("aivgt", data, w, y, cfg, graph, cands, conds, [], warnings)

    betas: dict[str, float] = {}
    beta_warn: dict[str, tuple[str, ...]] = {}
    errors: dict[str, str] = {}
    for s in cands:
        try:
            est = tsls(data, w, y, s, conds[s])
            betas[s] = est.beta
            beta_warn[s] = est.warnings
            warnings += est.warnings
        except AivgtError as exc:
            errors[s] = f"TSLS for {s}: {exc}"
            betas[s] = float("nan")

    involved = set(cands) | {w, y} | {v for z in conds.values() for v in z}
    boot_cov = _sub_cov(data, involved)
    sd = _scales(cov)
    pairs = []
    for si, sj in combinations(cands, 2):
        zi, zj = conds[si], conds[sj]
        err = errors.get(si) or errors.get(sj)
        if err is None:
            try:
                pairs.append(_score_pair(cov, boot_cov, w, y, si, sj, zi, zj, betas[si], betas[sj], cfg, sd,
                                         beta_warn[si] + beta_warn[sj]))
                continue
            except AivgtError as exc:
                err = f"tetrad test: {exc}"
        pairs.append(_failed_pair(si, sj, zi, zj, betas[si], betas[sj], err))
    return _finish("aivgt", data, w, y, cfg, graph, cands, conds, pairs, warnings)


def run_shared_conditioning_baseline(data: Dataset, w: str, y: str, cfg: AivgtConfig = AivgtConfig(),
                                     graph: MixedGraph | None = None) -> EstimateReport:
    """Same search, but both instruments of a pair condition on every other covariate.

    Candidates still come from the PAG.  For the pair ``(s_i, s_j)`` the
    conditioning set is all columns except ``w``, ``y``, ``s_i`` and ``s_j``.
    """
    data = _prepare(data, w, y)
    cov = cov_matrix(data)
    warnings: list[str] = []
    if graph is None:
        graph, learn_warn = _learn(data, w, y, cfg, cov)
        warnings += learn_warn
    cands = candidate_aivs(graph, w, y)
    covariates = [c for c in data.names if c not in (w, y)]
    if len(cands) <= 1:
        return _finish("shared-conditioning", data, w, y, cfg, graph, cands, {}, [], warnings)
    sd = _scales(cov)
    pairs = []
    for si, sj in combinations(cands, 2):
        z = tuple(c for c in covariates if c not in (si, sj))
        bi = bj = float("nan")
        try:
            ei = tsls(data, w, y, si, z)
            ej = tsls(data, w, y, sj, z)
            bi, bj = ei.beta, ej.beta
            warnings += ei.warnings + ej.warnings
            pairs.append(_score_pair(cov, cov, w, y, si, sj, z, z, bi, bj, cfg, sd, ei.warnings + ej.warnings))
        except AivgtError as exc:
            pairs.append(_failed_pair(si, sj, z, z, bi, bj, str(exc)))
    return _finish("shared-conditioning", data, w, y, cfg, graph, cands, {}, pairs, warnings)
