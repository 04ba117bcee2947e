"""Covariance machinery, the Fisher z CI test and the tetrad test.

The tetrad difference for instruments ``s_i`` (conditioned on ``z_i``) and
``s_j`` (conditioned on ``z_j``) is::

    tau = cov(s_i, y | z_i) * cov(s_j, w | z_j) - cov(s_i, w | z_i) * cov(s_j, y | z_j)

It vanishes when both are valid instruments for ``w -> y``.  The test
statistic is ``tau / sd(tau)``, referred to a standard normal.  ``sd(tau)``
comes either from a row bootstrap or from Wishart's closed-form variance
of a tetrad computed on the partial covariance matrix of
``(s_i, s_j, w, y)`` given ``z_i | z_j``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .exceptions import (
    DegenerateColumnError,
    DegenerateCorrelationError,
    InputError,
    SingularMatrixError,
)

RCOND_MIN = 1e-12
DEFAULT_BOOT = 500

VARIANCE_MODES = ("bootstrap", "wishart")


@dataclass(frozen=True, eq=False)
class CovMatrix:
    """Sample covariance (divisor ``n - 1``) with labels.

    When built by :func:`cov_matrix` the centred data are kept so that
    bootstrap replicates can be drawn later.
    """

    matrix: np.ndarray
    n: int
    labels: tuple[str, ...]
    data: np.ndarray | None = None
    _index: dict = field(init=False, repr=False)
    _boot: dict = field(init=False, repr=False)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        p = len(self.labels)
        if m.shape != (p, p):
            raise InputError(f"covariance of shape {m.shape} does not match {p} labels")
        if not np.allclose(m, m.T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
            raise InputError("covariance matrix is not symmetric")
        if np.any(np.diag(m) <= 0):
            raise DegenerateColumnError("covariance diagonal must be strictly positive")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "_index", {v: i for i, v in enumerate(self.labels)})
        object.__setattr__(self, "_boot", {})

    @property
    def p(self) -> int:
        return len(self.labels)

    def index(self, label) -> int:
        if isinstance(label, (int, np.integer)):
            if not 0 <= label < self.p:
                raise InputError(f"column index {label} out of range")
            return int(label)
        try:
            return self._index[label]
        except KeyError:
            raise InputError(f"unknown column {label!r}") from None

    def idx(self, labels: Iterable) -> list[int]:
        return [self.index(v) for v in labels]

    def bootstrap(self, n_boot: int = DEFAULT_BOOT, seed: int = 0) -> np.ndarray:
        """``(n_boot, p, p)`` covariance matrices of row resamples (cached)."""
        key = (n_boot, seed)
        if key not in self._boot:
            if self.data is None:
                raise InputError("bootstrap needs a CovMatrix built from data")
            self._boot[key] = _bootstrap_covs(self.data, n_boot, seed)
        return self._boot[key]


def _bootstrap_covs(x: np.ndarray, n_boot: int, seed: int) -> np.ndarray:
    n, p = x.shape
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    counts = np.bincount((idx + n * np.arange(n_boot)[:, None]).ravel(), minlength=n_boot * n)
    counts = counts.reshape(n_boot, n).astype(float)
    out = np.empty((n_boot, p, p))
    sums = counts @ x
    for b in range(n_boot):
        out[b] = x.T @ (x * counts[b][:, None])
    means = sums / n
    out -= n * means[:, :, None] * means[:, None, :]
    out /= n - 1
    return out


def cov_matrix(data: Dataset, cols: Sequence[str] | None = None) -> CovMatrix:
    cols = tuple(data.names if cols is None else cols)
    x = data.columns(cols)
    if x.shape[0] < 2:
        raise InputError("need at least two rows")
    const = [c for c, col in zip(cols, x.T) if np.ptp(col) == 0]
    if const:
        raise DegenerateColumnError(f"constant columns: {const}")
    xc = x - x.mean(axis=0)
    m = xc.T @ xc / (x.shape[0] - 1)
    m = (m + m.T) / 2
    return CovMatrix(m, x.shape[0], cols, xc)


def _check_rcond(szz: np.ndarray) -> None:
    if szz.shape[0] == 0:
        return
    s = np.linalg.svd(szz, compute_uv=False)
    if s[-1] <= RCOND_MIN * s[0]:
        raise SingularMatrixError("conditioning covariance is singular")


def partial_block(sigma: np.ndarray, rows: Sequence[int], z: Sequence[int], check=True) -> np.ndarray:
    """``S_rr - S_rz S_zz^-1 S_zr``; works on a stack of matrices too."""
    rows = list(rows)
    z = list(z)
    srr = sigma[..., rows, :][..., :, rows]
    if not z:
        return srr
    szz = sigma[..., z, :][..., :, z]
    szr = sigma[..., z, :][..., :, rows]
    if check:
        if szz.ndim == 2:
            _check_rcond(szz)
    try:
        sol = np.linalg.solve(szz, szr)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(str(exc)) from exc
    return srr - np.swapaxes(szr, -1, -2) @ sol


def _pair_args(c: CovMatrix, a, b, z):
    ia, ib = c.index(a), c.index(b)
    iz = c.idx(z)
    if ia == ib:
        raise InputError("a and b must differ")
    if ia in iz or ib in iz:
        raise InputError("a and b may not appear in the conditioning set")
    return ia, ib, iz


def partial_cov(c: CovMatrix, a, b, z: Iterable = ()) -> float:
    """Partial covariance of ``a`` and ``b`` given ``z``."""
    ia, ib, iz = _pair_args(c, a, b, z)
    if len(iz) > c.p - 2:
        raise InputError("conditioning set too large")
    return float(partial_block(c.matrix, [ia, ib], iz)[0, 1])


@dataclass(frozen=True)
class CiResult:
    statistic: float
    p_value: float
    df_used: int


def fisher_z_test(c: CovMatrix, a, b, z: Iterable = ()) -> CiResult:
    """Fisher z test of zero partial correlation, two sided."""
    ia, ib, iz = _pair_args(c, a, b, z)
    df = c.n - len(iz) - 3
    if df < 1:
        raise InputError(f"too few samples: n - |z| - 3 = {df}")
    blk = partial_block(c.matrix, [ia, ib], iz)
    denom = np.sqrt(blk[0, 0] * blk[1, 1])
    if not denom > 0:
        raise DegenerateCorrelationError("zero partial variance")
    r = blk[0, 1] / denom
    if abs(r) >= 1 - 1e-12:
        raise DegenerateCorrelationError(f"partial correlation {r:.15f} is degenerate")
    stat = float(np.sqrt(df) * np.arctanh(r))
    p = float(min(1.0, 2 * norm.sf(abs(stat))))
    return CiResult(stat, p, df)


def _batch_well_conditioned(szz: np.ndarray) -> np.ndarray:
    """Same verdict as ``_check_rcond`` for a stack of covariance blocks.

    A Cholesky diagonal ratio screens cheaply; anything that fails the
    factorization or looks ill conditioned gets the exact eigenvalue check.
    """
    k = szz.shape[0]
    suspect = np.ones(k, dtype=bool)
    try:
        d = np.diagonal(np.linalg.cholesky(szz), axis1=1, axis2=2)
        suspect = (d.min(axis=1) / d.max(axis=1)) ** 2 < 1e-4
    except np.linalg.LinAlgError:
        pass
    ok = ~suspect
    if suspect.any():
        ev = np.abs(np.linalg.eigvalsh(szz[suspect]))
        ok[suspect] = ev.min(axis=1) > RCOND_MIN * ev.max(axis=1)
    return ok


def fisher_z_pvalues(c: CovMatrix, a: int, b: int, zs: Sequence[Sequence[int]]) -> np.ndarray:
    """Fisher z p-values for many conditioning sets of one common size.

    Column indices only. Entries whose conditioning block is singular or whose
    partial correlation is degenerate come back as NaN; ``fisher_z_test`` on
    that set raises the matching error.
    """
    z = np.asarray(zs, dtype=int).reshape(len(zs), -1)
    k, m = z.shape
    df = c.n - m - 3
    if df < 1:
        raise InputError(f"too few samples: n - |z| - 3 = {df}")
    sig = c.matrix
    if m == 0:
        blk = np.broadcast_to(sig[np.ix_([a, b], [a, b])], (k, 2, 2))
        valid = np.ones(k, dtype=bool)
    else:
        szz = sig[z[:, :, None], z[:, None, :]]
        szr = sig[z][:, :, [a, b]]
        valid = _batch_well_conditioned(szz)
        szz[~valid] = np.eye(m)
        sol = np.linalg.solve(szz, szr)
        blk = sig[np.ix_([a, b], [a, b])] - np.swapaxes(szr, 1, 2) @ sol
    denom = np.sqrt(np.clip(blk[:, 0, 0] * blk[:, 1, 1], 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = blk[:, 0, 1] / denom
        valid &= (denom > 0) & (np.abs(r) < 1 - 1e-12)
        stat = np.sqrt(df) * np.arctanh(np.where(valid, r, 0.0))
    p = np.minimum(1.0, 2 * norm.sf(np.abs(stat)))
    p[~valid] = np.nan
    return p


@dataclass(frozen=True)
class TetradResult:
    tau: float
    p_value: float
    epsilon: float
    sd: float
    accepted: bool
    variance: str


def _side(sigma, si, w, y, zi):
    """Partial covariances (s,w) and (s,y) given z, stacked if sigma is."""
    blk = partial_block(sigma, [si, w, y], zi, check=sigma.ndim == 2)
    return blk[..., 0, 1], blk[..., 0, 2]


def tetrad_tau(c: CovMatrix, s_i, s_j, w, y, z_i=(), z_j=()) -> float:
    si, sj, iw, iy = c.idx([s_i, s_j, w, y])
    siw, siy = _side(c.matrix, si, iw, iy, c.idx(z_i))
    sjw, sjy = _side(c.matrix, sj, iw, iy, c.idx(z_j))
    return float(siy * sjw - siw * sjy)


def wishart_sd(c: CovMatrix, s_i, s_j, w, y, z_i=(), z_j=()) -> float:
    """Wishart (1928) standard deviation of a sample tetrad difference.

    Uses the partial covariance of ``(s_i, s_j, w, y)`` given the union of
    both conditioning sets and an effective sample size ``n - |union|``.
    """
    si, sj, iw, iy = c.idx([s_i, s_j, w, y])
    a, b = sorted((si, sj))
    union = sorted((set(c.idx(z_i)) | set(c.idx(z_j))) - {a, b})
    blk = partial_block(c.matrix, [a, b, iw, iy], union)
    n_eff = c.n - len(union)
    if n_eff <= 2:
        raise InputError("too few samples for the Wishart variance")
    d_s = np.linalg.det(blk[:2, :2])
    d_wy = np.linalg.det(blk[2:, 2:])
    d_all = np.linalg.det(blk)
    var = (d_s * d_wy * (n_eff + 1) / (n_eff - 1) - d_all) / (n_eff - 2)
    return float(np.sqrt(var)) if var > 0 else 0.0


def bootstrap_sd(c: CovMatrix, s_i, s_j, w, y, z_i=(), z_j=(), n_boot=DEFAULT_BOOT, seed=0) -> float:
    boot = c.bootstrap(n_boot, seed)
    si, sj, iw, iy = c.idx([s_i, s_j, w, y])
    siw, siy = _side(boot, si, iw, iy, c.idx(z_i))
    sjw, sjy = _side(boot, sj, iw, iy, c.idx(z_j))
    taus = siy * sjw - siw * sjy
    return float(np.std(taus, ddof=1))


def tetrad_test(
    c: CovMatrix,
    s_i,
    s_j,
    w,
    y,
    z_i: Iterable = (),
    z_j: Iterable = (),
    alpha: float = 0.05,
    variance: str = "bootstrap",
    n_boot: int = DEFAULT_BOOT,
    seed: int = 0,
) -> TetradResult:
    """Test the vanishing tetrad with per-instrument conditioning sets.

    The pair is accepted (tetrad consistent with zero) when the p-value
    exceeds ``alpha``.
    """
    z_i, z_j = list(z_i), list(z_j)
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    if variance not in VARIANCE_MODES:
        raise InputError(f"variance must be one of {VARIANCE_MODES}")
    si, sj, iw, iy = c.idx([s_i, s_j, w, y])
    if si == sj:
        raise InputError("the two instruments must differ")
    if {iw, iy} & {si, sj} or iw == iy:
        raise InputError("w and y must be distinct from each other and the instruments")
    for s, z in ((si, z_i), (sj, z_j)):
        if {s, iw, iy} & set(c.idx(z)):
            raise InputError("a conditioning set may not contain its instrument, w or y")
    tau = tetrad_tau(c, s_i, s_j, w, y, z_i, z_j)
    if variance == "wishart":
        sd = wishart_sd(c, s_i, s_j, w, y, z_i, z_j)
    else:
        sd = bootstrap_sd(c, s_i, s_j, w, y, z_i, z_j, n_boot, seed)
    if sd > 0:
        p = float(min(1.0, 2 * norm.sf(abs(tau) / sd)))
    else:
        p = 1.0 if tau == 0 else 0.0
    return TetradResult(tau, p, abs(tau), sd, p > alpha, variance)
