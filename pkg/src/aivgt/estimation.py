"""Effect estimators: TSLS with one instrument and covariates, the
partial-covariance ratio, plain least squares, and TSLS with many
instruments (the naive baseline)."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .data import Dataset
from .exceptions import InputError, SingularMatrixError, WeakInstrumentError
from .stats import CovMatrix, partial_cov

RANK_TOL = 1e-12
RATIO_TOL = 1e-10


class Method(str, enum.Enum):
    TSLS = "tsls"
    RATIO = "ratio"
    LSR = "lsr"


@dataclass(frozen=True)
class EffectEstimate:
    beta: float
    method: Method
    instruments: tuple[str, ...] = ()
    conditioning: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()

    @property
    def iv(self) -> str | None:
        return self.instruments[0] if len(self.instruments) == 1 else None


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least squares via pivoted QR; returns (coef, residuals).

    Raises when the design is rank deficient at relative tolerance
    ``RANK_TOL``.
    """
    q, r, piv = scipy.linalg.qr(x, mode="economic", pivoting=True)
    d = np.abs(np.diag(r))
    if d.size == 0 or d[-1] <= RANK_TOL * d[0]:
        raise SingularMatrixError("design matrix is rank deficient")
    coef = np.empty(x.shape[1])
    coef[piv] = scipy.linalg.solve_triangular(r, q.T @ y)
    return coef, y - x @ coef


def _design(data: Dataset, cols: Sequence[str]) -> np.ndarray:
    return np.column_stack([np.ones(data.n)] + [data.column(c) for c in cols])


def _check_cols(data: Dataset, *groups):
    seen = []
    for g in groups:
        for c in g:
            data.index(c)
            seen.append(c)
    if len(seen) != len(set(seen)):
        raise InputError(f"columns overlap: {seen}")


def tsls(data: Dataset, w: str, y: str, s: str, z: Sequence[str] = ()) -> EffectEstimate:
    """Two-stage least squares of ``y`` on ``w`` instrumented by ``s`` given ``z``.

    Stage one regresses ``w`` on ``[1, s, z]``; stage two regresses ``y`` on
    ``[1, w_hat, z]``.  A first-stage ``|t| < 1`` for ``s`` attaches a
    weak-instrument warning.
    """
    z = list(z)
    _check_cols(data, [w], [y], [s], z)
    if data.n <= len(z) + 3:
        raise InputError("too few rows for the number of regressors")
    x1 = _design(data, [s] + z)
    wv = data.column(w)
    coef1, res1 = _ols(x1, wv)
    warnings = []
    dof = data.n - x1.shape[1]
    sigma2 = res1 @ res1 / dof
    # standard error of the instrument coefficient from (X'X)^-1
    xtx_inv = np.linalg.pinv(x1.T @ x1)
    se = np.sqrt(sigma2 * xtx_inv[1, 1])
    t = coef1[1] / se if se > 0 else np.inf
    if abs(t) < 1:
        warnings.append(f"weak instrument {s}: first-stage t = {t:.3f}")
    w_hat = x1 @ coef1
    x2 = np.column_stack([np.ones(data.n), w_hat] + [data.column(c) for c in z])
    coef2, _ = _ols(x2, data.column(y))
    beta = float(coef2[1])
    if not np.isfinite(beta):
        raise SingularMatrixError("non-finite TSLS estimate")
    return EffectEstimate(beta, Method.TSLS, (s,), tuple(z), tuple(warnings))


def iv_ratio(c: CovMatrix, w, y, s, z=()) -> EffectEstimate:
    """``cov(s, y | z) / cov(s, w | z)``."""
    z = list(z)
    den = partial_cov(c, s, w, z)
    if abs(den) <= RATIO_TOL:
        raise WeakInstrumentError(f"cov({s}, {w} | z) = {den:.3e} is numerically zero")
    num = partial_cov(c, s, y, z)
    return EffectEstimate(float(num / den), Method.RATIO, (str(s),), tuple(map(str, z)))


def lsr(data: Dataset, w: str, y: str, x: Sequence[str] = ()) -> EffectEstimate:
    """OLS coefficient of ``w`` in the regression of ``y`` on ``[1, w, x]``."""
    x = list(x)
    _check_cols(data, [w], [y], x)
    if data.n <= len(x) + 2:
        raise InputError("too few rows for the number of regressors")
    coef, _ = _ols(_design(data, [w] + x), data.column(y))
    return EffectEstimate(float(coef[1]), Method.LSR, (), tuple(x))


def naive_tsls(data: Dataset, w: str, y: str, instruments: Sequence[str]) -> EffectEstimate:
    """TSLS treating every column in ``instruments`` as a standard instrument."""
    instruments = list(instruments)
    if not instruments:
        raise InputError("need at least one instrument")
    _check_cols(data, [w], [y], instruments)
    x1 = _design(data, instruments)
    coef1, _ = _ols(x1, data.column(w))
    w_hat = x1 @ coef1
    coef2, _ = _ols(np.column_stack([np.ones(data.n), w_hat]), data.column(y))
    return EffectEstimate(float(coef2[1]), Method.TSLS, tuple(instruments), ())
