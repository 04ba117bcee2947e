"""The five synthetic benchmark scenarios (a)-(e).

Each scenario has two valid instruments ``S1`` and ``S2``, a binary
treatment ``W`` confounded with the outcome ``Y`` through a latent
``U1``, and a true effect of ``W`` on ``Y`` equal to 2.  Scenarios (c)-(e)
add a collider ``X1`` between ``S1`` and a second latent ``U2`` that also
drives ``Y``.  Twenty extra correlated noise columns unrelated to the
scenario variables are appended unless disabled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset
from .exceptions import InputError
from .graph import Dag

TRUE_BETA = 2.0
N_NOISE = 20


class Scenario(str, enum.Enum):
    A = "a"
    B = "b"
    C = "c"
    D = "d"
    E = "e"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, Scenario):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise InputError(f"unknown scenario {value!r}; choose from a-e") from None


# structural edges per scenario, cumulative additions
_BASE = [("S1", "W"), ("S2", "W"), ("U1", "W"), ("U1", "Y"), ("W", "Y")]
_COLLIDER = [("S1", "X1"), ("X2", "X1"), ("U2", "X1"), ("U2", "Y"), ("X2", "Y")]
_EDGES = {
    Scenario.A: _BASE,
    Scenario.B: _BASE + [("S2", "X1"), ("X1", "Y")],
    Scenario.C: _BASE + _COLLIDER,
    Scenario.D: _BASE + _COLLIDER + [("S2", "X3"), ("X3", "Y")],
    Scenario.E: _BASE + _COLLIDER + [("S2", "X3"), ("X3", "Y"), ("S2", "X4"), ("X4", "Y")],
}
_OBSERVED = {
    Scenario.A: ("S1", "S2", "W", "Y"),
    Scenario.B: ("S1", "S2", "X1", "W", "Y"),
    Scenario.C: ("S1", "S2", "X1", "X2", "W", "Y"),
    Scenario.D: ("S1", "S2", "X1", "X2", "X3", "W", "Y"),
    Scenario.E: ("S1", "S2", "X1", "X2", "X3", "X4", "W", "Y"),
}


def noise_names(k: int = N_NOISE) -> tuple[str, ...]:
    return tuple(f"N{i}" for i in range(1, k + 1))


@dataclass(frozen=True)
class SimConfig:
    """Sampling options.

    ``noise_var`` selects how ``N(0, 0.5)`` error terms are read: as a
    variance of 0.5 (default) or as a standard deviation of 0.5.
    ``noise_structure`` is ``"ar1"`` (Toeplitz correlation ``rho**|i-j|``,
    a Gaussian Markov chain) or ``"exchangeable"`` (all pairwise
    correlations ``rho``, a one-factor model).
    """

    n: int = 10_000
    seed: int = 0
    noise_block: bool = True
    noise_var: str = "variance"
    noise_structure: str = "ar1"
    noise_rho: float | None = None

    def __post_init__(self):
        if self.n < 100:
            raise InputError("n must be at least 100")
        if self.noise_var not in ("variance", "sd"):
            raise InputError("noise_var must be 'variance' or 'sd'")
        if self.noise_structure not in ("ar1", "exchangeable"):
            raise InputError("noise_structure must be 'ar1' or 'exchangeable'")

    @property
    def rho(self) -> float:
        if self.noise_rho is not None:
            return self.noise_rho
        return 0.5 if self.noise_structure == "ar1" else 0.3


def observed_columns(sc, noise_block: bool = True) -> tuple[str, ...]:
    sc = Scenario.parse(sc)
    return _OBSERVED[sc] + (noise_names() if noise_block else ())


def true_beta(sc=None) -> float:
    return TRUE_BETA


def true_dag(sc, noise_block: bool = True, noise_structure: str = "ar1") -> Dag:
    """Ground-truth DAG over observed and latent variables."""
    sc = Scenario.parse(sc)
    edges = list(_EDGES[sc])
    latent = ["U1"] + (["U2"] if any("U2" in e for e in edges) else [])
    names = list(_OBSERVED[sc]) + latent
    if noise_block:
        nn = noise_names()
        names += nn
        if noise_structure == "ar1":
            edges += list(zip(nn[:-1], nn[1:]))
        else:
            names.append("F")
            latent.append("F")
            edges += [("F", v) for v in nn]
    return Dag(names, edges, latent)


def _noise_block(rng, n, cfg: SimConfig) -> np.ndarray:
    rho = cfg.rho
    out = np.empty((n, N_NOISE))
    if cfg.noise_structure == "ar1":
        out[:, 0] = rng.standard_normal(n)
        scale = np.sqrt(1 - rho**2)
        for k in range(1, N_NOISE):
            out[:, k] = rho * out[:, k - 1] + scale * rng.standard_normal(n)
    else:
        factor = rng.standard_normal(n)
        out[:] = np.sqrt(rho) * factor[:, None] + np.sqrt(1 - rho) * rng.standard_normal((n, N_NOISE))
    return out


def generate(sc, cfg: SimConfig = SimConfig()) -> Dataset:
    """Draw one dataset; latent columns are not emitted."""
    sc = Scenario.parse(sc)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n
    err_sd = np.sqrt(0.5) if cfg.noise_var == "variance" else 0.5

    u1 = rng.binomial(1, 0.5, n).astype(float)
    s1 = rng.standard_normal(n)
    s2 = rng.standard_normal(n)
    cols = {"S1": s1, "S2": s2}
    y_extra = np.zeros(n)
    if sc is Scenario.B:
        x1 = 0.8 * s2 + err_sd * rng.standard_normal(n)
        cols["X1"] = x1
        y_extra += 3 * x1
    elif sc in (Scenario.C, Scenario.D, Scenario.E):
        u2 = rng.standard_normal(n)
        x2 = rng.standard_normal(n)
        u2_coef = 1.0 if sc is Scenario.C else 1.5
        cols["X1"] = 0.3 + s1 + x2 + u2_coef * u2 + err_sd * rng.standard_normal(n)
        cols["X2"] = x2
        y_extra += 2 * u2 + 2 * x2
        if sc in (Scenario.D, Scenario.E):
            x3 = 0.8 * s2 + err_sd * rng.standard_normal(n)
            cols["X3"] = x3
            y_extra += 2 * x3
        if sc is Scenario.E:
            x4 = 0.8 * s2 + err_sd * rng.standard_normal(n)
            cols["X4"] = x4
            y_extra += 2 * x4
    prob = expit(-(1 - 3 * u1 - 3 * s1 - 3 * s2))
    w = rng.binomial(1, prob).astype(float)
    y = 2 + TRUE_BETA * w + 3 * u1 + y_extra + rng.standard_normal(n)
    cols["W"] = w
    cols["Y"] = y

    names = list(_OBSERVED[sc])
    mat = np.column_stack([cols[c] for c in names])
    if cfg.noise_block:
        mat = np.column_stack([mat, _noise_block(rng, n, cfg)])
        names += noise_names()
    return Dataset(tuple(names), mat, provenance=f"scenario {sc.value}, n={n}, seed={cfg.seed}")
