import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from aivgt.data import Dataset
from aivgt.exceptions import DegenerateColumnError, DegenerateCorrelationError, InputError, SingularMatrixError
from aivgt.simdata import SimConfig, generate
from aivgt.stats import (
    CovMatrix,
    cov_matrix,
    fisher_z_pvalues,
    fisher_z_test,
    partial_cov,
    tetrad_tau,
    tetrad_test,
)


def linear_sem_cov(names, coefs, noise_var):
    """Population covariance of ``x = B x + e``; ``coefs[(parent, child)] = b``."""
    p = len(names)
    idx = {v: i for i, v in enumerate(names)}
    b = np.zeros((p, p))
    for (u, v), c in coefs.items():
        b[idx[v], idx[u]] = c
    inv = np.linalg.inv(np.eye(p) - b)
    return inv @ np.diag([noise_var[v] for v in names]) @ inv.T


def scenario_a_population():
    """Linear-Gaussian stand-in for scenario (a): S1, S2 -> W -> Y, U1 -> W, Y."""
    names = ["S1", "S2", "U1", "W", "Y"]
    coefs = {("S1", "W"): 0.7, ("S2", "W"): 0.4, ("U1", "W"): 0.9, ("U1", "Y"): 3.0, ("W", "Y"): 2.0}
    sigma = linear_sem_cov(names, coefs, dict.fromkeys(names, 1.0))
    keep = [0, 1, 3, 4]
    return CovMatrix(sigma[np.ix_(keep, keep)], 10**6, ("S1", "S2", "W", "Y"))


def random_data(seed, n=200, p=5):
    rng = np.random.default_rng(seed)
    mix = rng.normal(size=(p, p))
    x = rng.normal(size=(n, p)) @ mix
    return Dataset(tuple(f"V{i}" for i in range(p)), x)


# -- covariance ------------------------------------------------------------------

def test_identical_columns_and_negation():
    x = np.random.default_rng(0).normal(size=50)
    c = cov_matrix(Dataset(("a", "b", "c"), np.column_stack([x, x, -x])))
    m = c.matrix
    assert m[0, 1] == pytest.approx(m[0, 0], rel=1e-12)
    assert m[0, 2] == pytest.approx(-m[0, 0], rel=1e-12)


def test_unit_variance_column():
    x = np.random.default_rng(1).standard_normal(10**5)
    c = cov_matrix(Dataset(("a",), x[:, None]))
    assert abs(c.matrix[0, 0] - 1) < 0.02


def test_divisor_is_n_minus_one():
    x = np.array([[1.0], [2.0], [4.0]])
    assert cov_matrix(Dataset(("a",), x)).matrix[0, 0] == pytest.approx(np.var(x, ddof=1))


def test_constant_column_rejected():
    with pytest.raises(DegenerateColumnError):
        cov_matrix(Dataset(("a", "b"), np.array([[1.0, 2.0], [1.0, 3.0], [1.0, 5.0]])))


def test_covmatrix_validation():
    with pytest.raises(InputError):
        CovMatrix(np.array([[1.0, 0.2], [0.3, 1.0]]), 10, ("a", "b"))
    with pytest.raises(DegenerateColumnError):
        CovMatrix(np.array([[0.0, 0.0], [0.0, 1.0]]), 10, ("a", "b"))


# -- partial covariance ------------------------------------------------------------

def test_partial_cov_empty_set_is_plain_cov():
    c = cov_matrix(random_data(2))
    assert partial_cov(c, "V0", "V1") == c.matrix[0, 1]


def test_partial_cov_chain_vanishes():
    sigma = linear_sem_cov(["X", "Z", "Y"], {("X", "Z"): 1.0, ("Z", "Y"): 1.0}, {"X": 1, "Z": 1, "Y": 1})
    c = CovMatrix(sigma, 100, ("X", "Z", "Y"))
    assert abs(partial_cov(c, "X", "Y", ["Z"])) < 1e-12


def test_partial_cov_hand_example():
    c = CovMatrix(np.array([[1, .5, .5], [.5, 1, .5], [.5, .5, 1]]), 100, ("1", "2", "3"))
    assert partial_cov(c, "1", "2", ["3"]) == pytest.approx(0.25, abs=1e-15)


def test_singular_conditioning_set():
    x = np.random.default_rng(3).normal(size=(100, 3))
    x = np.column_stack([x, x[:, 2] * 2.0])
    c = cov_matrix(Dataset(("a", "b", "c", "d"), x))
    with pytest.raises(SingularMatrixError):
        partial_cov(c, "a", "b", ["c", "d"])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), size=st.integers(0, 4))
def test_batched_fisher_z_matches_scalar(seed, size):
    from itertools import combinations

    x = np.random.default_rng(seed).normal(size=(60, 7))
    x[:, 1] += x[:, 0]
    c = cov_matrix(Dataset(tuple("abcdefg"), x))
    zs = list(combinations(range(2, 7), size))
    batch = fisher_z_pvalues(c, 0, 1, zs)
    single = [fisher_z_test(c, 0, 1, z).p_value for z in zs]
    np.testing.assert_allclose(batch, single, rtol=1e-9, atol=1e-15)


def test_batched_fisher_z_flags_singular_sets():
    x = np.random.default_rng(3).normal(size=(100, 4))
    x = np.column_stack([x, x[:, 2] * 2.0])
    c = cov_matrix(Dataset(tuple("abcde"), x))
    p = fisher_z_pvalues(c, 0, 1, [(2, 3), (2, 4), (3, 4)])
    assert np.isnan(p[1]) and not np.isnan(p[0]) and not np.isnan(p[2])


def test_partial_cov_argument_errors():
    c = cov_matrix(random_data(4))
    with pytest.raises(InputError):
        partial_cov(c, "V0", "V0")
    with pytest.raises(InputError):
        partial_cov(c, "V0", "V1", ["V0"])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 3))
def test_schur_matches_residual_regression(seed, k):
    data = random_data(seed, n=100, p=6)
    c = cov_matrix(data)
    z = [f"V{i}" for i in range(2, 2 + k)]
    x = data.values - data.values.mean(axis=0)
    zc = x[:, 2:2 + k]
    ra, rb = x[:, 0], x[:, 1]
    if k:
        ra = ra - zc @ np.linalg.lstsq(zc, ra, rcond=None)[0]
        rb = rb - zc @ np.linalg.lstsq(zc, rb, rcond=None)[0]
    ref = ra @ rb / (data.n - 1)
    assert partial_cov(c, "V0", "V1", z) == pytest.approx(ref, abs=1e-8)


# -- Fisher z -------------------------------------------------------------------

def test_fisher_z_zero_correlation():
    c = CovMatrix(np.eye(3), 100, ("a", "b", "c"))
    r = fisher_z_test(c, "a", "b", ["c"])
    assert r.statistic == 0 and r.p_value == 1 and r.df_used == 96


def test_fisher_z_statistic_formula():
    c = CovMatrix(np.array([[1, .3], [.3, 1]]), 50, ("a", "b"))
    r = fisher_z_test(c, "a", "b")
    assert r.statistic == pytest.approx(0.5 * np.sqrt(47) * np.log(1.3 / 0.7), rel=1e-12)
    assert r.p_value == pytest.approx(2 * sps.norm.sf(r.statistic), rel=1e-12)


def test_fisher_z_perfect_copy_errors():
    x = np.random.default_rng(5).normal(size=30)
    c = cov_matrix(Dataset(("a", "b"), np.column_stack([x, x])))
    with pytest.raises(DegenerateCorrelationError):
        fisher_z_test(c, "a", "b")


def test_fisher_z_too_few_samples():
    c = CovMatrix(np.eye(4), 5, ("a", "b", "c", "d"))
    with pytest.raises(InputError):
        fisher_z_test(c, "a", "b", ["c", "d"])


def test_fisher_z_null_p_values_uniform():
    rng = np.random.default_rng(6)
    ps = []
    for _ in range(300):
        x = rng.standard_normal((10**4, 2))
        ps.append(fisher_z_test(cov_matrix(Dataset(("a", "b"), x)), "a", "b").p_value)
    assert sps.kstest(ps, "uniform").statistic < 0.1


# -- tetrad test ---------------------------------------------------------------------

def test_population_tetrad_vanishes_for_valid_pair():
    c = scenario_a_population()
    assert abs(tetrad_tau(c, "S1", "S2", "W", "Y")) < 1e-12


def test_population_tetrad_nonzero_for_invalid_pair():
    names = ["S1", "S2", "U1", "W", "Y"]
    coefs = {("S1", "W"): 0.7, ("S2", "W"): 0.4, ("S2", "Y"): 1.0, ("U1", "W"): 0.9, ("U1", "Y"): 3.0,
             ("W", "Y"): 2.0}
    sigma = linear_sem_cov(names, coefs, dict.fromkeys(names, 1.0))
    keep = [0, 1, 3, 4]
    c = CovMatrix(sigma[np.ix_(keep, keep)], 100, ("S1", "S2", "W", "Y"))
    assert abs(tetrad_tau(c, "S1", "S2", "W", "Y")) > 0.1


@pytest.mark.parametrize("variance", ["bootstrap", "wishart"])
@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_tetrad_antisymmetry(variance, seed):
    data = random_data(seed, n=150, p=7)
    c = cov_matrix(data)
    zi, zj = ["V4", "V5"], ["V6"]
    a = tetrad_test(c, "V0", "V1", "V2", "V3", zi, zj, variance=variance, n_boot=50)
    b = tetrad_test(c, "V1", "V0", "V2", "V3", zj, zi, variance=variance, n_boot=50)
    assert b.tau == -a.tau
    assert b.p_value == a.p_value
    assert a.epsilon == abs(a.tau)
    assert 0 <= a.p_value <= 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(0, 2))
def test_shared_conditioning_reduces_to_plain_tetrad(seed, k):
    c = cov_matrix(random_data(seed, n=120, p=6))
    z = [f"V{i}" for i in range(4, 4 + k)]
    direct = (partial_cov(c, "V0", "V3", z) * partial_cov(c, "V1", "V2", z)
              - partial_cov(c, "V0", "V2", z) * partial_cov(c, "V1", "V3", z))
    t = tetrad_test(c, "V0", "V1", "V2", "V3", z, z, variance="wishart")
    assert t.tau == direct


def test_valid_pair_accepted_on_scenario_a():
    accepted = 0
    for seed in range(30):
        c = cov_matrix(generate("a", SimConfig(seed=seed, noise_block=False)))
        accepted += tetrad_test(c, "S1", "S2", "W", "Y").accepted
    assert accepted >= 27


def test_tetrad_argument_errors():
    c = cov_matrix(random_data(7, p=6))
    with pytest.raises(InputError):
        tetrad_test(c, "V0", "V0", "V2", "V3")
    with pytest.raises(InputError):
        tetrad_test(c, "V0", "V1", "V0", "V3")
    with pytest.raises(InputError):
        tetrad_test(c, "V0", "V1", "V2", "V3", ["V2"])
    with pytest.raises(InputError):
        tetrad_test(c, "V0", "V1", "V2", "V3", alpha=1.5)
    with pytest.raises(InputError):
        tetrad_test(c, "V0", "V1", "V2", "V3", variance="exact")


def test_bootstrap_is_seeded_and_cached():
    c = cov_matrix(random_data(8))
    a = c.bootstrap(20, seed=3)
    assert c.bootstrap(20, seed=3) is a
    d = cov_matrix(random_data(8))
    np.testing.assert_array_equal(d.bootstrap(20, seed=3), a)
    # each replicate is a plain covariance of resampled rows
    rng = np.random.default_rng(3)
    idx = rng.integers(0, c.n, size=(20, c.n))
    ref = np.cov(random_data(8).values[idx[0]], rowvar=False)
    np.testing.assert_allclose(a[0], ref, atol=1e-10)
