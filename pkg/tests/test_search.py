import json

import numpy as np
import pytest

from aivgt.data import Dataset
from aivgt.discovery import OracleBackend, learn_pag
from aivgt.exceptions import InputError
from aivgt.graph import ARROW, CIRCLE, GraphKind, MixedGraph, ancestors, dag_to_mag
from aivgt.search import (
    AivgtConfig,
    NaReason,
    Status,
    candidate_aivs,
    conditioning_set,
    run_aivgt,
    run_shared_conditioning_baseline,
)
from aivgt.simdata import SimConfig, generate, true_dag

CFG = AivgtConfig(n_boot=200)


def oracle_pag(sc, noise_block=True):
    return learn_pag(OracleBackend(true_dag(sc, noise_block))).graph


def check_report(rep, alpha=CFG.alpha):
    for p in rep.all_pairs:
        assert p.s_i < p.s_j
        if p.error is None:
            assert p.delta == abs(p.beta_i - p.beta_j)
            assert p.lam == abs(p.epsilon - p.delta)
            assert 0 <= p.lam <= p.epsilon + p.delta
            assert p.epsilon == abs(p.tau)
        if p.passed:
            assert p.p_value > alpha and p.error is None
    if rep.estimated:
        assert rep.beta == (rep.chosen.beta_i + rep.chosen.beta_j) / 2
        assert rep.chosen in rep.all_pairs
    if rep.reason is NaReason.TOO_FEW_CANDIDATES:
        assert len(rep.candidates) <= 1
    if rep.reason is NaReason.NO_PAIR_PASSED:
        assert len(rep.candidates) >= 2 and not any(p.passed for p in rep.all_pairs)


# -- graph queries ---------------------------------------------------------------

def test_candidates_scenario_a():
    assert candidate_aivs(oracle_pag("a"), "W", "Y") == ("S1", "S2")


def test_candidates_only_each_other():
    g = MixedGraph.from_edges(["W", "Y", "Q"], [("W", CIRCLE, CIRCLE, "Y")], GraphKind.PAG)
    assert candidate_aivs(g, "W", "Y") == ()


def test_candidates_scenario_e_are_mag_neighbours():
    dag = true_dag("e")
    mag = dag_to_mag(dag)
    expected = (set(mag.names) & ({p for e in mag.adjacency_pairs() if {"W", "Y"} & e for p in e})) - {"W", "Y"}
    got = candidate_aivs(oracle_pag("e"), "W", "Y")
    assert set(got) == expected
    assert got == ("S1", "S2", "X1", "X2", "X3", "X4")


def test_conditioning_set_scenario_a():
    pag = oracle_pag("a")
    assert conditioning_set(pag, "S1", "W", "Y") == ("S2",)
    dag = true_dag("a")
    closure = set(ancestors(dag, ["S1", "Y"])) & set(dag.observed)
    assert closure - {"S1", "W", "Y"} == {"S2"}


def test_conditioning_set_scenario_d():
    # The oracle PAG leaves X1 o-> Y: a MAG with X1 -> Y is Markov equivalent,
    # so X1 is a possible ancestor of Y and enters the set.  The ancestral
    # closure in the true DAG omits it.
    pag = oracle_pag("d")
    assert pag.mark("X1", "Y") == ARROW and pag.mark("Y", "X1") == CIRCLE
    assert conditioning_set(pag, "S1", "W", "Y") == ("S2", "X1", "X2", "X3")
    dag = true_dag("d")
    closure = set(ancestors(dag, ["S1", "Y"])) & set(dag.observed)
    assert closure - {"S1", "W", "Y"} == {"S2", "X2", "X3"}


def test_conditioning_set_isolated():
    g = MixedGraph.from_edges(["S", "W", "Y", "Q"], [("S", ARROW, ARROW, "W"), ("Q", ARROW, ARROW, "Y")],
                              GraphKind.PAG)
    assert conditioning_set(g, "S", "W", "Y") == ()


def test_graph_queries_need_pag():
    mag = dag_to_mag(true_dag("a"))
    with pytest.raises(InputError):
        candidate_aivs(mag, "W", "Y")


# -- search ----------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(3))
def test_scenario_a_recovers_pair(seed):
    rep = run_aivgt(generate("a", SimConfig(seed=seed)), "W", "Y", CFG)
    check_report(rep)
    assert rep.status is Status.ESTIMATED
    assert (rep.chosen.s_i, rep.chosen.s_j) == ("S1", "S2")
    assert abs(rep.beta - 2) / 2 < 0.1


def test_too_few_candidates():
    rng = np.random.default_rng(0)
    n = 500
    s = rng.normal(size=n)
    w = s + rng.normal(size=n)
    y = 2 * w + rng.normal(size=n)
    rep = run_aivgt(Dataset(("S", "W", "Y"), np.column_stack([s, w, y])), "W", "Y", CFG)
    check_report(rep)
    assert rep.status is Status.NA and rep.reason is NaReason.TOO_FEW_CANDIDATES
    assert rep.candidates == ("S",)


def test_two_column_dataset_is_too_few():
    rng = np.random.default_rng(1)
    w = rng.normal(size=100)
    rep = run_aivgt(Dataset(("W", "Y"), np.column_stack([w, 2 * w + rng.normal(size=100)])), "W", "Y", CFG)
    assert rep.reason is NaReason.TOO_FEW_CANDIDATES


def test_no_pair_passed():
    rng = np.random.default_rng(2)
    n = 10_000
    a, b, u = rng.normal(size=(3, n))
    w = a + b + u + rng.normal(size=n)
    y = 2 * w + 3 * a - 2 * b + u + rng.normal(size=n)
    data = Dataset(("A", "B", "W", "Y"), np.column_stack([a, b, w, y]))
    pag = MixedGraph.from_edges(
        ["A", "B", "W", "Y"],
        [("A", CIRCLE, ARROW, "W"), ("B", CIRCLE, ARROW, "W"), ("A", CIRCLE, ARROW, "Y"),
         ("B", CIRCLE, ARROW, "Y"), ("W", CIRCLE, ARROW, "Y")],
        GraphKind.PAG,
    )
    rep = run_aivgt(data, "W", "Y", CFG, graph=pag)
    check_report(rep)
    assert rep.status is Status.NA and rep.reason is NaReason.NO_PAIR_PASSED
    assert rep.conditioning == {"A": ("B",), "B": ("A",)}


def test_deterministic_and_column_order_free():
    data = generate("b", SimConfig(n=3000, seed=4))
    rev = data.select(list(reversed(data.names)))
    a = run_aivgt(data, "W", "Y", CFG).to_dict()
    b = run_aivgt(rev, "W", "Y", CFG).to_dict()
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_scaling_covariates_keeps_oracle_candidates():
    pag = oracle_pag("d")
    data = generate("d", SimConfig(n=3000, seed=5))
    v = data.values.copy()
    for j, name in enumerate(data.names):
        if name not in ("W", "Y"):
            v[:, j] *= 1 + j
    scaled = Dataset(data.names, v)
    a = run_aivgt(data, "W", "Y", CFG, graph=pag)
    b = run_aivgt(scaled, "W", "Y", CFG, graph=pag)
    assert a.candidates == b.candidates and a.conditioning == b.conditioning
    for p, q in zip(a.all_pairs, b.all_pairs):
        assert q.beta_i == pytest.approx(p.beta_i, rel=1e-8)
        assert q.epsilon_std == pytest.approx(p.epsilon_std, rel=1e-8)
    assert any(abs(q.epsilon - p.epsilon) > 1e-6 for p, q in zip(a.all_pairs, b.all_pairs))


def test_graph_override_must_match_columns():
    pag = MixedGraph.from_edges(["Q", "W", "Y"], [], GraphKind.PAG)
    with pytest.raises(InputError):
        run_aivgt(generate("a", SimConfig(n=500, noise_block=False)), "W", "Y", CFG, graph=pag)


def test_input_errors():
    data = generate("a", SimConfig(n=500, noise_block=False))
    with pytest.raises(InputError):
        run_aivgt(data, "W", "W", CFG)
    with pytest.raises(InputError):
        run_aivgt(data, "W", "Z", CFG)
    with pytest.raises(InputError):
        run_aivgt(Dataset(data.names, data.values[:8]), "W", "Y", CFG)
    with pytest.raises(InputError):
        AivgtConfig(tetrad_var="exact")


def test_report_json_allows_recomputing_lambda():
    rep = run_aivgt(generate("c", SimConfig(n=5000, seed=1)), "W", "Y", CFG)
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["schema_version"] == 1
    assert d["config"]["seed"] == CFG.seed
    for p in d["pairs"]:
        if p["error"] is None:
            assert p["lambda"] == abs(abs(p["tau"]) - abs(p["beta_i"] - p["beta_j"]))
    assert d["graph"].startswith("graph pag")


# -- shared-conditioning baseline ----------------------------------------------------

def test_baseline_two_covariates_has_empty_sets():
    rep = run_shared_conditioning_baseline(generate("a", SimConfig(seed=0, noise_block=False)), "W", "Y", CFG)
    check_report(rep)
    assert [(p.s_i, p.s_j, p.z_i, p.z_j) for p in rep.all_pairs] == [("S1", "S2", (), ())]


def test_baseline_agrees_with_search_without_colliders():
    data = generate("a", SimConfig(seed=1))
    a = run_aivgt(data, "W", "Y", CFG)
    b = run_shared_conditioning_baseline(data, "W", "Y", CFG, graph=a.graph)
    check_report(b)
    assert b.method == "shared-conditioning"
    assert abs(a.beta - b.beta) < 0.1


def test_baseline_conditions_on_all_other_covariates():
    data = generate("c", SimConfig(n=3000, seed=2))
    rep = run_shared_conditioning_baseline(data, "W", "Y", CFG)
    check_report(rep)
    covs = set(data.names) - {"W", "Y"}
    for p in rep.all_pairs:
        assert p.z_i == p.z_j and set(p.z_i) == covs - {p.s_i, p.s_j}
