"""Causal effect estimation with ancestral instruments found by the
generalised tetrad condition."""

from .data import Dataset, read_csv, write_csv
from .discovery import FisherZBackend, LearnerConfig, OracleBackend, learn_pag
from .estimation import EffectEstimate, iv_ratio, lsr, naive_tsls, tsls
from .exceptions import AivgtError, InputError, ParseError, SingularMatrixError, WeakInstrumentError
from .graph import (
    ARROW,
    CIRCLE,
    TAIL,
    Dag,
    EdgeMark,
    GraphKind,
    MixedGraph,
    adjacents,
    ancestors,
    d_separated,
    dag_to_mag,
    descendants,
    is_aiv_in_dag,
    is_civ_in_dag,
    is_visible,
    m_separated,
    possible_ancestors,
)
from .graphio import parse_graph, read_graph, serialize_graph, write_graph
from .search import (
    AivgtConfig,
    CandidatePair,
    EstimateReport,
    NaReason,
    Status,
    candidate_aivs,
    conditioning_set,
    run_aivgt,
    run_shared_conditioning_baseline,
)
from .simdata import Scenario, SimConfig, generate, true_beta, true_dag
from .stats import CovMatrix, cov_matrix, fisher_z_test, partial_cov, tetrad_test

__version__ = "0.1.0"
