"""Greedy path inference, step-count accounting, evaluation, CKA."""

import itertools

import numpy as np
import pytest

from stepasm.datagen import gen_synthetic_multimer
from stepasm.errors import (
    LengthMismatchError,
    MissingDimerError,
    ShapeMismatchError,
    UntrainedPipelineError,
    ZeroVarianceError,
)
from stepasm.graphs import DimerLibrary
from stepasm.inference import (
    SMALL_ASSEMBLY_MAX,
    DockingPath,
    EvalReport,
    ScoringPipeline,
    cka_similarity,
    evaluate,
    expected_step_evals,
    infer_path,
    predict_structure,
)
from stepasm.nn.model import GINConfig, GINParams, TaskHeadParams
from stepasm.prompt import PromptParams

DIM = 13


def untrained_pipeline(seed=70):
    gin = GINParams.init(GINConfig(dropout=0.0), seed)
    head = TaskHeadParams.init(DIM, 8, seed + 1)
    prompt = PromptParams.init(DIM, 8, seed + 2, dropout=0.0)
    return ScoringPipeline(gin, head, prompt)


class TablePipeline:
    """Deterministic stand-in scorer: fixed per-pair scores, same bookkeeping."""

    def __init__(self, table):
        self.table = table
        self.eval_count = 0

    def score_actions(self, chain_features, cond_nodes, cond_edges, pairs):
        self.eval_count += len(pairs)
        return np.array([self.table[p] for p in pairs])


def greedy_reference(n, table):
    """Re-derive the greedy choice sequence straight from the score table."""
    best = max(
        ((d, u) for d in range(n) for u in range(n) if d != u),
        key=lambda p: (table[p], [-p[0], -p[1]]),
    )
    docked = sorted(best)
    actions = [best]
    while len(docked) < n:
        pairs = [
            (d, u) for d in docked for u in range(n) if u not in docked
        ]
        pick = max(pairs, key=lambda p: (table[p], [-p[0], -p[1]]))
        actions.append(pick)
        docked = sorted(docked + [pick[1]])
    return actions


def test_docking_path_validation():
    path = DockingPath(((0, 1), (1, 2)), (0.9, 0.8))
    assert path.n == 3
    assert path.edges() == ((0, 1), (1, 2))
    with pytest.raises(LengthMismatchError):
        DockingPath(((0, 1),), (0.9, 0.8))
    with pytest.raises(ValueError):
        DockingPath(((0, 1), (0, 1)), (0.9, 0.8))  # repeated edge: not a tree


def test_docking_path_text_roundtrip():
    path = DockingPath(((2, 0), (0, 1), (1, 3)), (0.75, 0.5, 0.25),
                       (12, 4, 3))
    back = DockingPath.from_text(path.to_text())
    assert back.actions == path.actions
    assert back.probs == path.probs


@pytest.mark.parametrize("n", [5, 10, 20, 30])
def test_per_step_eval_counts_match_closed_form(n):
    expect = expected_step_evals(n)
    assert expect[0] == n * (n - 1)
    assert expect[1:] == tuple(k * (n - k) for k in range(2, n))
    table = {
        (d, u): float(np.sin(3.1 * d + 7.7 * u))
        for d in range(n)
        for u in range(n)
        if d != u
    }
    pipe = TablePipeline(table)
    path = infer_path(np.zeros((n, DIM)), pipe, large_pipeline=pipe)
    assert path.per_step_evals == expect
    assert pipe.eval_count == sum(expect)
    assert len(path.actions) == n - 1


def test_real_pipeline_reports_same_counts():
    n = 6
    pipe = untrained_pipeline()
    feats = np.random.default_rng(71).uniform(0.0, 0.6, size=(n, DIM))
    path = infer_path(feats, pipe)
    assert path.per_step_evals == expected_step_evals(n)
    assert pipe.eval_count == sum(expected_step_evals(n))


def test_greedy_choices_match_brute_force_reference():
    n = 7
    rng = np.random.default_rng(72)
    table = {
        (d, u): float(rng.random())
        for d in range(n)
        for u in range(n)
        if d != u
    }
    pipe = TablePipeline(table)
    path = infer_path(np.zeros((n, DIM)), pipe)
    assert list(path.actions) == greedy_reference(n, table)
    for (d, u), p in zip(path.actions, path.probs):
        assert p == pytest.approx(table[(d, u)])


def test_large_assemblies_switch_to_the_second_pipeline():
    n = SMALL_ASSEMBLY_MAX + 2  # 9 chains: steps beyond size 7 use the adapted prompt
    table = {
        (d, u): float(np.cos(d + 2.0 * u))
        for d in range(n)
        for u in range(n)
        if d != u
    }
    small, large = TablePipeline(table), TablePipeline(table)
    path = infer_path(np.zeros((n, DIM)), small, large_pipeline=large)
    assert len(path.actions) == n - 1
    expect = expected_step_evals(n)
    # post-action sizes 2..7 go to the small pipeline, 8..9 to the large one
    boundary = SMALL_ASSEMBLY_MAX - 1
    assert small.eval_count == sum(expect[:boundary])
    assert large.eval_count == sum(expect[boundary:])
    with pytest.raises(UntrainedPipelineError, match="adapted prompt"):
        infer_path(np.zeros((n, DIM)), small)


def test_missing_dimers_fall_back_to_next_best():
    n = 4
    table = {
        (d, u): 1.0 if (d, u) == (0, 3) else 0.5 - 0.01 * (d + u)
        for d in range(n)
        for u in range(n)
        if d != u
    }
    dimers = DimerLibrary()
    coords = np.random.default_rng(73).random((60, 3))
    for a, b in itertools.combinations(range(n), 2):
        if (a, b) != (0, 3):
            dimers.add(a, b, coords, coords + 1.0)
    pipe = TablePipeline(table)
    path = infer_path(np.zeros((n, DIM)), pipe, dimers=dimers)
    assert path.actions[0] != (0, 3)
    assert (0, 3) not in {tuple(sorted(a)) for a in path.actions}


def test_no_available_dimer_raises():
    pipe = TablePipeline({(0, 1): 1.0, (1, 0): 0.5})
    with pytest.raises(MissingDimerError):
        infer_path(np.zeros((2, DIM)), pipe, dimers=DimerLibrary())


def test_predicted_structure_from_true_contacts_matches_gt():
    m = gen_synthetic_multimer(5, np.random.default_rng(74))
    # walk the contact tree in a valid docking order
    contacts = sorted(m.contact_edges)
    docked = {contacts[0][0]}
    actions = []
    remaining = list(contacts)
    while remaining:
        for e in remaining:
            a, b = e
            if a in docked and b not in docked:
                actions.append((a, b))
            elif b in docked and a not in docked:
                actions.append((b, a))
            else:
                continue
            docked.add(actions[-1][1])
            remaining.remove(e)
            break
    path = DockingPath(tuple(actions), tuple([1.0] * len(actions)))
    pred = predict_structure(m.chains, m.dimers, path)
    report = evaluate([pred], [m.gt_coords], ["m"])
    assert report.tm_mean > 0.999
    assert report.rmsd_mean < 0.5


def test_predict_structure_rejects_wrong_chain_count():
    m = gen_synthetic_multimer(4, np.random.default_rng(75))
    path = DockingPath(((0, 1), (1, 2)), (1.0, 1.0))
    with pytest.raises(LengthMismatchError):
        predict_structure(m.chains, m.dimers, path)


def test_eval_report_aggremates_and_text():
    rows = [("a", 0.9, 1.0), ("b", 0.7, 3.0), ("c", 0.8, 2.0)]
    rep = EvalReport.from_rows(rows)
    assert rep.tm_mean == pytest.approx(0.8)
    assert rep.tm_median == pytest.approx(0.8)
    assert rep.rmsd_mean == pytest.approx(2.0)
    text = rep.to_text()
    assert "mean" in text and "median" in text and "a" in text
    d = rep.to_dict()
    assert d["rows"][0] == {"name": "a", "tm": 0.9, "rmsd": 1.0}


def test_evaluate_requires_matching_counts():
    with pytest.raises(LengthMismatchError):
        evaluate([[np.zeros((3, 3))]], [])
    with pytest.raises(LengthMismatchError):
        evaluate([], [])


# ---------------------------------------------------------------------------
# representation similarity


def test_cka_self_similarity_is_one():
    h = np.random.default_rng(76).normal(size=(100, 16))
    assert cka_similarity(h, h) == pytest.approx(1.0, abs=1e-12)


def test_cka_invariant_to_orthogonal_maps_and_scale():
    rng = np.random.default_rng(77)
    h = rng.normal(size=(200, 24))
    qmat, _ = np.linalg.qr(rng.normal(size=(24, 24)))
    assert cka_similarity(h, 3.7 * (h @ qmat)) == pytest.approx(1.0, abs=1e-6)


def test_cka_low_for_independent_representations():
    rng = np.random.default_rng(78)
    a = rng.normal(size=(2000, 32))
    b = rng.normal(size=(2000, 32))
    assert cka_similarity(a, b) < 0.2


def test_cka_input_validation():
    with pytest.raises(ShapeMismatchError):
        cka_similarity(np.zeros((4, 2)), np.zeros((5, 2)))
    with pytest.raises(ShapeMismatchError):
        cka_similarity(np.zeros(4), np.zeros((4, 2)))
    with pytest.raises(ZeroVarianceError):
        cka_similarity(np.ones((10, 3)), np.random.default_rng(79).normal(size=(10, 3)))
