"""Prompted link prediction: path construction, frozen stages, tuning."""

import numpy as np
import pytest

from stepasm.datagen import gen_synthetic_multimer, make_target_dataset
from stepasm.errors import (
    EmptyDatasetError,
    NodeCollisionError,
    ShapeMismatchError,
)
from stepasm.nn.model import GINConfig, GINParams, TaskHeadParams, params_hash
from stepasm.nn.tensor import Tensor
from stepasm.prompt import (
    OUTPUT_SCALE,
    PROMPT_EDGES,
    PromptGraph,
    PromptParams,
    PromptTuneConfig,
    _head_weight_rows,
    build_items,
    build_prompt_graph,
    compute_node_embeddings,
    pipeline_forward,
    pipeline_forward_batch,
    prompt_embeddings,
    prompt_tune,
    query_embeddings,
)
from stepasm.training import TrainConfig

DIM = 13


@pytest.fixture(scope="module")
def setup():
    m = gen_synthetic_multimer(4, np.random.default_rng(40))
    instances = make_target_dataset(m, np.random.default_rng(41), starts=2)
    mdict = {m.name: m}
    gin = GINParams.init(GINConfig(dropout=0.0), 42)
    head = TaskHeadParams.init(DIM, 16, 43)
    items = build_items(instances, mdict)
    return m, mdict, instances, gin, head, items


def _fresh_prompt(seed=44, **kw):
    p = PromptParams.init(DIM, 32, seed, dropout=0.0, **kw)
    rows = np.random.default_rng(45).normal(0.3, 0.2, size=(64, DIM))
    p.standardize_from(rows)
    return p


def test_prompt_graph_is_a_4_node_path():
    feats = Tensor(np.random.default_rng(0).random((4, DIM)))
    pg = PromptGraph(features=feats)
    assert pg.features.data.shape == (4, DIM)
    assert pg.edges == PROMPT_EDGES == ((0, 1), (1, 2), (2, 3))
    assert len(pg.edges) == 3
    assert pg.roles[0] == "d" and pg.roles[-1] == "u"


def test_prompt_graph_rejects_wrong_shapes():
    bad = Tensor(np.zeros((3, DIM)))
    with pytest.raises(ShapeMismatchError, match="4 node rows"):
        PromptGraph(features=bad)
    good = Tensor(np.zeros((4, DIM)))
    with pytest.raises(ShapeMismatchError, match="fixed path"):
        PromptGraph(features=good, edges=((0, 1), (0, 2), (0, 3)))
    with pytest.raises(ShapeMismatchError, match="path ends"):
        PromptGraph(features=good, roles=("x", "d", "u", "y"))


def test_build_prompt_graph_stacks_role_rows():
    rng = np.random.default_rng(1)
    rows = [Tensor(rng.random((1, DIM))) for _ in range(4)]
    pg = build_prompt_graph(*rows)
    for i, r in enumerate(rows):
        assert np.array_equal(pg.features.data[i], r.data[0])


def test_build_items_wires_condition_and_query(setup):
    m, mdict, instances, *_ , items = setup
    for inst, it in zip(instances, items):
        cond = inst.condition(m)
        assert np.array_equal(it.cond_features, cond.attrs)
        assert it.cond_edges == cond.local_edges()
        assert cond.nodes[it.d_local] == inst.v_d
        assert np.array_equal(it.u_feature, m.chain_features[inst.v_u])
        assert it.y == inst.y and it.n == m.n


def test_compute_node_embeddings_row_map(setup):
    m, _, instances, gin, *_ = setup
    inst = next(i for i in instances if len(i.cond_nodes) >= 2)
    cond = inst.condition(m)
    h, rows = compute_node_embeddings(cond, inst.v_u, m.chain_features[inst.v_u], gin)
    assert h.data.shape == (len(cond.nodes) + 1, DIM)
    assert rows[inst.v_u] == len(cond.nodes)
    assert sorted(rows) == sorted(cond.nodes + (inst.v_u,))


def test_compute_node_embeddings_rejects_docked_candidate(setup):
    m, _, instances, gin, *_ = setup
    inst = instances[0]
    cond = inst.condition(m)
    with pytest.raises(NodeCollisionError):
        compute_node_embeddings(cond, inst.v_d, m.chain_features[inst.v_d], gin)


def test_query_embeddings_match_single_item_path(setup):
    m, _, instances, gin, _, items = setup
    h_d, h_u = query_embeddings(items[:6], gin)
    for i, (inst, it) in enumerate(zip(instances[:6], items[:6])):
        cond = inst.condition(m)
        h, rows = compute_node_embeddings(cond, inst.v_u, it.u_feature, gin)
        assert np.allclose(h_d.data[i], h.data[rows[inst.v_d]], atol=1e-12)
        assert np.allclose(h_u.data[i], h.data[rows[inst.v_u]], atol=1e-12)


def test_middle_nodes_swap_their_sources():
    # with one attention head the softmax weight is identically 1, so the
    # x-node is a function of the u-embedding alone and vice versa
    prompt = _fresh_prompt()
    rng = np.random.default_rng(2)
    h_d = rng.normal(0.3, 0.1, size=(5, DIM))
    h_u = rng.normal(0.3, 0.1, size=(5, DIM))
    h_x, h_y = prompt_embeddings(h_d, h_u, prompt)
    assert np.allclose(h_x.data, prompt.transform(Tensor(h_u)).data, atol=1e-12)
    assert np.allclose(h_y.data, prompt.transform(Tensor(h_d)).data, atol=1e-12)


def test_transform_output_stays_inside_encoder_domain():
    prompt = _fresh_prompt()
    x = np.random.default_rng(3).normal(0.0, 5.0, size=(50, DIM))
    out = prompt.transform(Tensor(x)).data
    assert np.all(out > 0.0) and np.all(out < OUTPUT_SCALE)


def test_prompt_embeddings_rejects_wrong_width():
    prompt = _fresh_prompt()
    with pytest.raises(ShapeMismatchError):
        prompt_embeddings(np.zeros((2, DIM + 1)), np.zeros((2, DIM + 1)), prompt)
    with pytest.raises(ShapeMismatchError):
        prompt_embeddings(np.zeros((2, DIM)), np.zeros((3, DIM)), prompt)


def test_multi_head_weights_are_a_block_softmax():
    prompt = _fresh_prompt(multi_head=True, heads=4)
    rng = np.random.default_rng(4)
    h_d = rng.normal(size=(6, DIM))
    h_u = rng.normal(size=(6, DIM))
    w = _head_weight_rows(h_d, h_u, prompt)
    assert w.shape == (6, DIM)
    assert np.all(w > 0.0) and np.all(w < 1.0)
    # one shared weight per block, and the four block weights sum to 1
    for row in w:
        block_weights = [row[blk[0]] for blk in prompt.head_blocks()]
        for blk in prompt.head_blocks():
            assert np.allclose(row[blk], row[blk[0]])
        assert np.isclose(sum(block_weights), 1.0)


def test_multi_head_changes_the_embeddings():
    single = _fresh_prompt()
    multi = _fresh_prompt(multi_head=True, heads=4)
    rng = np.random.default_rng(5)
    h_d = rng.normal(0.3, 0.2, size=(4, DIM))
    h_u = rng.normal(0.3, 0.2, size=(4, DIM))
    x1, _ = prompt_embeddings(h_d, h_u, single)
    x4, _ = prompt_embeddings(h_d, h_u, multi)
    assert not np.allclose(x1.data, x4.data)


def test_batched_pipeline_matches_single(setup):
    m, _, instances, gin, head, items = setup
    prompt = _fresh_prompt()
    batch = pipeline_forward_batch(items[:8], gin, head, prompt).data.ravel()
    for i, inst in enumerate(instances[:8]):
        one = pipeline_forward(
            inst.condition(m), inst.v_d, inst.v_u,
            m.chain_features[inst.v_u], gin, head, prompt,
        )
        assert batch[i] == pytest.approx(one, abs=1e-10)


def test_standardize_from_sets_whitening_buffers():
    prompt = PromptParams.init(DIM, 16, 6)
    assert np.array_equal(prompt.in_shift.data, np.zeros(DIM))
    assert np.array_equal(prompt.in_scale.data, np.ones(DIM))
    rows = np.random.default_rng(7).normal(2.0, 0.5, size=(200, DIM))
    prompt.standardize_from(rows)
    assert np.allclose(prompt.in_shift.data, rows.mean(axis=0))
    assert np.allclose(prompt.in_scale.data, 1.0 / rows.std(axis=0))
    # whitening buffers are buffers, not weights
    assert "prompt.in_shift" not in prompt.trainable_named()
    assert "prompt.in_shift" in prompt.named()


def test_copy_is_independent():
    prompt = _fresh_prompt()
    clone = prompt.copy()
    assert params_hash(prompt.named()) == params_hash(clone.named())
    clone.mlp.weights[0].data += 1.0
    assert params_hash(prompt.named()) != params_hash(clone.named())


def test_tuning_trains_only_the_prompt(setup):
    _, _, _, gin, head, items = setup
    gin_before = params_hash(gin.named())
    head_before = params_hash(head.named())
    cfg = PromptTuneConfig(
        train=TrainConfig(lr=0.003, epochs=25, batch_size=64, patience=25,
                          val_fraction=0.0, loss="bce"),
        mlp_hidden=32,
        dropout=0.0,
        seed=8,
    )
    prompt, log = prompt_tune(items, gin, head, cfg)
    assert params_hash(gin.named()) == gin_before
    assert params_hash(head.named()) == head_before
    assert log[-1]["train_mae"] < log[0]["train_mae"]
    # whitening was fit from the data, not left at the identity
    assert not np.array_equal(prompt.in_shift.data, np.zeros(DIM))


def test_tuning_warm_start_resumes(setup):
    _, _, _, gin, head, items = setup
    cfg = PromptTuneConfig(
        train=TrainConfig(lr=0.003, epochs=5, batch_size=64, patience=5,
                          val_fraction=0.0, loss="bce"),
        mlp_hidden=32,
        dropout=0.0,
        seed=9,
    )
    first, _ = prompt_tune(items, gin, head, cfg)
    resumed, log = prompt_tune(items, gin, head, cfg, init=first)
    # warm start begins from the given weights (and keeps its buffers), so the
    # first epoch sits near the previous endpoint rather than a fresh init
    assert np.array_equal(resumed.in_shift.data, first.in_shift.data)
    fresh, fresh_log = prompt_tune(items, gin, head, cfg)
    assert log[0]["train_mae"] < fresh_log[0]["train_mae"]


def test_tune_config_defaults_to_bce():
    cfg = PromptTuneConfig()
    assert cfg.train.loss == "bce"
    assert cfg.train.lr == pytest.approx(0.001)


def test_empty_items_rejected(setup):
    _, _, _, gin, head, _ = setup
    with pytest.raises(EmptyDatasetError):
        prompt_tune([], gin, head)
    with pytest.raises(EmptyDatasetError):
        query_embeddings([], gin)
