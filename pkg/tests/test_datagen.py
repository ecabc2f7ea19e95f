"""Synthetic multimer generation and the source/target dataset builders."""

import numpy as np
import pytest

from stepasm.datagen import (
    SMALL_SCALE_MAX,
    SourceInstance,
    TargetInstance,
    gen_multimer_set,
    gen_synthetic_multimer,
    load_multimers,
    load_source_dataset,
    load_target_dataset,
    make_source_dataset,
    make_target_dataset,
    multimer_from_dict,
    multimer_to_dict,
    save_multimers,
    save_source_dataset,
    save_target_dataset,
    split_by_scale,
)
from stepasm.errors import EmptyDatasetError, MalformedRecordError
from stepasm.graphs import (
    AssemblyGraph,
    assembly_correctness,
    is_labeled_tree,
    place_chains,
)


@pytest.fixture(scope="module")
def m4():
    return gen_synthetic_multimer(4, np.random.default_rng(3))


def test_contact_edges_span_every_chain(m4):
    # the base layout tree is always contained in the contacts; extra
    # acid-base pairs may join it, so assert connectivity, not tree-ness
    assert len(m4.contact_edges) >= m4.n - 1
    reach = {0}
    frontier = [0]
    while frontier:
        v = frontier.pop()
        for a, b in m4.contact_edges:
            w = b if a == v else a if b == v else None
            if w is not None and w not in reach:
                reach.add(w)
                frontier.append(w)
    assert reach == set(range(m4.n))


def spanning_tree_within(n, edges):
    """Greedy cycle-free edge subset reaching all n nodes (or None)."""
    parent = list(range(n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    picked = []
    for a, b in sorted(edges):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
            picked.append((a, b))
    return tuple(picked) if len(picked) == n - 1 else None


def test_gt_assembles_from_a_contact_spanning_tree(m4):
    spanning = spanning_tree_within(m4.n, m4.contact_edges)
    assert spanning is not None
    graph = AssemblyGraph.over(m4.n, spanning)
    assert assembly_correctness(graph, m4) > 0.999


def test_wrong_pose_edges_score_low(m4):
    contacts = m4.contact_edges
    wrong = [
        (a, b)
        for a in range(m4.n)
        for b in range(a + 1, m4.n)
        if (a, b) not in contacts
    ]
    assert wrong, "a 4-chain multimer has non-contact pairs"
    # swap one true contact for a wrong-pose edge; correctness must drop
    base = tuple(sorted(contacts))
    for w in wrong:
        swapped = tuple(sorted(set(base) - {base[-1]} | {w}))
        if is_labeled_tree(range(m4.n), swapped):
            y = assembly_correctness(AssemblyGraph.over(m4.n, swapped), m4)
            assert y < 0.95
            return
    pytest.skip("no tree-preserving swap for this draw")


def test_generated_chains_are_distinct_lengths_and_sequences(m4):
    assert len(m4.chains) == 4
    for c in m4.chains:
        assert 50 <= len(c.sequence) <= 200
        assert c.coords.shape == (len(c.sequence), 3)


def test_acid_base_parity_along_contacts(m4):
    # contacting chains should come from opposite composition classes
    def acidity(seq):
        return (seq.count("D") + seq.count("E")) - (seq.count("K") + seq.count("R"))

    for a, b in m4.contact_edges:
        assert acidity(m4.chains[a].sequence) * acidity(m4.chains[b].sequence) < 0


def test_determinism_same_seed():
    a = gen_synthetic_multimer(3, np.random.default_rng(9))
    b = gen_synthetic_multimer(3, np.random.default_rng(9))
    assert a.contact_edges == b.contact_edges
    assert all(
        np.array_equal(x.coords, y.coords) for x, y in zip(a.chains, b.chains)
    )
    assert [c.sequence for c in a.chains] == [c.sequence for c in b.chains]


def test_gen_multimer_set_names_and_counts():
    ms = gen_multimer_set({3: 2, 5: 1}, seed=4, prefix="t")
    assert [m.n for m in ms] == [3, 3, 5]
    assert [m.name for m in ms] == ["t-0000-n3", "t-0001-n3", "t-0002-n5"]


def test_source_dataset_labels_match_oracle():
    ms = gen_multimer_set({3: 1, 4: 1}, seed=5)
    by_name = {m.name: m for m in ms}
    src = make_source_dataset(ms, 6, seed=6)
    assert src
    for inst in src:
        m = by_name[inst.multimer]
        assert is_labeled_tree(range(inst.n), inst.edges)
        expect = assembly_correctness(AssemblyGraph.over(m.n, inst.edges), m)
        assert inst.y == pytest.approx(expect, abs=1e-12)


def test_source_dataset_deduplicates_graphs():
    ms = gen_multimer_set({3: 1}, seed=7)
    src = make_source_dataset(ms, 50, seed=8)
    keys = [(i.multimer, i.edges) for i in src]
    assert len(keys) == len(set(keys))
    assert len(src) <= 3  # only three labeled trees on 3 nodes


def test_source_dataset_rejects_out_of_range_n():
    ms = gen_multimer_set({6: 1}, seed=9)
    with pytest.raises(ValueError, match="3 <= N <= 5"):
        make_source_dataset(ms, 4, seed=10)


def test_target_dataset_valid_records(m4):
    records = make_target_dataset(m4, np.random.default_rng(11), starts=2)
    assert records
    for r in records:
        assert r.multimer == m4.name
        assert is_labeled_tree(r.cond_nodes, r.cond_edges)
        assert r.v_d in r.cond_nodes
        assert r.v_u not in r.cond_nodes
        expect = assembly_correctness(r.extended(m4), m4)
        assert r.y == pytest.approx(expect, abs=1e-12)


def test_target_dataset_has_negatives_at_every_condition_size(m4):
    records = make_target_dataset(m4, np.random.default_rng(12), starts=4)
    sizes_with_neg = {len(r.cond_nodes) for r in records if r.y < 0.5}
    # wrong actions must appear for singleton starts and for grown conditions
    assert 1 in sizes_with_neg
    assert 2 in sizes_with_neg


def test_target_dataset_deterministic():
    m = gen_synthetic_multimer(4, np.random.default_rng(13))
    a = make_target_dataset(m, np.random.default_rng(14), starts=2)
    b = make_target_dataset(m, np.random.default_rng(14), starts=2)
    assert a == b


def test_target_dataset_rejects_small_multimer():
    m = gen_synthetic_multimer(3, np.random.default_rng(15))
    two = type(m)(
        name="pair",
        chains=m.chains[:2],
        gt_coords=m.gt_coords[:2],
        dimers=m.dimers,
        contact_edges=frozenset([e for e in m.contact_edges if max(e) < 2]) or
        frozenset({(0, 1)}),
    )
    with pytest.raises(ValueError, match="at least 3 chains"):
        make_target_dataset(two, np.random.default_rng(16))


def test_target_instance_validation():
    with pytest.raises(ValueError, match="docked node"):
        TargetInstance("m", 4, (0, 1), ((0, 1),), v_d=2, v_u=3, y=1.0)
    with pytest.raises(ValueError, match="undocked node"):
        TargetInstance("m", 4, (0, 1), ((0, 1),), v_d=0, v_u=1, y=1.0)


def test_split_by_scale_boundary():
    def rec(n):
        return TargetInstance("m", n, (0,), (), v_d=0, v_u=1, y=1.0)

    split = split_by_scale([rec(3), rec(SMALL_SCALE_MAX), rec(SMALL_SCALE_MAX + 1)])
    assert [r.n for r in split.small] == [3, SMALL_SCALE_MAX]
    assert [r.n for r in split.large] == [SMALL_SCALE_MAX + 1]


# ---------------------------------------------------------------------------
# persistence round-trips


def test_multimer_dict_roundtrip(m4):
    back = multimer_from_dict(multimer_to_dict(m4, seed=3))
    assert back.name == m4.name
    assert back.contact_edges == m4.contact_edges
    assert all(
        np.array_equal(x.coords, y.coords) for x, y in zip(back.chains, m4.chains)
    )
    for a, b in m4.dimers.pairs():
        xa, xb = m4.dimers.get(a, b)
        ya, yb = back.dimers.get(a, b)
        assert np.array_equal(xa, ya) and np.array_equal(xb, yb)
    # reconstructed dimers still assemble the complex
    placed = place_chains(tuple(sorted(m4.contact_edges)), back.dimers)
    assert len(placed) == m4.n


def test_multimer_file_roundtrip(tmp_path, m4):
    path = tmp_path / "multimers.jsonl"
    save_multimers(path, [m4], {m4.name: 3})
    loaded = load_multimers(path)
    assert set(loaded) == {m4.name}
    assert loaded[m4.name].contact_edges == m4.contact_edges


def test_source_file_roundtrip(tmp_path):
    ms = gen_multimer_set({3: 1}, seed=17)
    src = make_source_dataset(ms, 3, seed=18)
    path = tmp_path / "source.jsonl"
    save_source_dataset(path, src)
    assert load_source_dataset(path) == src


def test_target_file_roundtrip(tmp_path):
    m = gen_synthetic_multimer(4, np.random.default_rng(19))
    tgt = make_target_dataset(m, np.random.default_rng(20))
    path = tmp_path / "target.jsonl"
    save_target_dataset(path, tgt)
    assert load_target_dataset(path) == tgt


def test_load_source_rejects_empty(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    with pytest.raises(EmptyDatasetError):
        load_source_dataset(path)


def test_load_rejects_malformed_json(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"multimer": "m", "n": 3\n')
    with pytest.raises(MalformedRecordError, match="line 1"):
        load_source_dataset(path)


def test_source_instance_graph_binds_features():
    ms = gen_multimer_set({3: 1}, seed=21)
    src = make_source_dataset(ms, 2, seed=22)
    g = src[0].graph(ms[0])
    assert g.attrs.shape == (3, ms[0].chain_features.shape[1])
    assert np.array_equal(g.attrs, ms[0].chain_features)
