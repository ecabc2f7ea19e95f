"""Synthetic multimers and the source/target training datasets.

The generator builds multimers whose assembly behavior is learnable from
sequence alone: chains carry either an acidic (D/E-rich) or basic (K/R-rich)
composition, assigned by parity along the contact tree, so true contacts are
overwhelmingly acid-base pairs. Dimers for contact pairs are cut from the
ground-truth complex; all other pairs get a deliberately wrong relative pose
(rotated >= 60 degrees, shifted >= 10 A), so any assembly graph that uses a
non-contact edge scores visibly below a spanning tree of true contacts.
"""

import json
import warnings
from dataclasses import asdict, dataclass

import numpy as np

from .embeddings import STANDARD_RESIDUES
from .errors import EmptyDatasetError, MalformedRecordError, NoValidGrowthWarning
from .geometry import random_rotation
from .ioutil import atomic_write_text
from .graphs import (
    AssemblyGraph,
    ChainStructure,
    DimerLibrary,
    Multimer,
    as_rng,
    assembly_correctness,
    canonical_edges,
    random_uca_edges,
)

GENERATOR_VERSION = 1
KEEP_THRESHOLD = 0.99
CONDITION_CAP = 32
SMALL_SCALE_MAX = 7  # small/large split boundary on chain count

_ACIDIC = "DE"
_BASIC = "KR"


@dataclass(frozen=True)
class SourceInstance:
    """Full assembly graph over one multimer plus its correctness label."""

    multimer: str
    n: int
    edges: tuple
    y: float

    def graph(self, multimer):
        return multimer.graph_over(self.edges)


@dataclass(frozen=True)
class TargetInstance:
    """A partial assembly (condition graph), one docking action, and its label."""

    multimer: str
    n: int
    cond_nodes: tuple
    cond_edges: tuple
    v_d: int
    v_u: int
    y: float

    def __post_init__(self):
        if self.v_d not in self.cond_nodes:
            raise ValueError("docked node must lie in the condition graph")
        if self.v_u in self.cond_nodes:
            raise ValueError("undocked node must lie outside the condition graph")

    def condition(self, multimer):
        return multimer.subgraph(self.cond_nodes, self.cond_edges)

    def extended(self, multimer):
        nodes = tuple(sorted(self.cond_nodes + (self.v_u,)))
        edges = self.cond_edges + ((self.v_d, self.v_u),)
        return multimer.subgraph(nodes, edges)


@dataclass(frozen=True)
class ScaleSplit:
    small: tuple  # instances from multimers with N <= 7
    large: tuple  # N >= 8


def split_by_scale(instances):
    small = tuple(i for i in instances if i.n <= SMALL_SCALE_MAX)
    large = tuple(i for i in instances if i.n > SMALL_SCALE_MAX)
    return ScaleSplit(small, large)


def _unit(v):
    return v / np.linalg.norm(v)


def _chain_walk(rng, length, step=3.8, min_sep=3.0):
    """Persistent random walk with a short-range self-avoidance check."""
    pos = np.zeros((length, 3))
    direction = _unit(rng.standard_normal(3))
    for t in range(1, length):
        cand = pos[t - 1] + step * direction
        for _ in range(20):
            nd = _unit(direction + 0.7 * rng.standard_normal(3))
            cand = pos[t - 1] + step * nd
            if t < 2:
                break
            gaps = np.linalg.norm(pos[: t - 1] - cand, axis=1)
            if gaps.min() >= min_sep:
                break
        direction = _unit(cand - pos[t - 1])
        pos[t] = cand
    return pos - pos.mean(axis=0)


def _tree_parity(n, edges):
    """0/1 class per node: parity of depth from node 0 along the tree."""
    adj = {v: [] for v in range(n)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    parity = {0: 0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in parity:
                parity[w] = parity[v] ^ 1
                stack.append(w)
    return parity


def _draw_sequence(rng, length, boost):
    weights = np.ones(len(STANDARD_RESIDUES))
    for aa in boost:
        weights[STANDARD_RESIDUES.index(aa)] = 8.0
    p = weights / weights.sum()
    picks = rng.choice(len(STANDARD_RESIDUES), size=length, p=p)
    return "".join(STANDARD_RESIDUES[i] for i in picks)


def _wrong_pose(rng, coords, min_angle=np.pi / 3.0, min_shift=10.0):
    """Rotate about the centroid by >= min_angle and shift by >= min_shift."""
    axis = _unit(rng.standard_normal(3))
    angle = rng.uniform(min_angle, np.pi)
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    rot = np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)
    shift = _unit(rng.standard_normal(3)) * rng.uniform(min_shift, 25.0)
    centroid = coords.mean(axis=0)
    return (coords - centroid) @ rot.T + centroid + shift


def _rigid_jumble(rng, coord_sets, spread=30.0):
    """One random rigid motion applied to every coordinate set jointly."""
    rot = random_rotation(rng)
    shift = rng.standard_normal(3) * spread
    return [c @ rot.T + shift for c in coord_sets]


def gen_synthetic_multimer(n, seed, name=None):
    """Random n-chain multimer with ground truth, contacts, and a full dimer library."""
    if not 3 <= n <= 30:
        raise ValueError(f"chain count must be in 3..30, got {n}")
    rng = as_rng(seed)
    tree = random_uca_edges(n, rng)
    parity = _tree_parity(n, tree)
    lengths = [int(rng.integers(50, 121)) for _ in range(n)]
    sequences = [
        _draw_sequence(rng, lengths[i], _ACIDIC if parity[i] == 0 else _BASIC)
        for i in range(n)
    ]
    walks = [_chain_walk(rng, lengths[i]) for i in range(n)]
    radii = [float(np.linalg.norm(w, axis=1).max()) for w in walks]

    # lay chains out along the contact tree; neighbors overlap, others pushed apart
    adj = {v: [] for v in range(n)}
    for a, b in tree:
        adj[a].append(b)
        adj[b].append(a)
    order = []
    visited = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        order.append(v)
        for w in sorted(adj[v], reverse=True):
            if w not in visited:
                visited.add(w)
                stack.append(w)
    centers = {0: np.zeros(3)}
    for v in order:
        for w in adj[v]:
            if w in centers:
                continue
            gap = 0.55 * (radii[v] + radii[w])
            best, best_score = None, -np.inf
            for _ in range(24):
                cand = centers[v] + _unit(rng.standard_normal(3)) * gap
                score = min(
                    (np.linalg.norm(cand - c) - radii[w] - radii[o]
                     for o, c in centers.items() if o != v),
                    default=np.inf,
                )
                if score > best_score:
                    best, best_score = cand, score
            centers[w] = best
    gt = [walks[i] + centers[i] for i in range(n)]

    # extra contacts: acid-base pairs that ended up genuinely touching
    contacts = set(tree)
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in contacts or parity[i] == parity[j]:
                continue
            if np.linalg.norm(centers[i] - centers[j]) > radii[i] + radii[j]:
                continue
            d2 = np.sum((gt[i][:, None, :] - gt[j][None, :, :]) ** 2, axis=2)
            if np.sqrt(d2.min()) < 8.0:
                contacts.add((i, j))

    chains = []
    for i in range(n):
        own = _rigid_jumble(rng, [gt[i]])[0]
        chains.append(ChainStructure(chain_id=str(i), sequence=sequences[i], coords=own))

    dimers = DimerLibrary()
    for i in range(n):
        for j in range(i + 1, n):
            xi, xj = _rigid_jumble(rng, [gt[i], gt[j]])
            if (i, j) not in contacts:
                xj = _wrong_pose(rng, xj)
            dimers.add(i, j, xi, xj)

    return Multimer(
        name=name or f"syn-n{n}",
        chains=tuple(chains),
        gt_coords=tuple(gt),
        dimers=dimers,
        contact_edges=frozenset(contacts),
    )


def gen_multimer_set(counts, seed, prefix="syn"):
    """Batch of multimers; ``counts`` maps chain count -> how many to generate."""
    out = []
    idx = 0
    for n in sorted(counts):
        for _ in range(counts[n]):
            out.append(
                gen_synthetic_multimer(
                    n, np.random.default_rng([seed, idx]), name=f"{prefix}-{idx:04d}-n{n}"
                )
            )
            idx += 1
    return out


def make_source_dataset(multimers, samples_per_multimer, seed, n_range=(3, 5)):
    """Random deduplicated assembly graphs per multimer, labeled by the oracle."""
    if samples_per_multimer < 1:
        raise ValueError("samples_per_multimer must be positive")
    lo, hi = n_range
    out = []
    for idx, m in enumerate(multimers):
        if not lo <= m.n <= hi:
            raise ValueError(
                f"{m.name}: pre-training data restricted to {lo} <= N <= {hi}, got {m.n}"
            )
        rng = np.random.default_rng([seed, idx])
        seen = set()
        for _ in range(samples_per_multimer):
            edges = random_uca_edges(m.n, rng)
            if edges in seen:
                continue
            seen.add(edges)
            y = assembly_correctness(AssemblyGraph.over(m.n, edges), m)
            out.append(SourceInstance(multimer=m.name, n=m.n, edges=edges, y=y))
    return out


def make_target_dataset(multimer, seed, starts=1, keep_threshold=KEEP_THRESHOLD,
                        cap=CONDITION_CAP):
    """Docking-action records grown level by level from random start chains.

    During growth an extension is kept (as a record and as a further growth
    condition) only when its correctness exceeds ``keep_threshold``. A final
    sweep then revisits every retained condition graph — singleton starts
    included — and records every possible extension with its true label, so
    wrong docking actions appear at every condition size.
    """
    if multimer.n < 3:
        raise ValueError("target data needs at least 3 chains")
    rng = as_rng(seed)
    all_nodes = set(range(multimer.n))
    records = []
    seen_records = set()

    def emit(cond, v_d, v_u, y):
        key = (cond.nodes, cond.edges, v_d, v_u)
        if key in seen_records:
            return
        seen_records.add(key)
        records.append(
            TargetInstance(
                multimer=multimer.name,
                n=multimer.n,
                cond_nodes=cond.nodes,
                cond_edges=cond.edges,
                v_d=v_d,
                v_u=v_u,
                y=y,
            )
        )

    start_chains = rng.choice(multimer.n, size=min(starts, multimer.n), replace=False)
    conditions = []
    seen_conditions = set()
    for start in sorted(int(s) for s in start_chains):
        cond = multimer.subgraph((start,), ())
        conditions.append(cond)
        seen_conditions.add(cond.key())
    retained = list(conditions)
    score_cache = {}

    def correctness(ext):
        key = ext.key()
        if key not in score_cache:
            score_cache[key] = assembly_correctness(ext, multimer)
        return score_cache[key]

    for size in range(1, multimer.n - 1):
        grown = []
        best_below = None
        for cond in conditions:
            undocked = sorted(all_nodes - set(cond.nodes))
            for v_d in cond.nodes:
                for v_u in undocked:
                    ext = multimer.subgraph(
                        tuple(cond.nodes) + (v_u,), cond.edges + ((v_d, v_u),)
                    )
                    y = correctness(ext)
                    if y > keep_threshold:
                        emit(cond, v_d, v_u, y)
                        if ext.key() not in seen_conditions:
                            seen_conditions.add(ext.key())
                            grown.append((y, ext, (cond, v_d, v_u)))
                    elif best_below is None or y > best_below[0]:
                        best_below = (y, ext, (cond, v_d, v_u))
        if not grown:
            # dead end: push through the least-bad extension so growth continues
            y, ext, (cond, v_d, v_u) = best_below
            warnings.warn(
                f"{multimer.name}: no extension above {keep_threshold} at size "
                f"{size}; keeping best scorer ({y:.3f})",
                NoValidGrowthWarning,
            )
            emit(cond, v_d, v_u, y)
            grown = [(y, ext, None)]
        grown.sort(key=lambda item: (-item[0], item[1].edges))
        conditions = [ext for _, ext, _ in grown[:cap]]
        retained.extend(conditions)

    # final sweep: every retained condition, every extension, true labels —
    # this is where wrong actions (low y) enter the dataset
    for cond in retained:
        undocked = sorted(all_nodes - set(cond.nodes))
        for v_d in cond.nodes:
            for v_u in undocked:
                ext = multimer.subgraph(
                    tuple(cond.nodes) + (v_u,), cond.edges + ((v_d, v_u),)
                )
                emit(cond, v_d, v_u, correctness(ext))
    return records


# ---------------------------------------------------------------------------
# persistence: line-delimited records, one JSON object per line


def _coords_list(arr):
    return [[float(v) for v in row] for row in arr]


def multimer_to_dict(m, seed=None):
    d = {
        "name": m.name,
        "version": GENERATOR_VERSION,
        "n": m.n,
        "chains": [
            {"id": c.chain_id, "sequence": c.sequence, "coords": _coords_list(c.coords)}
            for c in m.chains
        ],
        "gt": [_coords_list(g) for g in m.gt_coords],
        "contacts": sorted(m.contact_edges),
        "dimers": {
            f"{a}-{b}": [_coords_list(x) for x in m.dimers.get(a, b)]
            for a, b in m.dimers.pairs()
        },
    }
    if seed is not None:
        d["seed"] = seed
    return d


def multimer_from_dict(d):
    chains = tuple(
        ChainStructure(c["id"], c["sequence"], np.array(c["coords"]))
        for c in d["chains"]
    )
    dimers = DimerLibrary()
    for key, (xa, xb) in d["dimers"].items():
        a, b = key.split("-")
        dimers.add(int(a), int(b), np.array(xa), np.array(xb))
    return Multimer(
        name=d["name"],
        chains=chains,
        gt_coords=tuple(np.array(g) for g in d["gt"]),
        dimers=dimers,
        contact_edges=frozenset(tuple(e) for e in d["contacts"]),
    )


def save_jsonl(path, dicts):
    text = "".join(json.dumps(d, sort_keys=True) + "\n" for d in dicts)
    atomic_write_text(path, text)


def load_jsonl(path):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(f"bad JSON record: {exc}", lineno) from None
    return out


def save_multimers(path, multimers, seeds=None):
    seeds = seeds or {}
    save_jsonl(path, (multimer_to_dict(m, seeds.get(m.name)) for m in multimers))


def load_multimers(path):
    return {d["name"]: multimer_from_dict(d) for d in load_jsonl(path)}


def save_source_dataset(path, instances):
    save_jsonl(path, (asdict(i) for i in instances))


def load_source_dataset(path):
    rows = load_jsonl(path)
    if not rows:
        raise EmptyDatasetError(f"no records in {path}")
    return [
        SourceInstance(
            multimer=r["multimer"],
            n=int(r["n"]),
            edges=canonical_edges(r["edges"]),
            y=float(r["y"]),
        )
        for r in rows
    ]


def save_target_dataset(path, instances):
    save_jsonl(path, (asdict(i) for i in instances))


def load_target_dataset(path):
    rows = load_jsonl(path)
    if not rows:
        raise EmptyDatasetError(f"no records in {path}")
    return [
        TargetInstance(
            multimer=r["multimer"],
            n=int(r["n"]),
            cond_nodes=tuple(int(v) for v in r["cond_nodes"]),
            cond_edges=canonical_edges(r["cond_edges"]),
            v_d=int(r["v_d"]),
            v_u=int(r["v_u"]),
            y=float(r["y"]),
        )
        for r in rows
    ]
