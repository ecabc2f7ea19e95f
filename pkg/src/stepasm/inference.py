"""Greedy docking-path inference, structure reconstruction, and evaluation.

Inference runs N-1 steps. The first step scores every ordered chain pair
(d, u) under a singleton condition graph {d}; each later step, with k chains
docked, scores all k(N-k) docked/undocked pairs against the current partial
assembly and appends the argmax action. While the assembly (after the action)
still has at most 7 chains the meta-initialized prompt scores the candidates;
beyond that the large-scale-adapted prompt takes over.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import (
    LengthMismatchError,
    MissingDimerError,
    ShapeMismatchError,
    UntrainedPipelineError,
    ZeroVarianceError,
)
from .geometry import superposed_scores
from .graphs import AssemblyGraph, canonical_edges, place_chains
from .prompt import PromptItem, pipeline_forward_batch

logger = logging.getLogger("stepasm")

SMALL_ASSEMBLY_MAX = 7  # largest post-action size still scored by the meta prompt


@dataclass(frozen=True)
class DockingPath:
    """Ordered assembly actions with their linking probabilities."""

    actions: tuple  # ((v_d, v_u), ...) in execution order
    probs: tuple
    per_step_evals: tuple = ()

    def __post_init__(self):
        if len(self.actions) != len(self.probs):
            raise LengthMismatchError("one probability per action required")
        AssemblyGraph.over(len(self.actions) + 1, self.actions)  # tree check

    @property
    def n(self):
        return len(self.actions) + 1

    def edges(self):
        return canonical_edges(self.actions)

    def implied_graph(self, attrs=None):
        return AssemblyGraph.over(self.n, self.actions, attrs)

    def to_text(self):
        lines = [f"# docking path: {self.n} chains, {len(self.actions)} actions"]
        for i, ((d, u), p) in enumerate(zip(self.actions, self.probs), start=1):
            lines.append(f"{i}\t{d}\t{u}\t{p!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        actions, probs = [], []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            _, d, u, p = line.split("\t")
            actions.append((int(d), int(u)))
            probs.append(float(p))
        return cls(tuple(actions), tuple(probs))


class ScoringPipeline:
    """Frozen encoder + head + prompt bundled behind a batched pair scorer."""

    def __init__(self, gin, head, prompt):
        if gin is None or head is None or prompt is None:
            raise UntrainedPipelineError("encoder, head, and prompt must all be provided")
        self.gin = gin
        self.head = head
        self.prompt = prompt
        self.eval_count = 0

    def score_actions(self, chain_features, cond_nodes, cond_edges, pairs):
        """Probabilities for candidate (v_d, v_u) actions under one condition graph."""
        nodes = tuple(sorted(cond_nodes))
        feats = chain_features[list(nodes)]
        pos = {v: i for i, v in enumerate(nodes)}
        local = tuple((pos[a], pos[b]) for a, b in cond_edges)
        items = [
            PromptItem(
                cond_features=feats,
                cond_edges=local,
                d_local=pos[d],
                u_feature=chain_features[u],
                y=0.0,
                multimer="",
                n=chain_features.shape[0],
            )
            for d, u in pairs
        ]
        out = pipeline_forward_batch(items, self.gin, self.head, self.prompt)
        self.eval_count += len(pairs)
        return out.data.ravel()


def _pick(pairs, scores, dimers):
    """Argmax with (prob desc, v_d asc, v_u asc) order; skips missing dimers."""
    order = sorted(range(len(pairs)), key=lambda i: (-scores[i], pairs[i]))
    for i in order:
        d, u = pairs[i]
        if dimers is None or dimers.has(d, u):
            if i != order[0]:
                logger.warning(
                    "dimer missing for preferred pair %s; using (%d, %d) instead",
                    pairs[order[0]], d, u,
                )
            return pairs[i], float(scores[i])
    raise MissingDimerError("no candidate action has a stored dimer")


def infer_path(chain_features, small_pipeline, large_pipeline=None, dimers=None):
    """Greedy N-1 step docking path for one multimer.

    ``chain_features`` is the (N, d) chain-embedding matrix. The large-scale
    pipeline is only consulted once the post-action assembly exceeds
    7 chains; omitting it is fine for small complexes.
    """
    chain_features = np.asarray(chain_features, dtype=np.float64)
    n = chain_features.shape[0]
    if n < 2:
        raise ValueError("need at least two chains")
    if n > SMALL_ASSEMBLY_MAX and large_pipeline is None:
        raise UntrainedPipelineError(
            f"assemblies beyond {SMALL_ASSEMBLY_MAX} chains need the adapted prompt"
        )
    actions, probs, evals = [], [], []
    docked = []
    edges = []
    while len(actions) < n - 1:
        post_size = 2 if not docked else len(docked) + 1
        pipe = small_pipeline if post_size <= SMALL_ASSEMBLY_MAX else large_pipeline
        before = pipe.eval_count
        if not docked:
            # first action: every ordered pair under a singleton condition {d}
            pairs, scores = [], []
            for d in range(n):
                cand = [(d, u) for u in range(n) if u != d]
                s = pipe.score_actions(chain_features, (d,), (), cand)
                pairs.extend(cand)
                scores.extend(s.tolist())
            (d, u), p = _pick(pairs, np.array(scores), dimers)
            docked = [d, u] if d < u else [u, d]
        else:
            undocked = [u for u in range(n) if u not in docked]
            pairs = [(d, u) for d in sorted(docked) for u in undocked]
            scores = pipe.score_actions(chain_features, tuple(docked), tuple(edges), pairs)
            (d, u), p = _pick(pairs, scores, dimers)
            docked = sorted(docked + [u])
        edges.append((d, u) if d < u else (u, d))
        actions.append((d, u))
        probs.append(p)
        evals.append(pipe.eval_count - before)
    return DockingPath(tuple(actions), tuple(probs), tuple(evals))


def expected_step_evals(n):
    """Closed-form per-step scoring cost: full pairing first, then k(N-k)."""
    return tuple([n * (n - 1)] + [k * (n - k) for k in range(2, n)])


def predict_structure(chains, dimers, path):
    """Per-chain coordinates from walking the path's actions in order."""
    if path.n != len(chains):
        raise LengthMismatchError(
            f"path covers {path.n} chains, input has {len(chains)}"
        )
    placed = place_chains(path.actions, dimers)
    return [placed[i] for i in range(len(chains))]


@dataclass(frozen=True)
class EvalReport:
    """Per-sample structural scores plus their aggregates."""

    rows: tuple  # (name, tm, rmsd)
    tm_mean: float
    tm_median: float
    rmsd_mean: float
    rmsd_median: float

    @classmethod
    def from_rows(cls, rows):
        tms = np.array([r[1] for r in rows])
        rmsds = np.array([r[2] for r in rows])
        return cls(
            rows=tuple(rows),
            tm_mean=float(tms.mean()),
            tm_median=float(np.median(tms)),
            rmsd_mean=float(rmsds.mean()),
            rmsd_median=float(np.median(rmsds)),
        )

    def to_dict(self):
        return {
            "rows": [
                {"name": n, "tm": t, "rmsd": r} for n, t, r in self.rows
            ],
            "tm_mean": self.tm_mean,
            "tm_median": self.tm_median,
            "rmsd_mean": self.rmsd_mean,
            "rmsd_median": self.rmsd_median,
        }

    def to_text(self):
        lines = [f"{'sample':<24}{'TM':>10}{'RMSD':>12}"]
        for name, tm, rmsd in self.rows:
            lines.append(f"{name:<24}{tm:>10.4f}{rmsd:>12.3f}")
        lines.append(
            f"{'mean':<24}{self.tm_mean:>10.4f}{self.rmsd_mean:>12.3f}"
        )
        lines.append(
            f"{'median':<24}{self.tm_median:>10.4f}{self.rmsd_median:>12.3f}"
        )
        return "\n".join(lines) + "\n"


def evaluate(predictions, ground_truths, names=None):
    """Whole-complex TM and RMSD per sample after one global superposition."""
    if len(predictions) != len(ground_truths):
        raise LengthMismatchError("prediction and ground-truth counts differ")
    if not predictions:
        raise LengthMismatchError("nothing to evaluate")
    names = names or [f"sample-{i}" for i in range(len(predictions))]
    rows = []
    for name, pred, gt in zip(names, predictions, ground_truths):
        p = np.concatenate([np.asarray(c) for c in pred])
        g = np.concatenate([np.asarray(c) for c in gt])
        tm, rmsd = superposed_scores(p, g)
        rows.append((name, tm, rmsd))
    return EvalReport.from_rows(rows)


def cka_similarity(h_a, h_b):
    """Linear centered-kernel-alignment similarity between representations.

    Rows are samples (must match); columns may differ. 1 means identical up
    to orthogonal transforms and scaling; independent features approach 0.
    """
    a = np.asarray(h_a, dtype=np.float64)
    b = np.asarray(h_b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeMismatchError("CKA expects 2-D matrices")
    if a.shape[0] != b.shape[0]:
        raise ShapeMismatchError(
            f"row counts differ: {a.shape[0]} vs {b.shape[0]}"
        )
    a = a - a.mean(axis=0)
    b = b - b.mean(axis=0)
    cross = np.linalg.norm(a.T @ b) ** 2
    norm_a = np.linalg.norm(a.T @ a)
    norm_b = np.linalg.norm(b.T @ b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVarianceError("an input has no variance; CKA undefined")
    return float(cross / (norm_a * norm_b))
