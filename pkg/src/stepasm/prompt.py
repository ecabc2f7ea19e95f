"""Conditional link prediction through prompting.

A candidate docking action (condition graph, docked node v_d, undocked node
v_u) is rewritten as a 4-node path v_d - v_x - v_y - v_u. The end nodes carry
the frozen encoder's context embeddings of v_d and v_u; the middle nodes are
produced by a trainable MLP from those embeddings. Scoring the path with the
frozen encoder + head yields the linking probability, so only the MLP is
trained on target data.
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    EmptyDatasetError,
    NodeCollisionError,
    ShapeMismatchError,
)
from .nn.model import MLPParams, gin_encode
from .nn.tensor import (
    Tensor,
    as_tensor,
    concat_rows,
    gather_rows,
    mul,
    muls,
    segment_sum,
    sigmoid,
    sub,
)
from .training import TrainConfig, fit

PROMPT_EDGES = ((0, 1), (1, 2), (2, 3))

# The frozen encoder only ever saw node features inside [0, ~0.65], so the
# prompt MLP squashes its output into that range; an unbounded output can
# drift into regions where every ReLU in the frozen pass is dead and the
# prompt gradient vanishes identically.
OUTPUT_SCALE = 0.7


@dataclass(frozen=True)
class PromptTuneConfig:
    train: TrainConfig = None
    mlp_hidden: int = 1024
    heads: int = 4
    multi_head: bool = False
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.train is None:
            object.__setattr__(self, "train", TrainConfig(lr=0.001, loss="bce"))


class PromptParams:
    """The trainable prompt MLP plus its attention configuration.

    The MLP maps a d-dim context embedding to a d-dim prompt-node feature
    through two hidden layers; a scaled logistic pins the output inside the
    frozen encoder's input domain. Attention between the two context
    embeddings is a softmax over scalar scores: with a single head that
    softmax is over one logit and collapses to weight 1, which is the default
    behavior; the 4-head variant splits dimensions into blocks and reweights
    them.
    """

    def __init__(self, mlp, heads=4, multi_head=False, dropout=0.2,
                 in_shift=None, in_scale=None):
        self.mlp = mlp
        self.heads = int(heads)
        self.multi_head = bool(multi_head)
        self.dropout = float(dropout)
        d = self.mlp.dims[0]
        self.in_shift = in_shift if in_shift is not None else Tensor(np.zeros(d))
        self.in_scale = in_scale if in_scale is not None else Tensor(np.ones(d))

    @classmethod
    def init(cls, embed_dim, mlp_hidden, seed, heads=4, multi_head=False, dropout=0.2):
        rng = np.random.default_rng(seed)
        mlp = MLPParams.init((embed_dim, mlp_hidden, mlp_hidden, embed_dim), rng)
        return cls(mlp, heads=heads, multi_head=multi_head, dropout=dropout)

    @property
    def dim(self):
        return self.mlp.dims[0]

    def head_blocks(self):
        return np.array_split(np.arange(self.dim), self.heads)

    def standardize_from(self, rows):
        """Set input whitening buffers from stacked query-embedding rows.

        Context embeddings differ across docking actions by far less than
        their absolute scale, so without whitening the MLP barely sees the
        per-action signal.
        """
        rows = np.asarray(rows, dtype=np.float64)
        self.in_shift.data = rows.mean(axis=0)
        self.in_scale.data = 1.0 / np.maximum(rows.std(axis=0), 1e-3)

    def transform(self, x, *, training=False, rng=None):
        z = mul(sub(x, self.in_shift), self.in_scale)
        out = self.mlp.forward(z, training=training, rng=rng, drop=self.dropout)
        return muls(sigmoid(out), OUTPUT_SCALE)

    def named(self, prefix="prompt"):
        out = self.mlp.named(prefix)
        out[f"{prefix}.in_shift"] = self.in_shift
        out[f"{prefix}.in_scale"] = self.in_scale
        return out

    def trainable_named(self, prefix="prompt"):
        return {k: t for k, t in self.named(prefix).items() if t.requires_grad}

    def copy(self):
        return PromptParams(
            self.mlp.copy(), heads=self.heads, multi_head=self.multi_head,
            dropout=self.dropout,
            in_shift=Tensor(self.in_shift.data.copy()),
            in_scale=Tensor(self.in_scale.data.copy()),
        )

    def set_trainable(self, flag):
        # whitening buffers are data statistics, never optimized
        self.mlp.set_trainable(flag)


@dataclass(frozen=True)
class PromptGraph:
    """4-node path v_d - v_x - v_y - v_u with per-node feature rows."""

    features: Tensor
    edges: tuple = PROMPT_EDGES
    roles: tuple = ("d", "x", "y", "u")

    def __post_init__(self):
        if self.features.data.shape[0] != 4:
            raise ShapeMismatchError("prompt graph needs exactly 4 node rows")
        if tuple(self.edges) != PROMPT_EDGES:
            raise ShapeMismatchError("prompt graph edges must form the fixed path")
        if self.roles[0] != "d" or self.roles[-1] != "u":
            raise ShapeMismatchError("query nodes must sit at the path ends")


def build_prompt_graph(h_d, h_x, h_y, h_u):
    return PromptGraph(features=concat_rows([h_d, h_x, h_y, h_u]))


@dataclass(frozen=True)
class PromptItem:
    """One docking action prepared for the pipeline: condition + query features."""

    cond_features: np.ndarray
    cond_edges: tuple
    d_local: int
    u_feature: np.ndarray
    y: float
    multimer: str
    n: int


def build_items(instances, multimers):
    items = []
    for inst in instances:
        m = multimers[inst.multimer]
        cond = inst.condition(m)
        items.append(
            PromptItem(
                cond_features=cond.attrs,
                cond_edges=cond.local_edges(),
                d_local=cond.nodes.index(inst.v_d),
                u_feature=m.chain_features[inst.v_u],
                y=inst.y,
                multimer=inst.multimer,
                n=inst.n,
            )
        )
    return items


def compute_node_embeddings(cond_graph, v_u, u_feature, gin):
    """Encoder embeddings for condition nodes plus the isolated candidate v_u.

    Returns (H, rows): H has one row per condition node (sorted label order)
    and the candidate's row last; rows maps node label -> row index.
    """
    if v_u in cond_graph.nodes:
        raise NodeCollisionError(f"candidate chain {v_u} already sits in the condition graph")
    if cond_graph.attrs is None:
        raise ShapeMismatchError("condition graph carries no node features")
    features = np.vstack([cond_graph.attrs, np.asarray(u_feature, dtype=np.float64)])
    h = gin_encode(features, cond_graph.local_edges(), gin)
    rows = {v: i for i, v in enumerate(cond_graph.nodes)}
    rows[v_u] = len(cond_graph.nodes)
    return h, rows


def _head_weight_rows(h_d, h_u, prompt):
    """Per-dimension attention weights, one row per instance (constant wrt π)."""
    d_data = np.atleast_2d(h_d.data if isinstance(h_d, Tensor) else h_d)
    u_data = np.atleast_2d(h_u.data if isinstance(h_u, Tensor) else h_u)
    weights = np.empty_like(d_data)
    blocks = prompt.head_blocks()
    scores = np.stack(
        [(d_data[:, blk] * u_data[:, blk]).sum(axis=1) for blk in blocks], axis=1
    )
    scores -= scores.max(axis=1, keepdims=True)
    soft = np.exp(scores)
    soft /= soft.sum(axis=1, keepdims=True)
    for k, blk in enumerate(blocks):
        weights[:, blk] = soft[:, k : k + 1]
    return weights


def prompt_embeddings(h_d, h_u, prompt, *, training=False, rng=None):
    """Middle-node features (H_x, H_y) from the two query embeddings.

    Default mode mirrors the single-vector attention exactly: the softmax of
    one scalar score is 1, so H_x depends only on H_u and H_y only on H_d.
    """
    h_d = as_tensor(h_d)
    h_u = as_tensor(h_u)
    d2 = Tensor(np.atleast_2d(h_d.data)) if h_d.data.ndim == 1 else h_d
    u2 = Tensor(np.atleast_2d(h_u.data)) if h_u.data.ndim == 1 else h_u
    if d2.data.shape != u2.data.shape or d2.data.shape[1] != prompt.dim:
        raise ShapeMismatchError(
            f"query embeddings must be rows of width {prompt.dim}"
        )
    if prompt.multi_head:
        w = Tensor(_head_weight_rows(d2, u2, prompt))
        x_in = mul(u2, w)
        y_in = mul(d2, w)
    else:
        # softmax over the single scalar score H_d . H_u is identically 1
        x_in = u2
        y_in = d2
    h_x = prompt.transform(x_in, training=training, rng=rng)
    h_y = prompt.transform(y_in, training=training, rng=rng)
    return h_x, h_y


def query_embeddings(items, gin, *, training=False, rng=None):
    """(h_d, h_u) rows for a batch of docking actions, one encoder pass.

    Every condition graph plus its isolated candidate chain goes through the
    encoder as one disjoint union; the rows of v_d and v_u come back out.
    """
    if not items:
        raise EmptyDatasetError("no items to score")
    feats, edges, d_rows, u_rows = [], [], [], []
    offset = 0
    for it in items:
        k = it.cond_features.shape[0]
        feats.append(it.cond_features)
        feats.append(np.asarray(it.u_feature, dtype=np.float64)[None, :])
        edges.extend((a + offset, b + offset) for a, b in it.cond_edges)
        d_rows.append(offset + it.d_local)
        u_rows.append(offset + k)
        offset += k + 1
    h = gin_encode(np.concatenate(feats, axis=0), edges, gin, training=training, rng=rng)
    return gather_rows(h, d_rows), gather_rows(h, u_rows)


def pipeline_forward_batch(items, gin, head, prompt, *, training=False, rng=None):
    """(B, 1) linking probabilities for a batch of docking actions.

    Stage 1 encodes every condition graph (plus its isolated candidate) as one
    disjoint union; stage 2 scores all B prompt paths the same way.
    """
    h_d, h_u = query_embeddings(items, gin, training=training, rng=rng)
    h_x, h_y = prompt_embeddings(h_d, h_u, prompt, training=training, rng=rng)

    b = len(items)
    path_feats = concat_rows([h_d, h_x, h_y, h_u])  # rows grouped by role
    path_edges = []
    for i in range(b):
        trip = ((i, b + i), (b + i, 2 * b + i), (2 * b + i, 3 * b + i))
        path_edges.extend(trip)
    seg = np.tile(np.arange(b, dtype=np.intp), 4)
    h2 = gin_encode(path_feats, path_edges, gin, training=training, rng=rng)
    pooled = segment_sum(h2, seg, b)
    return head.score(pooled, training=training, rng=rng, drop=gin.config.dropout)


def pipeline_forward(cond_graph, v_d, v_u, u_feature, gin, head, prompt):
    """Linking probability in (0, 1) for a single docking action (eval mode)."""
    if v_d not in cond_graph.nodes:
        raise ValueError(f"docked node {v_d} not in the condition graph")
    h, rows = compute_node_embeddings(cond_graph, v_u, u_feature, gin)
    h_d = gather_rows(h, [rows[v_d]])
    h_u = gather_rows(h, [rows[v_u]])
    h_x, h_y = prompt_embeddings(h_d, h_u, prompt)
    pg = build_prompt_graph(h_d, h_x, h_y, h_u)
    h2 = gin_encode(pg.features, pg.edges, gin)
    pooled = segment_sum(h2, np.zeros(4, dtype=np.intp), 1)
    return float(head.score(pooled).data[0, 0])


def prompt_tune(items, gin, head, cfg=None, init=None):
    """Tune only the prompt MLP on docking-action labels; returns (prompt, log).

    The encoder and head are set non-trainable on entry, so no gradient ever
    reaches them; validation holds out whole multimers as in pre-training.
    """
    cfg = cfg or PromptTuneConfig()
    if not items:
        raise EmptyDatasetError("no target items")
    gin.set_trainable(False)
    head.set_trainable(False)
    if init is not None:
        prompt = init.copy()
    else:
        prompt = PromptParams.init(
            gin.config.input_dim, cfg.mlp_hidden, [cfg.seed, 20],
            heads=cfg.heads, multi_head=cfg.multi_head, dropout=cfg.dropout,
        )
        h_d, h_u = query_embeddings(items, gin)
        prompt.standardize_from(np.concatenate([h_d.data, h_u.data], axis=0))

    def forward(indices, training, rng):
        return pipeline_forward_batch(
            [items[i] for i in indices], gin, head, prompt,
            training=training, rng=rng,
        )

    labels = [it.y for it in items]
    keys = [it.multimer for it in items]
    log = fit(labels, keys, forward, prompt.trainable_named(), cfg.train, cfg.seed)
    return prompt, log
