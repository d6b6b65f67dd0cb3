"""Heterogeneous GNN encoder, regression head, and both training regimes.

Layer rule, per node and layer: new = act(self_transform(old) + sum over
relations of W_rel @ (edge-weight-weighted mean of neighbor vectors)), with
ReLU between layers and identity on the last. Regions start from a linear
projection of [e_pos, e_env, e_soc]; entity nodes start from learnable
embeddings. The head is a three-layer MLP (d -> d -> d -> 1, ReLU between).

Training regimes:
  * end-to-end: full-batch Adam on the MSE over train regions, early stopping
    on validation MSE, best-validation parameters restored;
  * self-supervised: InfoNCE pretraining of the backbone (anchors scored
    against mean-pooled positive sets, in-batch negatives), then a fresh head
    fine-tuned on the frozen embedding matrix.

Internally all node rows are kept in a canonical order obtained by
lexicographically sorting the raw region feature rows (positions make rows
distinct), and every edge plan is frozen in that order. Relabeling regions
therefore changes nothing but the final row gather, which makes the forward
pass exactly permutation-equivariant, bit for bit.
"""

from __future__ import annotations

import json
import hashlib
import warnings
from dataclasses import dataclass, asdict
from typing import TYPE_CHECKING, Optional, Sequence

import numpy as np

from . import tensor as T
from .tensor import AdamState, AggregationPlan, NumericError, Tensor
from .geodata import GeoDataError, LabelSet, Region
from .features import RegionFeatures, feature_matrix
from .hetgraph import HeteroGraph

if TYPE_CHECKING:  # pragma: no cover
    from .evaluation import EvalSplit

RELATIONS = ("rnr", "elr_r2e", "elr_e2r", "slr_r2e", "slr_e2r")
LABEL_TRANSFORMS = ("zscore", "log1p+zscore")
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HgnnConfig:
    n_layers: int = 3
    hidden_dim: int = 64
    relations: tuple[str, ...] = RELATIONS
    use_self_loop: bool = True
    label_transform: str = "zscore"
    seed: int = 0
    lr: float = 2e-3
    max_epochs: int = 1000
    patience: int = 50
    normalize_pos: bool = True

    def __post_init__(self) -> None:
        if not 1 <= self.n_layers <= 3:
            raise ValueError(f"n_layers must be 1..3, got {self.n_layers}")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")
        if self.label_transform not in LABEL_TRANSFORMS:
            raise ValueError(f"unknown label transform {self.label_transform!r}")
        unknown = set(self.relations) - set(RELATIONS)
        if unknown:
            raise ValueError(f"unknown relations {sorted(unknown)}")
        if self.lr <= 0 or self.max_epochs < 1 or self.patience < 1:
            raise ValueError("lr, max_epochs and patience must be positive")


@dataclass(frozen=True)
class SslConfig:
    temperature: float = 0.1
    top_k: int = 4
    batch_size: int = 64
    epochs: int = 60
    pooling: str = "mean"
    lr: float = 2e-3
    seed: int = 0

    def __post_init__(self) -> None:
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.top_k < 0:
            raise ValueError("top_k must be >= 0")
        if self.batch_size < 2:
            raise ValueError("batch size must be >= 2")
        if self.pooling != "mean":
            raise ValueError(f"unsupported pooling {self.pooling!r}")


@dataclass
class ModelState:
    """All learnable parameters plus label-transform statistics."""

    config: HgnnConfig
    n_env: int
    n_soc: int
    params: dict[str, np.ndarray]
    label_mean: float = 0.0
    label_std: float = 1.0
    trained: bool = False

    @property
    def in_dim(self) -> int:
        return 2 + self.n_env + self.n_soc

    def backbone_names(self) -> list[str]:
        return [k for k in self.params if not k.startswith("head.")]


@dataclass
class HeadState:
    """Stand-alone regression head fine-tuned on frozen embeddings."""

    config: HgnnConfig
    params: dict[str, np.ndarray]
    label_mean: float = 0.0
    label_std: float = 1.0
    trained: bool = False


def _head_param_shapes(d: int) -> list[tuple[str, tuple[int, int], bool]]:
    return [("head.0.w", (d, d), True), ("head.0.b", (1, d), False),
            ("head.1.w", (d, d), True), ("head.1.b", (1, d), False),
            ("head.2.w", (d, 1), True), ("head.2.b", (1, 1), False)]


def init_state(config: HgnnConfig, n_env: int, n_soc: int) -> ModelState:
    """Seeded parameter init: Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(config.seed)
    d = config.hidden_dim
    in_dim = 2 + n_env + n_soc
    params: dict[str, np.ndarray] = {}
    params["w_in"] = T.glorot_uniform(rng, in_dim, d)
    params["b_in"] = np.zeros((1, d))
    params["entity_emb"] = T.glorot_uniform(rng, d, d, shape=(n_env + n_soc, d))
    for layer in range(config.n_layers):
        params[f"layer{layer}.self.w"] = T.glorot_uniform(rng, d, d)
        params[f"layer{layer}.self.b"] = np.zeros((1, d))
        for rel in config.relations:
            params[f"layer{layer}.{rel}.w"] = T.glorot_uniform(rng, d, d)
            params[f"layer{layer}.{rel}.b"] = np.zeros((1, d))
    for name, shape, is_weight in _head_param_shapes(d):
        params[name] = (T.glorot_uniform(rng, shape[0], shape[1])
                        if is_weight else np.zeros(shape))
    return ModelState(config=config, n_env=n_env, n_soc=n_soc, params=params)


def init_head(config: HgnnConfig, d: int) -> HeadState:
    rng = np.random.default_rng(config.seed)
    params: dict[str, np.ndarray] = {}
    for name, shape, is_weight in _head_param_shapes(d):
        params[name] = (T.glorot_uniform(rng, shape[0], shape[1])
                        if is_weight else np.zeros(shape))
    return HeadState(config=config, params=params)


# ---------------------------------------------------------------------------
# graph preparation (canonical internal ordering)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphTensors:
    """Immutable per-run tensors: canonical-order inputs and frozen edge plans."""

    n_regions: int
    n_nodes: int
    x: np.ndarray                      # (n_regions, in_dim), canonical order
    order: np.ndarray                  # internal row -> external region index
    rank: np.ndarray                   # external region index -> internal row
    plans: dict[str, AggregationPlan]  # per relation, over all node rows
    masks: dict[str, np.ndarray]       # (n_nodes, 1) has-in-edge indicator


def prepare_graph(graph: HeteroGraph, features: Sequence[RegionFeatures],
                  config: HgnnConfig) -> GraphTensors:
    if len(features) != graph.n_regions:
        raise GeoDataError(f"graph has {graph.n_regions} regions, "
                           f"features {len(features)}")
    if features[0].e_env.size != graph.n_env or \
            features[0].e_soc.size != graph.n_soc:
        raise GeoDataError("feature dimensions disagree with graph entity counts")
    raw = feature_matrix(features)
    n = graph.n_regions
    order = np.lexsort(raw.T[::-1])
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    x = raw[order].copy()
    if config.normalize_pos:
        # Min-max per position axis; degenerate span maps to 0.
        for col in (0, 1):
            lo, hi = x[:, col].min(), x[:, col].max()
            x[:, col] = (x[:, col] - lo) / (hi - lo) if hi > lo else 0.0

    def region_rows(ext: np.ndarray) -> np.ndarray:
        return rank[ext]

    plans: dict[str, AggregationPlan] = {}
    rnr = graph.edges_rnr
    if "rnr" in config.relations:
        u = region_rows(rnr.endpoints[:, 0])
        v = region_rows(rnr.endpoints[:, 1])
        plans["rnr"] = T.build_plan(np.concatenate([u, v]),
                                    np.concatenate([v, u]),
                                    np.concatenate([rnr.weights, rnr.weights]),
                                    n_out=graph.n_nodes)
    for fam, r2e, e2r in ((graph.edges_elr, "elr_r2e", "elr_e2r"),
                          (graph.edges_slr, "slr_r2e", "slr_e2r")):
        reg = region_rows(fam.endpoints[:, 0])
        ent = fam.endpoints[:, 1]    # entity ids are labeling-independent
        if r2e in config.relations:
            plans[r2e] = T.build_plan(reg, ent, fam.weights, n_out=graph.n_nodes)
        if e2r in config.relations:
            plans[e2r] = T.build_plan(ent, reg, fam.weights, n_out=graph.n_nodes)
    masks = {rel: plan.has_in_edge()[:, None] for rel, plan in plans.items()}
    return GraphTensors(n_regions=n, n_nodes=graph.n_nodes, x=x, order=order,
                        rank=rank, plans=plans, masks=masks)


# ---------------------------------------------------------------------------
# forward passes (single source of truth for training and inference)
# ---------------------------------------------------------------------------

def _leaves(params: dict[str, np.ndarray],
            trainable: Optional[set[str]] = None) -> dict[str, Tensor]:
    """Wrap parameter arrays as graph leaves; by default all require grad."""
    return {name: Tensor(arr, requires_grad=(trainable is None
                                             or name in trainable))
            for name, arr in params.items()}


def backbone_forward(gt: GraphTensors, leaves: dict[str, Tensor],
                     config: HgnnConfig) -> Tensor:
    """All-node embedding matrix in internal order (identity on last layer)."""
    x = Tensor(gt.x)
    h_regions = T.add(T.matmul(x, leaves["w_in"]), leaves["b_in"])
    h = T.concat_rows(h_regions, leaves["entity_emb"])
    for layer in range(config.n_layers):
        acc: Optional[Tensor] = None
        if config.use_self_loop:
            acc = T.add(T.matmul(h, leaves[f"layer{layer}.self.w"]),
                        leaves[f"layer{layer}.self.b"])
        for rel in config.relations:
            plan = gt.plans.get(rel)
            if plan is None or plan.n_edges == 0:
                continue
            agg = T.segment_mean(h, plan)
            # Relation bias only lands on nodes that have in-edges of this type.
            term = T.add(T.matmul(agg, leaves[f"layer{layer}.{rel}.w"]),
                         T.matmul(Tensor(gt.masks[rel]),
                                  leaves[f"layer{layer}.{rel}.b"]))
            acc = term if acc is None else T.add(acc, term)
        if acc is None:
            acc = T.scale(h, 0.0)
        h = T.relu(acc) if layer < config.n_layers - 1 else acc
    return h


def head_forward(embeddings: Tensor, leaves: dict[str, Tensor]) -> Tensor:
    a = T.relu(T.add(T.matmul(embeddings, leaves["head.0.w"]), leaves["head.0.b"]))
    a = T.relu(T.add(T.matmul(a, leaves["head.1.w"]), leaves["head.1.b"]))
    return T.add(T.matmul(a, leaves["head.2.w"]), leaves["head.2.b"])


def mse_training_loss(gt: GraphTensors, leaves: dict[str, Tensor],
                      config: HgnnConfig, train_internal: np.ndarray,
                      targets: np.ndarray) -> tuple[Tensor, Tensor]:
    """(scalar MSE over train rows, full prediction column) for one forward."""
    h = backbone_forward(gt, leaves, config)
    region_rows = T.gather_rows(h, np.arange(gt.n_regions))
    preds = head_forward(region_rows, leaves)
    pred_train = T.gather_rows(preds, train_internal)
    err = T.sub(pred_train, Tensor(targets.reshape(-1, 1)))
    return T.mean_all(T.square(err)), preds


def infonce_loss(gt: GraphTensors, leaves: dict[str, Tensor], config: HgnnConfig,
                 anchors_internal: np.ndarray, positive_plan: AggregationPlan,
                 temperature: float) -> Tensor:
    """InfoNCE over one batch: anchors vs mean-pooled positives, in-batch negatives."""
    h = backbone_forward(gt, leaves, config)
    anchors = T.gather_rows(h, anchors_internal)
    pooled = T.segment_mean(h, positive_plan)
    scores = T.scale(T.matmul_t(anchors, pooled), 1.0 / temperature)
    return T.mean_all(T.sub(T.log_sum_exp(scores), T.diag(scores)))


# ---------------------------------------------------------------------------
# label transforms
# ---------------------------------------------------------------------------

def fit_label_transform(kind: str, train_values: np.ndarray) -> tuple[float, float]:
    """Mean/std on the training subset (after log1p when selected)."""
    v = np.asarray(train_values, dtype=np.float64)
    if kind == "log1p+zscore":
        if v.min() <= -1.0:
            raise ValueError("log1p transform needs values > -1")
        v = np.log1p(v)
    mean = float(v.mean())
    std = float(v.std())
    # Constant labels leave a float-rounding residue in std, so the
    # degenerate case is detected relative to the label magnitude.
    if not np.isfinite(std) or std <= 1e-12 * max(1.0, abs(mean)):
        std = 1.0     # keep the transform invertible
    return mean, std


def apply_label_transform(kind: str, values: np.ndarray, mean: float,
                          std: float) -> np.ndarray:
    v = np.asarray(values, dtype=np.float64)
    if kind == "log1p+zscore":
        v = np.log1p(v)
    return (v - mean) / std


def invert_label_transform(kind: str, z: np.ndarray, mean: float,
                           std: float) -> np.ndarray:
    v = np.asarray(z, dtype=np.float64) * std + mean
    if kind == "log1p+zscore":
        v = np.expm1(v)
    return v


# ---------------------------------------------------------------------------
# training regimes
# ---------------------------------------------------------------------------

LogRow = tuple[int, float, float]    # (epoch, train loss, validation loss)


def _region_positions(features: Sequence[RegionFeatures]) -> dict[Region, int]:
    return {f.region: i for i, f in enumerate(features)}


def _split_indices(pos: dict[Region, int], labels: LabelSet,
                   split: "EvalSplit") -> tuple[np.ndarray, np.ndarray,
                                                np.ndarray, np.ndarray]:
    values = labels.as_dict()
    try:
        train_ext = np.array([pos[r] for r in split.train], dtype=np.int64)
        val_ext = np.array([pos[r] for r in split.validation], dtype=np.int64)
        y_train = np.array([values[r] for r in split.train])
        y_val = np.array([values[r] for r in split.validation])
    except KeyError as exc:
        raise GeoDataError(f"split region {exc} has no features or label") from exc
    return train_ext, val_ext, y_train, y_val


def train_end_to_end(graph: HeteroGraph, features: Sequence[RegionFeatures],
                     labels: LabelSet, split: "EvalSplit",
                     config: HgnnConfig) -> tuple[ModelState, list[LogRow]]:
    """Full-batch Adam on train-region MSE with validation early stopping.

    The returned state carries the best-validation parameters; the log holds
    one (epoch, train MSE, validation MSE) row per epoch, both computed with
    the parameters in force before that epoch's update.
    """
    if len(split.train) == 0 or len(split.validation) == 0:
        raise ValueError("train and validation sets must be non-empty")
    gt = prepare_graph(graph, features, config)
    state = init_state(config, graph.n_env, graph.n_soc)
    train_ext, val_ext, y_train_raw, y_val_raw = _split_indices(
        _region_positions(features), labels, split)
    mean, std = fit_label_transform(config.label_transform, y_train_raw)
    y_train = apply_label_transform(config.label_transform, y_train_raw, mean, std)
    y_val = apply_label_transform(config.label_transform, y_val_raw, mean, std)
    train_internal = gt.rank[train_ext]
    val_internal = gt.rank[val_ext]

    adam = {name: T.adam_init(arr.shape, config.lr)
            for name, arr in state.params.items()}
    best_val = np.inf
    best_params = {name: arr.copy() for name, arr in state.params.items()}
    wait = 0
    log: list[LogRow] = []
    for epoch in range(config.max_epochs):
        leaves = _leaves(state.params)
        loss, preds = mse_training_loss(gt, leaves, config, train_internal,
                                        y_train)
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise NumericError(f"training diverged at epoch {epoch} "
                               f"(loss={train_loss})")
        val_loss = float(np.mean((preds.data[val_internal, 0] - y_val) ** 2))
        log.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = {name: leaf.data.copy()
                           for name, leaf in leaves.items()}
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break
        loss.backward()
        for name, leaf in leaves.items():
            grad = leaf.grad if leaf.grad is not None \
                else np.zeros_like(leaf.data)
            state.params[name], adam[name] = T.adam_step(
                state.params[name], grad, adam[name])
    state.params = best_params
    state.label_mean, state.label_std = mean, std
    state.trained = True
    return state, log


def positive_sets(graph: HeteroGraph, features: Sequence[RegionFeatures],
                  top_k: int) -> list[np.ndarray]:
    """Per region: spatially adjacent regions plus top-k cosine-similar ones.

    Similarity uses the raw feature rows; ties break toward the lower region
    index. Returned as sorted external-index arrays (anchor excluded).
    """
    n = graph.n_regions
    spatial: list[set[int]] = [set() for _ in range(n)]
    for u, v in graph.edges_rnr.endpoints:
        spatial[u].add(int(v))
        spatial[v].add(int(u))
    sets: list[np.ndarray] = []
    if top_k > 0:
        raw = feature_matrix(features)
        norms = np.sqrt((raw ** 2).sum(axis=1))
        norms[norms == 0.0] = 1.0
        sims = (raw @ raw.T) / np.outer(norms, norms)
        np.fill_diagonal(sims, -np.inf)
    for i in range(n):
        chosen = set(spatial[i])
        if top_k > 0:
            ranked = np.lexsort((np.arange(n), -sims[i]))
            chosen.update(int(j) for j in ranked[:min(top_k, n - 1)])
        chosen.discard(i)
        sets.append(np.array(sorted(chosen), dtype=np.int64))
    return sets


def pretrain_contrastive(graph: HeteroGraph, features: Sequence[RegionFeatures],
                         ssl: SslConfig,
                         config: Optional[HgnnConfig] = None
                         ) -> tuple[ModelState, np.ndarray, list[tuple[int, float]]]:
    """Contrastive backbone pretraining; returns (state, E_pretrain, loss log).

    Batches are uniform random permutation slices (full batches only); each
    anchor is scored against every batch member's mean-pooled positive set,
    its own being the positive pair. Anchors with no positives are skipped.
    """
    if config is None:
        config = HgnnConfig(seed=ssl.seed)
    if graph.n_regions < ssl.batch_size:
        raise ValueError(f"batch size {ssl.batch_size} exceeds "
                         f"{graph.n_regions} regions")
    gt = prepare_graph(graph, features, config)
    state = init_state(config, graph.n_env, graph.n_soc)
    positives_ext = positive_sets(graph, features, ssl.top_k)
    positives_int = [np.sort(gt.rank[p]) if p.size else p
                     for p in positives_ext]
    n_empty = sum(1 for p in positives_int if p.size == 0)
    if n_empty:
        warnings.warn(f"{n_empty} regions have no positives and are skipped",
                      stacklevel=2)
    rng = np.random.default_rng(ssl.seed)
    adam = {name: T.adam_init(arr.shape, ssl.lr)
            for name, arr in state.params.items()}
    log: list[tuple[int, float]] = []
    n = graph.n_regions
    for epoch in range(ssl.epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n - ssl.batch_size + 1, ssl.batch_size):
            idx_ext = [i for i in perm[start:start + ssl.batch_size]
                       if positives_int[i].size]
            if len(idx_ext) < 2:
                continue
            anchors_internal = gt.rank[np.array(idx_ext, dtype=np.int64)]
            plan = batch_positive_plan([positives_int[i] for i in idx_ext])
            leaves = _leaves(state.params)
            loss = infonce_loss(gt, leaves, config, anchors_internal, plan,
                                ssl.temperature)
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(f"pretraining diverged at epoch {epoch}")
            batch_losses.append(value)
            loss.backward()
            for name, leaf in leaves.items():
                grad = leaf.grad if leaf.grad is not None \
                    else np.zeros_like(leaf.data)
                state.params[name], adam[name] = T.adam_step(
                    state.params[name], grad, adam[name])
        log.append((epoch, float(np.mean(batch_losses)) if batch_losses
                    else float("nan")))
    state.trained = True
    embeddings = embed_regions(state, gt)
    return state, embeddings, log


def batch_positive_plan(positive_rows: Sequence[np.ndarray]) -> AggregationPlan:
    """Mean-pool plan: batch slot b aggregates its anchor's positive rows."""
    src = np.concatenate(positive_rows)
    dst = np.repeat(np.arange(len(positive_rows), dtype=np.int64),
                    [p.size for p in positive_rows])
    return T.build_plan(src, dst, np.ones(src.size), n_out=len(positive_rows))


def embed_regions(state: ModelState, gt: GraphTensors) -> np.ndarray:
    """Region embeddings in external order, no gradients recorded."""
    leaves = _leaves(state.params, trainable=set())
    h = backbone_forward(gt, leaves, state.config)
    out = h.data[:gt.n_regions][gt.rank]
    return T.require_finite(out, "region embeddings")


def hgnn_forward(graph: HeteroGraph, features: Sequence[RegionFeatures],
                 state: ModelState) -> np.ndarray:
    """Public forward: (n_regions, hidden_dim) embeddings in input order."""
    gt = prepare_graph(graph, features, state.config)
    return embed_regions(state, gt)


def finetune_head(e_pretrain: np.ndarray, labels: LabelSet, split: "EvalSplit",
                  config: HgnnConfig,
                  regions: Sequence[Region]) -> tuple[HeadState, list[LogRow]]:
    """Train only a fresh 3-layer head on the frozen embedding matrix.

    ``regions[i]`` names the region behind e_pretrain row i. The first log
    row is the untrained head's performance (losses are recorded before each
    update), so improvement is read directly off the log.
    """
    if len(split.train) == 0 or len(split.validation) == 0:
        raise ValueError("train and validation sets must be non-empty")
    train_ext, val_ext, y_train_raw, y_val_raw = _split_indices(
        {r: i for i, r in enumerate(regions)}, labels, split)
    mean, std = fit_label_transform(config.label_transform, y_train_raw)
    y_train = apply_label_transform(config.label_transform, y_train_raw, mean, std)
    y_val = apply_label_transform(config.label_transform, y_val_raw, mean, std)
    head = init_head(config, d=e_pretrain.shape[1])
    x_train = Tensor(e_pretrain[train_ext])
    x_val = e_pretrain[val_ext]
    adam = {name: T.adam_init(arr.shape, config.lr)
            for name, arr in head.params.items()}
    best_val = np.inf
    best_params = {name: arr.copy() for name, arr in head.params.items()}
    wait = 0
    log: list[LogRow] = []
    for epoch in range(config.max_epochs):
        leaves = _leaves(head.params)
        pred_train = head_forward(x_train, leaves)
        err = T.sub(pred_train, Tensor(y_train.reshape(-1, 1)))
        loss = T.mean_all(T.square(err))
        train_loss = loss.item()
        if not np.isfinite(train_loss):
            raise NumericError(f"fine-tuning diverged at epoch {epoch}")
        val_pred = _head_apply(head.params, x_val)
        val_loss = float(np.mean((val_pred.ravel() - y_val) ** 2))
        log.append((epoch, train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = {name: leaf.data.copy() for name, leaf in leaves.items()}
            wait = 0
        else:
            wait += 1
            if wait >= config.patience:
                break
        loss.backward()
        for name, leaf in leaves.items():
            grad = leaf.grad if leaf.grad is not None \
                else np.zeros_like(leaf.data)
            head.params[name], adam[name] = T.adam_step(
                head.params[name], grad, adam[name])
    head.params = best_params
    head.label_mean, head.label_std = mean, std
    head.trained = True
    return head, log


def _head_apply(params: dict[str, np.ndarray], x: np.ndarray) -> np.ndarray:
    a = np.maximum(x @ params["head.0.w"] + params["head.0.b"], 0.0)
    a = np.maximum(a @ params["head.1.w"] + params["head.1.b"], 0.0)
    return a @ params["head.2.w"] + params["head.2.b"]


def predict(state: ModelState, graph: HeteroGraph,
            features: Sequence[RegionFeatures],
            regions: Sequence[Region]) -> dict[Region, float]:
    """Inverse-transformed predictions for the requested regions."""
    values = predict_all(state, graph, features)
    pos = _region_positions(features)
    try:
        return {r: float(values[pos[r]]) for r in regions}
    except KeyError as exc:
        raise GeoDataError(f"region {exc} not in features") from exc


def predict_all(state: ModelState, graph: HeteroGraph,
                features: Sequence[RegionFeatures]) -> np.ndarray:
    """Predictions for every region, in feature order."""
    if not state.trained:
        raise ValueError("model state is untrained")
    gt = prepare_graph(graph, features, state.config)
    e = embed_regions(state, gt)
    z = _head_apply(state.params, e).ravel()
    out = invert_label_transform(state.config.label_transform, z,
                                 state.label_mean, state.label_std)
    return T.require_finite(out, "predictions")


def predict_from_embeddings(head: HeadState, e_pretrain: np.ndarray) -> np.ndarray:
    """Head predictions over an embedding matrix, inverse-transformed."""
    if not head.trained:
        raise ValueError("head is untrained")
    z = _head_apply(head.params, e_pretrain).ravel()
    out = invert_label_transform(head.config.label_transform, z,
                                 head.label_mean, head.label_std)
    return T.require_finite(out, "predictions")


# ---------------------------------------------------------------------------
# integrity, checkpoints, logs
# ---------------------------------------------------------------------------

def backbone_checksum(state: ModelState) -> str:
    """SHA-256 over the exact bytes of every non-head parameter."""
    digest = hashlib.sha256()
    for name in state.backbone_names():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(state.params[name]).tobytes())
    return digest.hexdigest()


def save_checkpoint(state: ModelState, path: str) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": "model",
        "config": _config_dict(state.config),
        "n_env": state.n_env,
        "n_soc": state.n_soc,
        "label_mean": state.label_mean,
        "label_std": state.label_std,
        "trained": state.trained,
        "params": {name: {"shape": list(arr.shape),
                          "data": arr.ravel().tolist()}
                   for name, arr in state.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_checkpoint(path: str) -> ModelState:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION or \
            payload.get("kind") != "model":
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} "
                         "model checkpoint")
    config = _config_from_dict(payload["config"])
    params = {name: np.array(spec["data"], dtype=np.float64)
              .reshape(spec["shape"])
              for name, spec in payload["params"].items()}
    return ModelState(config=config, n_env=payload["n_env"],
                      n_soc=payload["n_soc"], params=params,
                      label_mean=payload["label_mean"],
                      label_std=payload["label_std"],
                      trained=payload["trained"])


def save_head(head: HeadState, path: str) -> None:
    payload = {
        "version": CHECKPOINT_VERSION,
        "kind": "head",
        "config": _config_dict(head.config),
        "label_mean": head.label_mean,
        "label_std": head.label_std,
        "trained": head.trained,
        "params": {name: {"shape": list(arr.shape),
                          "data": arr.ravel().tolist()}
                   for name, arr in head.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh)


def load_head(path: str) -> HeadState:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("version") != CHECKPOINT_VERSION or \
            payload.get("kind") != "head":
        raise ValueError(f"{path}: not a version-{CHECKPOINT_VERSION} "
                         "head checkpoint")
    params = {name: np.array(spec["data"], dtype=np.float64)
              .reshape(spec["shape"])
              for name, spec in payload["params"].items()}
    return HeadState(config=_config_from_dict(payload["config"]), params=params,
                     label_mean=payload["label_mean"],
                     label_std=payload["label_std"],
                     trained=payload["trained"])


def _config_dict(config: HgnnConfig) -> dict:
    out = asdict(config)
    out["relations"] = list(config.relations)
    return out


def _config_from_dict(data: dict) -> HgnnConfig:
    data = dict(data)
    data["relations"] = tuple(data["relations"])
    return HgnnConfig(**data)


def write_embeddings(regions: Sequence[Region], embeddings: np.ndarray,
                     path: str, header_comments: Sequence[str] = ()) -> None:
    """CSV dump of an embedding matrix: x_r,y_r,e_0..e_{d-1}."""
    if len(regions) != embeddings.shape[0]:
        raise GeoDataError("one region per embedding row required")
    d = embeddings.shape[1]
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("x_r,y_r," + ",".join(f"e_{i}" for i in range(d)) + "\n")
        for (x, y), row in zip(regions, embeddings):
            fh.write(f"{x},{y}," + ",".join(repr(float(v)) for v in row) + "\n")


def load_embeddings(path: str) -> tuple[list[Region], np.ndarray]:
    regions: list[Region] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if header is None:
                header = line.split(",")
                if header[:2] != ["x_r", "y_r"]:
                    raise GeoDataError(f"{path}: not an embeddings CSV")
                continue
            parts = line.split(",")
            if len(parts) != len(header):
                raise GeoDataError(f"{path}: row width {len(parts)} != "
                                   f"header {len(header)}")
            regions.append((int(parts[0]), int(parts[1])))
            rows.append([float(v) for v in parts[2:]])
    if header is None or not rows:
        raise GeoDataError(f"{path}: no embedding rows")
    return regions, np.array(rows, dtype=np.float64)


def save_training_log(log: Sequence[LogRow], path: str,
                      header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("epoch,train_loss,val_loss\n")
        for epoch, train_loss, val_loss in log:
            fh.write(f"{epoch},{train_loss!r},{val_loss!r}\n")
