"""Training loops for graph reconstruction and node classification."""

from __future__ import annotations

import copy
import csv
import io as _io
import logging
import random
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import io, metrics
from .graph import Graph, hop_premix
from .model import FPST, GraphInputs
from .tensor import Adam

log = logging.getLogger(__name__)

DENSE_TOKEN_LIMIT = 8192
AUTO_NEG_LIMIT = 5000
AUTO_NEG_SAMPLES = 256
TASK_DEFAULTS = {
    "reconstruct": {"epochs": 10000, "curv_lr": 1e-4, "eval_interval": 100},
    "nodeclf": {"epochs": 1000, "curv_lr": 1e-4, "eval_interval": 1},
}


class ConfigError(ValueError):
    """Invalid run configuration; the message is a single line."""


@dataclass
class RunConfig:
    task: str = "reconstruct"
    edges: str | None = None
    features: str | None = None
    labels: str | None = None
    splits: str | None = None
    synth_split: str | None = None
    dim: int = 16
    heads: int = 2
    layers: int = 1
    epochs: int | None = None
    lr: float = 1e-2
    curv_lr: float | None = None
    kappa_init: float = 0.0
    mode: str = "linearized"
    act: str = "relu"
    dropout: float = 0.0
    weight_decay: float = 0.0
    layernorm: bool = True
    hops: int = 0
    eigvecs: int = 16
    neg: str | int = "auto"
    n_classes: int | None = None
    seed: int = 0
    eval_interval: int | None = None
    patience: int = 200
    feature_noise: float = 0.01
    record_time: bool = True
    out: str | None = None
    extra: dict = field(default_factory=dict)

    def resolved(self) -> "RunConfig":
        """Copy with task-dependent defaults filled in and values validated."""
        if self.task not in TASK_DEFAULTS:
            raise ConfigError(f"unknown task {self.task!r}")
        c = copy.deepcopy(self)
        for key, val in TASK_DEFAULTS[self.task].items():
            if getattr(c, key) is None:
                setattr(c, key, val)
        if c.dim < 1 or c.heads < 1 or c.dim % c.heads:
            raise ConfigError(f"dim {c.dim} must be a positive multiple of heads {c.heads}")
        if c.layers < 1:
            raise ConfigError("layers must be >= 1")
        if c.epochs < 1 or c.eval_interval < 1:
            raise ConfigError("epochs and eval interval must be >= 1")
        if c.mode not in ("dense", "linearized"):
            raise ConfigError(f"mode must be dense or linearized, got {c.mode!r}")
        if not 0 <= c.dropout < 1:
            raise ConfigError("dropout must lie in [0, 1)")
        if c.lr <= 0 or c.curv_lr < 0 or c.weight_decay < 0:
            raise ConfigError("learning rates and weight decay must be non-negative (lr > 0)")
        if c.hops < 0 or c.eigvecs < 1:
            raise ConfigError("hops must be >= 0 and eigvecs >= 1")
        if c.neg not in ("auto", "all"):
            try:
                c.neg = int(c.neg)
            except (TypeError, ValueError):
                raise ConfigError(f"neg must be 'all', 'auto' or a positive integer, got {c.neg!r}") from None
            if c.neg < 1:
                raise ConfigError("neg must be positive")
        return c


@dataclass
class TrainResult:
    model: FPST
    inputs: GraphInputs
    rows: list[list]
    header: list[str]
    final: dict
    config: RunConfig


def seed_everything(seed: int) -> np.random.Generator:
    random.seed(seed)
    torch.manual_seed(seed)
    return np.random.default_rng(seed)


def kappa_header(model: FPST) -> list[str]:
    return [f"kappa_l{i + 1}_h{h + 1}" for i, b in enumerate(model.encoder.blocks) for h in range(b.kappa.numel())]


def rows_to_csv(header: list[str], rows: list[list]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def build_model(cfg: RunConfig, in_dim: int, eig_dim: int, n_classes: int | None = None) -> FPST:
    return FPST(
        in_dim,
        eig_dim,
        dim=cfg.dim,
        heads=cfg.heads,
        layers=cfg.layers,
        n_classes=n_classes,
        mode=cfg.mode,
        act=cfg.act,
        dropout=cfg.dropout,
        layernorm=cfg.layernorm,
        kappa_init=cfg.kappa_init,
        learn_kappa=cfg.curv_lr > 0,
    )


def _check_dense(cfg: RunConfig, g: Graph) -> None:
    if cfg.mode == "dense" and g.n_nodes + g.n_edges > DENSE_TOKEN_LIMIT:
        raise ConfigError(
            f"dense attention over {g.n_nodes + g.n_edges} tokens exceeds {DENSE_TOKEN_LIMIT}; use --mode linearized"
        )


def _load_graph(cfg: RunConfig, g: Graph | None) -> Graph:
    if g is not None:
        return g
    if cfg.edges is None:
        raise ConfigError("an edge list is required (--edges)")
    try:
        return io.load_edge_list(cfg.edges)
    except OSError as e:
        raise ConfigError(f"cannot read edge list: {e}") from None


def _clock(cfg, t0):
    return int(round((time.perf_counter() - t0) * 1000)) if cfg.record_time else 0


def _save(cfg: RunConfig, result: TrainResult, model_meta: dict) -> None:
    if cfg.out is None:
        return
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(rows_to_csv(result.header, result.rows))
    meta = {"run": {k: v for k, v in asdict(cfg).items() if k != "extra"}, "model": model_meta}
    io.save_checkpoint(out / "model.fpst", meta, result.model.state_dict())


def load_model(path) -> tuple[FPST, dict]:
    meta, state = io.load_checkpoint(path)
    run = RunConfig(**meta["run"])
    mm = meta["model"]
    model = build_model(run, mm["in_dim"], mm["eig_dim"], mm.get("n_classes"))
    model.load_state_dict(state)
    model.eval()
    return model, meta


# ---------------------------------------------------------------------------


def reconstruction_features(n: int, noise: float, rng: np.random.Generator) -> np.ndarray:
    """One-hot node features plus Gaussian noise."""
    return np.eye(n) + rng.normal(scale=noise, size=(n, n))


def train_reconstruction(cfg: RunConfig, graph: Graph | None = None, features: np.ndarray | None = None, on_row=None):
    cfg = cfg.resolved()
    g = _load_graph(cfg, graph)
    _check_dense(cfg, g)
    rng = seed_everything(cfg.seed)
    if features is None and cfg.features is not None:
        features = io.load_csv_matrix(cfg.features, g.n_nodes)
    if features is None:
        features = reconstruction_features(g.n_nodes, cfg.feature_noise, rng)
    inp = GraphInputs.build(g, features, cfg.eigvecs)
    model = build_model(cfg, features.shape[1], inp.eigvecs.shape[1])
    opt = Adam(model, cfg.lr, cfg.curv_lr)

    neg = cfg.neg
    if neg == "auto":
        neg = "all" if g.n_nodes <= AUTO_NEG_LIMIT else AUTO_NEG_SAMPLES
    neg_k = None if neg == "all" else neg
    mask = metrics.nonneighbor_mask(g) if neg_k is None else None

    header = ["epoch", "loss", "metric", "wall_ms"] + kappa_header(model)
    rows = []
    t0 = time.perf_counter()
    score = float("nan")
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        h = model(inp)
        loss = metrics.reconstruction_loss(h, g, model.signature, neg_samples=neg_k, rng=rng, mask=mask)
        loss.backward()
        opt.step()
        if epoch % cfg.eval_interval == 0 or epoch == cfg.epochs:
            model.eval()
            with torch.no_grad():
                score = metrics.map_score(model(inp), g, model.signature)
            row = [epoch, float(loss.detach()), score, _clock(cfg, t0)] + model.kappas()
            rows.append(row)
            if on_row:
                on_row(row)
    result = TrainResult(model, inp, rows, header, {"map": score, "kappas": model.kappas()}, cfg)
    _save(cfg, result, {"in_dim": int(features.shape[1]), "eig_dim": int(inp.eigvecs.shape[1])})
    return result


def _node_masks(cfg: RunConfig, g: Graph, rng) -> dict[str, np.ndarray]:
    if cfg.splits is not None:
        names = [line.strip() for line in Path(cfg.splits).read_text().splitlines() if line.strip()]
        if len(names) != g.n_nodes or set(names) - set(io.SPLITS):
            raise ConfigError(f"split file must hold one of {io.SPLITS} per node ({g.n_nodes} lines)")
        arr = np.array(names)
        return {s: arr == s for s in io.SPLITS}
    if g.masks:
        return g.masks
    if cfg.synth_split is None:
        raise ConfigError("no split masks found; pass --splits or --synth-split citation|622")
    try:
        return io.synth_splits(g.labels, cfg.synth_split, rng)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def train_node_classification(cfg: RunConfig, graph: Graph | None = None, on_row=None):
    cfg = cfg.resolved()
    g = _load_graph(cfg, graph)
    _check_dense(cfg, g)
    rng = seed_everything(cfg.seed)
    if graph is None:
        if cfg.features is None or cfg.labels is None:
            raise ConfigError("node classification needs --features and --labels")
        g.features = io.load_csv_matrix(cfg.features, g.n_nodes)
        g.labels, g.masks = io.load_labels(cfg.labels, g.n_nodes)
    if g.features is None or g.labels is None:
        raise ConfigError("graph needs node features and labels")
    n_classes = int(g.labels.max()) + 1
    if cfg.n_classes is not None:
        if n_classes > cfg.n_classes:
            raise ConfigError(f"label id {n_classes - 1} >= number of classes {cfg.n_classes}")
        n_classes = cfg.n_classes
    masks = _node_masks(cfg, g, rng)
    if not masks["train"].any() or not masks["val"].any():
        raise ConfigError("train and val splits must be non-empty")

    feats = hop_premix(g.features, g, cfg.hops)
    inp = GraphInputs.build(g, feats, cfg.eigvecs)
    model = build_model(cfg, feats.shape[1], inp.eigvecs.shape[1], n_classes)
    opt = Adam(model, cfg.lr, cfg.curv_lr, weight_decay=cfg.weight_decay)
    y = torch.as_tensor(g.labels)
    train_idx = torch.as_tensor(np.flatnonzero(masks["train"]))

    header = ["epoch", "loss", "metric", "wall_ms"] + kappa_header(model)
    rows = []
    val_idx = torch.as_tensor(np.flatnonzero(masks["val"]))
    best_val, best_val_loss, best_state, best_epoch, stale = -1.0, float("inf"), None, 0, 0
    t0 = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        loss = metrics.node_clf_loss(model.logits(inp)[train_idx], y[train_idx])
        loss.backward()
        opt.step()
        if epoch % cfg.eval_interval and epoch != cfg.epochs:
            continue
        model.eval()
        with torch.no_grad():
            logits = model.logits(inp)
            val_loss = float(metrics.node_clf_loss(logits[val_idx], y[val_idx]))
        pred = logits.argmax(dim=1).numpy()
        val = metrics.classification_metrics(pred, g.labels, masks["val"])["micro_f1"]
        row = [epoch, float(loss.detach()), val, _clock(cfg, t0)] + model.kappas()
        rows.append(row)
        if on_row:
            on_row(row)
        # ties on val F1 (common on small val sets) go to the lower val loss
        if val > best_val or (val == best_val and val_loss < best_val_loss):
            best_val, best_val_loss, best_epoch, stale = val, val_loss, epoch, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= cfg.patience:
                log.info("early stop at epoch %d (best val %.4f at %d)", epoch, best_val, best_epoch)
                break

    model.load_state_dict(best_state)
    model.eval()
    with torch.no_grad():
        pred = model.logits(inp).argmax(dim=1).numpy()
    final = {"best_epoch": best_epoch, "val_micro_f1": best_val}
    if masks["test"].any():
        test = metrics.classification_metrics(pred, g.labels, masks["test"])
        final.update({"test_accuracy": test["accuracy"], "test_micro_f1": test["micro_f1"]})
    final["kappas"] = model.kappas()
    result = TrainResult(model, inp, rows, header, final, cfg)
    _save(
        cfg,
        result,
        {"in_dim": int(feats.shape[1]), "eig_dim": int(inp.eigvecs.shape[1]), "n_classes": n_classes},
    )
    return result


def curvature_hist(g: Graph, samples_per_node: int, seed: int) -> tuple[list[float], float]:
    vals = metrics.curvature_histogram(g, samples_per_node, seed)
    return vals, (float(np.mean(vals)) if vals else float("nan"))
