"""
Training loops.

Every step alternates the two halves of the HOT scheme: the transport plan is
solved on the current encoder outputs, then held fixed while Adam updates the
encoders, projections and references.  The semi-supervised loop adds a
cross-entropy term on an aligned labeled batch and an optional autoencoder
reconstruction term.
"""

import json
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import regularizers as reg
from .data import MultiViewDataset, Split
from .errors import DataError
from .nn import (
    AdamState,
    ClassifierHead,
    DecoderStack,
    EncoderStack,
    adam_step,
    load_checkpoint,
    mlp_backward,
    mlp_forward,
    mlp_from_tensors,
    reconstruction_loss,
    save_checkpoint,
    softmax_xent,
)
from .ot import TransportPlan, sample_projections

REFERENCE_KINDS = ("gdcca", "sw_reference", "hot_reference")


@dataclass
class TrainConfig:
    epochs: int = 100
    lr: float = 0.001
    batch_size: int = 400
    encoder_out: int = 20
    shared_dim: int = 10
    hidden: tuple = (64,)
    tau: float = 0.01
    gamma: float = 0.1
    alpha: float = 0.01
    sinkhorn_iters: int = 20
    beta: float = 0.1
    num_projections: int = 3
    num_clusters: int = 3
    regularizer: str = "hot_reference"
    use_autoencoder: bool = False
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.regularizer not in reg.KINDS:
            raise ValueError(f"unknown regularizer {self.regularizer!r}; expected one of {reg.KINDS}")
        for name in ("epochs", "batch_size", "encoder_out", "shared_dim", "sinkhorn_iters",
                     "num_projections", "num_clusters"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("lr", "beta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("tau", "gamma", "alpha"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    @property
    def num_refs(self) -> int:
        return self.num_clusters if self.regularizer == "hot_reference" else 1

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)
    final_plan: TransportPlan | None = None
    initial_plan: np.ndarray | None = None
    best_epoch: int | None = None
    wall_clock: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in self.epochs)

    def losses(self, key) -> list:
        return [rec[key] for rec in self.epochs]


@dataclass
class Model:
    encoders: EncoderStack
    refs: reg.ReferenceSet | None = None
    classifier: ClassifierHead | None = None
    decoders: DecoderStack | None = None

    def named_parameters(self) -> dict:
        out = self.encoders.named_parameters()
        for part in (self.refs, self.classifier, self.decoders):
            if part is not None:
                out.update(part.named_parameters())
        return out

    def snapshot(self) -> dict:
        return {k: v.copy() for k, v in self.named_parameters().items()}

    def restore(self, snap) -> None:
        for k, v in self.named_parameters().items():
            v[...] = snap[k]


def _streams(seed):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def init_model(dims, config: TrainConfig, rng, n_classes=0) -> Model:
    enc = EncoderStack.init(dims, config.hidden, config.encoder_out, config.shared_dim, rng)
    refs = None
    if config.regularizer in REFERENCE_KINDS:
        refs = reg.ReferenceSet.init(config.num_refs, config.shared_dim, config.batch_size, rng)
    cls = ClassifierHead.init(len(dims) * config.encoder_out, n_classes, rng) if n_classes else None
    dec = DecoderStack.init(dims, config.hidden, config.encoder_out, rng) if config.use_autoencoder else None
    return Model(enc, refs, cls, dec)


def _accumulate(total, grads, weight=1.0):
    for k, g in grads.items():
        if k in total:
            total[k] = total[k] + weight * g
        else:
            total[k] = weight * g


def _encode(model, Xb):
    """Encoder outputs, projected latents and caches for per-view batches ``(D_s, B)``."""
    H, Z, caches = [], [], []
    for s, X in enumerate(Xb):
        h, cache = model.encoders.encode(s, X)
        H.append(h)
        Z.append(model.encoders.projs[s] @ h)
        caches.append(cache)
    return H, Z, caches


def _backprop(model, H, caches, grad_H, grad_Z):
    """Chain gradients on encoder outputs / projected latents into named parameter grads."""
    mlp_grads, proj_grads = [], []
    for s in range(len(H)):
        gH = grad_H[s] if grad_H[s] is not None else np.zeros_like(H[s])
        gU = None
        if grad_Z[s] is not None:
            U = model.encoders.projs[s]
            gU = grad_Z[s] @ H[s].T
            gH = gH + U.T @ grad_Z[s]
        g, _ = mlp_backward(caches[s], gH)
        mlp_grads.append(g)
        proj_grads.append(gU)
    return model.encoders.named_grads(mlp_grads, proj_grads)


def regularizer_terms(model, Xb, config, proj, aligned, weight=1.0, ae_weight=0.0):
    """R_M (and optionally R_S) on one unlabeled batch.

    Returns ``(rm_value, rs_value, grads, output)`` with ``grads`` already
    scaled by ``weight`` and ``ae_weight``.
    """
    H, Z, caches = _encode(model, Xb)
    grads = {}
    grad_Z = [None] * len(Z)
    grad_H = [None] * len(Z)
    rm, rs, out = 0.0, 0.0, None
    if config.regularizer != "none" and weight > 0:
        out = reg.evaluate(
            config.regularizer, Z, refs=model.refs, proj=proj, alpha=config.alpha,
            beta=config.beta, n_iter=config.sinkhorn_iters, aligned=aligned,
        )
        rm = out.loss
        grad_Z = [weight * g for g in out.grad_latents]
        if out.grad_refs is not None:
            _accumulate(grads, {f"ref.{k}": g for k, g in enumerate(out.grad_refs)}, weight)
    if model.decoders is not None and ae_weight > 0:
        rs, dgrads, gH = reconstruction_loss(model.decoders, H, Xb)
        _accumulate(grads, dgrads, ae_weight)
        grad_H = [ae_weight * g for g in gH]
    if any(g is not None for g in grad_Z) or any(g is not None for g in grad_H):
        _accumulate(grads, _backprop(model, H, caches, grad_H, grad_Z))
    return rm, rs, grads, out


def _batches(rng, n, batch_size, n_views, aligned):
    """Row index arrays for one epoch; the final partial batch is dropped."""
    if aligned:
        perm = rng.permutation(n)
        perms = [perm] * n_views
    else:
        perms = [rng.permutation(n) for _ in range(n_views)]
    for i in range(n // batch_size):
        sl = slice(i * batch_size, (i + 1) * batch_size)
        yield [p[sl] for p in perms]


def _batch(dataset, rows):
    return [X[r].T for X, r in zip(dataset.views, rows)]


def _initial_plan(config, S):
    if config.regularizer == "hot_pairwise":
        return (np.ones((S, S)) - np.eye(S)) / (S * (S - 1))
    if config.regularizer == "hot_reference":
        return np.full((S, config.num_clusters), 1.0 / (S * config.num_clusters))
    return None


def _heldout_rows(rng, dataset, valid, batch_size):
    source = valid if valid is not None and valid.n_samples >= batch_size else dataset
    rows = next(_batches(rng, source.n_samples, batch_size, source.n_views, source.aligned))
    return source, rows


def train_unsupervised(dataset: MultiViewDataset, config: TrainConfig, valid: MultiViewDataset | None = None):
    """Learn encoders (and references) from unlabeled, possibly unaligned views.

    Returns ``(model, report)``; ``model.refs`` is set for reference-based
    regularizers.  When ``valid`` is given, the parameters with the lowest
    validation R_M are kept.
    """
    t0 = time.perf_counter()
    B = config.batch_size
    if B > dataset.n_samples:
        raise DataError(f"batch_size {B} exceeds the {dataset.n_samples} available samples")
    if config.regularizer in ("lscca", "gdcca") and not dataset.aligned:
        raise DataError(f"{config.regularizer} needs aligned views")
    init_rng, batch_rng, proj_rng, eval_rng = _streams(config.seed)
    model = init_model(dataset.dims, config, init_rng)
    params = model.named_parameters()
    adam = AdamState(lr=config.lr)
    report = TrainReport(seed=config.seed, config=config.to_dict(),
                         initial_plan=_initial_plan(config, dataset.n_views))
    if config.regularizer == "none":
        report.wall_clock = time.perf_counter() - t0
        return model, report

    val_src, val_rows = _heldout_rows(eval_rng, dataset, valid, B)
    val_batch = _batch(val_src, val_rows)
    val_proj = sample_projections(config.num_projections, config.shared_dim, eval_rng)
    best, best_snap = np.inf, None
    for epoch in range(config.epochs):
        vals = []
        for rows in _batches(batch_rng, dataset.n_samples, B, dataset.n_views, dataset.aligned):
            proj = sample_projections(config.num_projections, config.shared_dim, proj_rng)
            rm, _, grads, _ = regularizer_terms(model, _batch(dataset, rows), config, proj, dataset.aligned)
            adam_step(adam, params, grads)
            vals.append(rm)
        rec = {"epoch": epoch, "task": None, "rm": float(np.mean(vals)), "rs": None}
        if valid is not None:
            v, _, _, _ = regularizer_terms(model, val_batch, config, val_proj, val_src.aligned)
            rec["valid_rm"] = v
            if v < best:
                best, best_snap, report.best_epoch = v, model.snapshot(), epoch
        report.epochs.append(rec)
    if best_snap is not None:
        model.restore(best_snap)
    report.final_plan = final_plan(model, val_batch, config, eval_rng, val_src.aligned)
    report.wall_clock = time.perf_counter() - t0
    return model, report


def final_plan(model, Xb, config, rng, aligned=True):
    """Transport plan of the configured HOT regularizer on one batch (None otherwise)."""
    if config.regularizer not in ("hot_pairwise", "hot_reference"):
        return None
    proj = sample_projections(config.num_projections, config.shared_dim, rng)
    _, Z, _ = _encode(model, Xb)
    out = reg.evaluate(config.regularizer, Z, refs=model.refs, proj=proj, alpha=config.alpha,
                       beta=config.beta, n_iter=config.sinkhorn_iters, aligned=aligned)
    return out.plan


def features(model, views):
    """Concatenated encoder outputs ``(S * encoder_out, N)`` for aligned rows."""
    if len(views) != model.encoders.n_views:
        raise DataError(f"expected {model.encoders.n_views} views, got {len(views)}")
    H = []
    for s, X in enumerate(views):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != model.encoders.input_dims[s]:
            raise DataError(f"view {s}: expected dim {model.encoders.input_dims[s]}, got shape {X.shape}")
        H.append(mlp_forward(model.encoders.mlps[s], X.T)[0])
    return np.vstack(H)


def predict(model, views):
    """Class ids for aligned samples given as per-view ``(N, D_s)`` arrays."""
    if model.classifier is None:
        raise ValueError("model has no classifier")
    return np.argmax(model.classifier.forward(features(model, views)), axis=0)


def _labeled_rows(rng, n, batch_size):
    return rng.choice(n, size=batch_size, replace=n < batch_size)


def _task_terms(model, labeled, rows):
    Xb = _batch(labeled, [rows] * labeled.n_views)
    H, _, caches = _encode(model, Xb)
    Hcat = np.vstack(H)
    loss, g_logits = softmax_xent(model.classifier.forward(Hcat), labeled.labels[rows])
    grads, gH = model.classifier.backward(Hcat, g_logits)
    w = model.encoders.out_dim
    grad_H = [gH[s * w : (s + 1) * w] for s in range(len(H))]
    _accumulate(grads, _backprop(model, H, caches, grad_H, [None] * len(H)))
    return loss, grads


def task_loss(model, dataset):
    """Mean cross-entropy of the classifier on a labeled aligned dataset."""
    logits = model.classifier.forward(features(model, dataset.views))
    return softmax_xent(logits, dataset.labels)[0]


def train_semisupervised(split: Split, config: TrainConfig):
    """Jointly fit encoders, classifier and regularizers on a labeled+unlabeled split.

    Each step sums cross-entropy on a labeled aligned batch, ``gamma`` times
    R_M on a batch from the whole training pool, and ``tau`` times the
    reconstruction loss when autoencoders are enabled.  The parameters with
    the lowest validation cross-entropy are kept.

    Returns ``(model, report)``.
    """
    t0 = time.perf_counter()
    labeled = split.train_labeled_aligned
    if labeled is None or labeled.labels is None or labeled.n_samples == 0:
        raise DataError("semi-supervised training needs a labeled aligned subset")
    pool = split.train_pool
    B = config.batch_size
    if B > pool.n_samples:
        raise DataError(f"batch_size {B} exceeds the {pool.n_samples} training samples")
    if config.regularizer in ("lscca", "gdcca") and not pool.aligned and config.gamma > 0:
        raise DataError(f"{config.regularizer} needs aligned views")
    n_classes = max(labeled.n_classes, split.valid.n_classes, split.test.n_classes)
    init_rng, batch_rng, proj_rng, lab_rng = _streams(config.seed)
    model = init_model(labeled.dims, config, init_rng, n_classes)
    params = model.named_parameters()
    adam = AdamState(lr=config.lr)
    report = TrainReport(seed=config.seed, config=config.to_dict(),
                         initial_plan=_initial_plan(config, labeled.n_views))
    use_rm = config.regularizer != "none" and config.gamma > 0
    use_rs = config.use_autoencoder and config.tau > 0
    best, best_snap = np.inf, None
    for epoch in range(config.epochs):
        task_vals, rm_vals, rs_vals = [], [], []
        for rows in _batches(batch_rng, pool.n_samples, B, pool.n_views, pool.aligned):
            proj = sample_projections(config.num_projections, config.shared_dim, proj_rng)
            loss, grads = _task_terms(model, labeled, _labeled_rows(lab_rng, labeled.n_samples, B))
            if use_rm or use_rs:
                rm, rs, rgrads, _ = regularizer_terms(
                    model, _batch(pool, rows), config, proj, pool.aligned,
                    weight=config.gamma if use_rm else 0.0, ae_weight=config.tau if use_rs else 0.0,
                )
                _accumulate(grads, rgrads)
                rm_vals.append(rm)
                rs_vals.append(rs)
            adam_step(adam, params, grads)
            task_vals.append(loss)
        rec = {
            "epoch": epoch,
            "task": float(np.mean(task_vals)),
            "rm": float(np.mean(rm_vals)) if use_rm else None,
            "rs": float(np.mean(rs_vals)) if use_rs else None,
        }
        v = task_loss(model, split.valid)
        rec["valid_task"] = v
        if v < best:
            best, best_snap, report.best_epoch = v, model.snapshot(), epoch
        report.epochs.append(rec)
    model.restore(best_snap)
    if config.regularizer in ("hot_pairwise", "hot_reference"):
        rows = next(_batches(batch_rng, pool.n_samples, B, pool.n_views, pool.aligned))
        report.final_plan = final_plan(model, _batch(pool, rows), config, proj_rng, pool.aligned)
    report.wall_clock = time.perf_counter() - t0
    return model, report


def fit_classifier(model, labeled: MultiViewDataset, n_classes=None, steps=1000, lr=0.01, seed=0):
    """Fit a softmax head on frozen encoder features (full-batch Adam)."""
    n_classes = n_classes or labeled.n_classes
    Hcat = features(model, labeled.views)
    head = ClassifierHead.init(Hcat.shape[0], n_classes, np.random.default_rng(seed))
    params = head.named_parameters()
    adam = AdamState(lr=lr)
    for _ in range(steps):
        _, g = softmax_xent(head.forward(Hcat), labeled.labels)
        grads, _ = head.backward(Hcat, g)
        adam_step(adam, params, grads)
    model.classifier = head
    return model


# -- checkpoints --------------------------------------------------------------


def save_model(path, model: Model, meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta["input_dims"] = model.encoders.input_dims
    save_checkpoint(path, model.named_parameters(), meta)


def load_model(path):
    """Rebuild a :class:`Model` from a checkpoint; returns ``(model, meta)``."""
    tensors, meta = load_checkpoint(path)
    S = len(meta["input_dims"])
    enc = EncoderStack(
        [mlp_from_tensors(tensors, f"enc.{s}") for s in range(S)],
        [tensors[f"proj.{s}"].copy() for s in range(S)],
    )
    refs = None
    if "ref.0" in tensors:
        k = sum(1 for name in tensors if name.startswith("ref."))
        refs = reg.ReferenceSet([tensors[f"ref.{i}"].copy() for i in range(k)])
    cls = None
    if "cls.W" in tensors:
        cls = ClassifierHead(tensors["cls.W"].copy(), tensors["cls.b"].copy())
    dec = None
    if "dec.0.0.W" in tensors:
        dec = DecoderStack([mlp_from_tensors(tensors, f"dec.{s}") for s in range(S)])
    return Model(enc, refs, cls, dec), meta
