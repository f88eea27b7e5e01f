"""
Multi-view datasets: CSV/JSON manifests, the train/valid/test protocol with
unaligned unlabeled pools, and a synthetic generator with planted view
clusters.

Views are stored row-major (one sample per row); the training code transposes
batches to the column convention.
"""

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class MultiViewDataset:
    """S views of N samples each.

    Attributes
    ----------
    views : list of ndarray, shape (N, D_s)
    labels : ndarray of int, shape (N,), or None
    aligned : bool
        Whether row ``n`` of every view describes the same object.
    names : list of str
    index : list of ndarray
        Per-view original row ids, so that subsets can be traced back.
    meta : dict
        Provenance and generator metadata (e.g. ``"planted"``).
    """

    views: list
    labels: np.ndarray | None = None
    aligned: bool = True
    names: list = field(default_factory=list)
    index: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.views:
            raise DataError("a dataset needs at least one view")
        views = [np.asarray(X, dtype=float) for X in self.views]
        n = views[0].shape[0]
        for s, X in enumerate(views):
            if X.ndim != 2:
                raise DataError(f"view {s} must be 2-D, got shape {X.shape}")
            if X.shape[0] != n:
                raise DataError(f"view {s} has {X.shape[0]} samples, view 0 has {n}")
            X.setflags(write=False)
        object.__setattr__(self, "views", views)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DataError(f"labels must have length {n}, got shape {labels.shape}")
            labels = labels.astype(np.int64)
            labels.setflags(write=False)
            object.__setattr__(self, "labels", labels)
        if not self.names:
            object.__setattr__(self, "names", [f"view{s}" for s in range(len(views))])
        if len(self.names) != len(views):
            raise DataError("need one name per view")
        if not self.index:
            object.__setattr__(self, "index", [np.arange(n) for _ in views])

    @property
    def n_samples(self) -> int:
        return self.views[0].shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list:
        return [X.shape[1] for X in self.views]

    @property
    def n_classes(self) -> int:
        if "num_classes" in self.meta:
            return int(self.meta["num_classes"])
        return int(self.labels.max()) + 1 if self.labels is not None and self.labels.size else 0

    def subset(self, rows, aligned=None, keep_labels=True) -> "MultiViewDataset":
        """Select rows; ``rows`` is one index array, or one per view."""
        per_view = rows if isinstance(rows, (list, tuple)) else [rows] * self.n_views
        return replace(
            self,
            views=[X[r] for X, r in zip(self.views, per_view)],
            labels=self.labels[per_view[0]] if keep_labels and self.labels is not None else None,
            aligned=self.aligned if aligned is None else aligned,
            index=[ix[r] for ix, r in zip(self.index, per_view)],
        )

    def drop_view(self, s) -> "MultiViewDataset":
        keep = [i for i in range(self.n_views) if i != s]
        meta = dict(self.meta)
        if "planted" in meta:
            meta["planted"] = [meta["planted"][i] for i in keep]
        return replace(
            self,
            views=[self.views[i] for i in keep],
            names=[self.names[i] for i in keep],
            index=[self.index[i] for i in keep],
            meta=meta,
        )


def concat(a: MultiViewDataset, b: MultiViewDataset) -> MultiViewDataset:
    """Stack the rows of two datasets; aligned only if both are."""
    labels = None
    if a.labels is not None and b.labels is not None:
        labels = np.concatenate([a.labels, b.labels])
    return replace(
        a,
        views=[np.vstack([x, y]) for x, y in zip(a.views, b.views)],
        labels=labels,
        aligned=a.aligned and b.aligned,
        index=[np.concatenate([x, y]) for x, y in zip(a.index, b.index)],
    )


def standardize(X):
    """Z-score each column; constant columns are only centered."""
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


# -- manifests ----------------------------------------------------------------


def _read_csv(path):
    rows = []
    width = None
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row:
                continue
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric cell") from None
            if width is None:
                width = len(vals)
            elif len(vals) != width:
                raise DataError(f"{path}:{lineno}: expected {width} columns, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise DataError(f"{path}: no rows")
    return np.array(rows, dtype=float)


def load_manifest(path, standardize_views=True) -> MultiViewDataset:
    """Load a dataset described by a JSON manifest.

    Schema: ``{name, views: [{name, file, dim}], labels_file?, num_classes?}``.
    Files are resolved relative to the manifest.  A ``planted.json`` next to
    the manifest, when present, is attached as ``meta["planted"]``.
    """
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"{path}: cannot read manifest: {e}") from None
    root = path.parent
    views, names = [], []
    for v in manifest.get("views", []):
        X = _read_csv(root / v["file"])
        if "dim" in v and X.shape[1] != int(v["dim"]):
            raise DataError(f"{root / v['file']}: expected dim {v['dim']}, found {X.shape[1]}")
        views.append(X)
        names.append(v.get("name", Path(v["file"]).stem))
    if not views:
        raise DataError(f"{path}: manifest lists no views")
    n0 = views[0].shape[0]
    for v, X in zip(manifest["views"][1:], views[1:]):
        if X.shape[0] != n0:
            raise DataError(
                f"sample count mismatch: {manifest['views'][0]['file']} has {n0} rows, "
                f"{v['file']} has {X.shape[0]}"
            )
    labels = None
    if manifest.get("labels_file"):
        lab = _read_csv(root / manifest["labels_file"])
        if lab.shape[1] != 1 or np.any(lab != np.round(lab)):
            raise DataError(f"{root / manifest['labels_file']}: labels must be one integer per row")
        labels = lab[:, 0].astype(np.int64)
        if labels.shape[0] != n0:
            raise DataError(
                f"sample count mismatch: {manifest['views'][0]['file']} has {n0} rows, "
                f"{manifest['labels_file']} has {labels.shape[0]}"
            )
    meta = {"name": manifest.get("name", path.parent.name), "source": str(path)}
    if manifest.get("num_classes") is not None:
        meta["num_classes"] = int(manifest["num_classes"])
    planted = root / "planted.json"
    if planted.exists():
        meta["planted"] = json.loads(planted.read_text())["assignment"]
    if standardize_views:
        views = [standardize(X) for X in views]
    return MultiViewDataset(views, labels, True, names, meta=meta)


def _write_csv(path, X):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for row in np.atleast_2d(X):
            w.writerow([repr(float(x)) for x in row])


def write_manifest(dataset: MultiViewDataset, directory, name="dataset") -> Path:
    """Write per-view CSVs, labels and a manifest into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for vname, X in zip(dataset.names, dataset.views):
        fname = f"{vname}.csv"
        _write_csv(directory / fname, X)
        entries.append({"name": vname, "file": fname, "dim": int(X.shape[1])})
    manifest = {"name": name, "views": entries}
    if dataset.labels is not None:
        with open(directory / "labels.csv", "w") as f:
            f.writelines(f"{int(y)}\n" for y in dataset.labels)
        manifest["labels_file"] = "labels.csv"
        manifest["num_classes"] = dataset.n_classes
    if "planted" in dataset.meta:
        planted = {"assignment": [int(k) for k in dataset.meta["planted"]]}
        (directory / "planted.json").write_text(json.dumps(planted, indent=2) + "\n")
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


# -- split protocol -----------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.60
    valid: float = 0.20
    test: float = 0.20
    labeled_aligned_fraction: float = 0.05
    seed: int = 0
    unalign: bool = True

    def __post_init__(self):
        if abs(self.train + self.valid + self.test - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")
        if not 0 < self.labeled_aligned_fraction <= 1:
            raise ValueError("labeled_aligned_fraction must lie in (0, 1]")


@dataclass
class Split:
    train_labeled_aligned: MultiViewDataset
    train_unlabeled: MultiViewDataset | None
    valid: MultiViewDataset
    test: MultiViewDataset

    @property
    def train_pool(self) -> MultiViewDataset:
        """Labeled and unlabeled training rows together, without labels."""
        lab = self.train_labeled_aligned.subset(
            np.arange(self.train_labeled_aligned.n_samples), keep_labels=False
        )
        if self.train_unlabeled is None:
            return lab
        return concat(lab, self.train_unlabeled)


def _stratified_order(labels, rng):
    """Order indices so that every prefix holds each class in near-global proportion."""
    n = labels.size
    key = np.empty(n)
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        rng.shuffle(idx)
        key[idx] = (np.arange(idx.size) + 0.5) / idx.size
    tiebreak = rng.random(n)
    return np.lexsort((tiebreak, key))


def split_and_unalign(dataset: MultiViewDataset, spec: SplitSpec = SplitSpec()) -> Split:
    """Stratified train/valid/test split with a small aligned labeled pool.

    The rest of the training rows are permuted independently in each view and
    stripped of labels.  The labeled and unlabeled pools are disjoint.
    """
    if dataset.labels is None:
        raise DataError("splitting needs labels")
    labels = dataset.labels
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < 3:
        raise DataError(f"class {classes[counts.argmin()]} has fewer than 3 samples; cannot stratify")
    rng = np.random.default_rng(spec.seed)
    n = labels.size
    order = _stratified_order(labels, rng)
    n_train = int(round(spec.train * n))
    n_valid = int(round(spec.valid * n))
    train, valid, test = order[:n_train], order[n_train : n_train + n_valid], order[n_train + n_valid :]

    train = train[_stratified_order(labels[train], rng)]
    n_lab = max(1, int(round(spec.labeled_aligned_fraction * n_train)))
    lab, unl = train[:n_lab], train[n_lab:]

    unlabeled = None
    if unl.size:
        if spec.unalign:
            rows = [rng.permutation(unl) for _ in range(dataset.n_views)]
            unlabeled = dataset.subset(rows, aligned=False, keep_labels=False)
        else:
            unlabeled = dataset.subset(unl, keep_labels=False)
    return Split(dataset.subset(lab), unlabeled, dataset.subset(valid), dataset.subset(test))


def unalign(dataset: MultiViewDataset, seed=0) -> MultiViewDataset:
    """Independently permute the rows of every view and drop labels."""
    rng = np.random.default_rng(seed)
    rows = [rng.permutation(dataset.n_samples) for _ in range(dataset.n_views)]
    return dataset.subset(rows, aligned=False, keep_labels=False)


# -- synthetic data -----------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    """Planted-cluster multi-view generator settings.

    ``assignment[s]`` is the planted cluster of view ``s``; ``-1`` makes the
    view pure noise.  Views in one cluster observe the same per-sample latent
    code through their own linear maps; different clusters draw independent
    codes.  A code is a class mean plus radially symmetric noise whose radial
    profile is set per cluster by ``shapes`` (cycled when there are more
    clusters than shapes), so clusters differ in tail weight rather than in
    location or scale, which encoders could absorb.  Views are z-scored per
    feature, as :func:`load_manifest` does for files.
    """

    assignment: tuple = (0, 0, 1, 1, 2, 2)
    n_samples: int = 2000
    n_classes: int = 4
    latent_dim: int = 10
    view_dim: int = 20
    class_sep: float = 0.4
    code_noise: float = 1.0
    shapes: tuple = ("shell", "moderate", "heavy")
    noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.noise < 0 or self.code_noise < 0:
            raise ValueError("noise levels must be nonnegative")
        if not self.assignment:
            raise ValueError("need at least one view")
        if any(k < -1 for k in self.assignment):
            raise ValueError("cluster ids must be >= 0, or -1 for a noise view")
        unknown = [s for s in self.shapes if s not in SHAPES]
        if unknown or not self.shapes:
            raise ValueError(f"unknown code shapes {unknown}; expected some of {sorted(SHAPES)}")

    @property
    def n_views(self) -> int:
        return len(self.assignment)


# radial profiles as scale mixtures: (probability of the small scale, small, large)
SHAPES = {
    "gaussian": None,
    "shell": "shell",
    "moderate": (0.5, 0.5, 1.5),
    "heavy": (0.9, 0.25, 3.0),
}


def _shaped_noise(rng, shape, n, dim):
    g = rng.standard_normal((n, dim))
    r = rng.random((n, 1))
    if shape == "shell":
        # uniform on the sphere of radius sqrt(dim): unit second moment, light tails
        return g / np.linalg.norm(g, axis=1, keepdims=True) * np.sqrt(dim)
    if SHAPES[shape] is None:
        return g
    p, small, large = SHAPES[shape]
    return g * np.where(r < p, small, large)


def generate_synthetic(spec: SynthSpec = SynthSpec()) -> MultiViewDataset:
    rng = np.random.default_rng(spec.seed)
    labels = rng.integers(spec.n_classes, size=spec.n_samples)
    clusters = sorted({k for k in spec.assignment if k >= 0})
    codes = {}
    for k in clusters:
        shape = spec.shapes[k % len(spec.shapes)]
        eps = _shaped_noise(rng, shape, spec.n_samples, spec.latent_dim)
        means = spec.class_sep * rng.standard_normal((spec.n_classes, spec.latent_dim))
        codes[k] = means[labels] + spec.code_noise * eps
    views = []
    for k in spec.assignment:
        if k < 0:
            X = rng.standard_normal((spec.n_samples, spec.view_dim))
        else:
            A = rng.standard_normal((spec.latent_dim, spec.view_dim))
            X = codes[k] @ A + spec.noise * rng.standard_normal((spec.n_samples, spec.view_dim))
        views.append(standardize(X))
    meta = {
        "planted": [int(k) for k in spec.assignment],
        "num_classes": spec.n_classes,
        "generator": {k: (list(v) if isinstance(v, tuple) else v) for k, v in spec.__dict__.items()},
    }
    return MultiViewDataset(views, labels, True, meta=meta)
