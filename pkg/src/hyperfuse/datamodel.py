"""Core typed data structures, validation, and CSV (de)serialization.

One subject couples three modalities: a binary structural-connectivity
adjacency, per-node functional time-series features, and a single
image-derived feature vector. A cohort is an ordered, dimension-consistent
collection of subjects and is the unit of cross-validation.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

# Default data shapes: 90-node atlas graphs, 187 time points, 128-dim vector.
DEFAULT_N_NODES = 90
DEFAULT_TS_DIM = 187
DEFAULT_VEC_DIM = 128

# All floats in CSV artifacts carry 9 significant digits.
FLOAT_FMT = "%.9g"

MANIFEST_HEADER = ["id", "label", "sc", "ft", "fv"]


class DataError(ValueError):
    """Raised for malformed subjects, cohorts, manifests, or config values."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Subject:
    """One sample: adjacency, node time-series features, feature vector, label.

    Arrays are stored read-only; instances are safe to share across threads.
    """

    subject_id: str
    adjacency: np.ndarray       # (N, N) binary symmetric, zero diagonal
    node_features: np.ndarray   # (N, d)
    feature_vector: np.ndarray  # (c,)
    label: int                  # 0 or 1

    def __post_init__(self):
        object.__setattr__(self, "adjacency", _freeze(self.adjacency))
        object.__setattr__(self, "node_features", _freeze(self.node_features))
        object.__setattr__(self, "feature_vector",
                           _freeze(np.ravel(self.feature_vector)))
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True)
class Cohort:
    """Ordered collection of subjects sharing one (N, d, c) shape triple."""

    subjects: tuple
    class_names: tuple = ("class0", "class1")
    dims: tuple = (DEFAULT_N_NODES, DEFAULT_TS_DIM, DEFAULT_VEC_DIM)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(self.subjects))
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))

    def __len__(self) -> int:
        return len(self.subjects)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.subjects], dtype=int)


@dataclass(frozen=True)
class ModelConfig:
    """All knobs of the two-stage pipeline.

    Defaults follow the reference setting: 90-node graphs, 32-dim latents,
    10-node prior subsets, fusion weight 0.5, 100 + 200 epochs, learning
    rates 1e-3 for model parameters and 1e-4 for critics.
    """

    n_nodes: int = DEFAULT_N_NODES
    ts_dim: int = DEFAULT_TS_DIM
    vec_dim: int = DEFAULT_VEC_DIM
    latent_dim: int = 32
    prior_subset_size: int = 10
    hyperedge_size: int = 10
    fusion_weight: float = 0.5
    bandwidth: Union[str, float] = "scott"
    enc_hidden: int = 64
    dec_hidden: int = 64
    vec_enc_hidden: int = 64
    vec_dec_hidden: int = 64
    latent_cls_hidden: int = 16
    conn_cls_hidden: int = 90
    lr_model: float = 1e-3
    lr_critic: float = 1e-4
    epochs_stage1: int = 100
    epochs_stage2: int = 200
    seed: int = 0
    optimizer: str = "adam"           # "adam" or "sgd"
    critic_clip: float = 0.05         # 0 disables weight clipping
    hypergraph_norm: str = "paper"    # "paper" or "standard"
    freeze_hypergraphs: bool = False
    modalities: str = "trimodal"      # "trimodal" or "bimodal"
    diffusion_steps: int = 1
    roi_whitelist: Optional[tuple] = None

    def __post_init__(self):
        if self.roi_whitelist is not None:
            object.__setattr__(self, "roi_whitelist",
                               tuple(int(i) for i in self.roi_whitelist))
        self.validate()

    def validate(self) -> None:
        if self.latent_dim < 1:
            raise DataError("latent_dim must be >= 1")
        if not 1 <= self.prior_subset_size <= self.n_nodes:
            raise DataError("prior_subset_size must be in [1, n_nodes]")
        if not 1 <= self.hyperedge_size <= self.n_nodes:
            raise DataError("hyperedge_size must be in [1, n_nodes]")
        if self.fusion_weight < 0:
            raise DataError("fusion_weight must be >= 0")
        for name in ("n_nodes", "ts_dim", "vec_dim", "enc_hidden", "dec_hidden",
                     "vec_enc_hidden", "vec_dec_hidden", "latent_cls_hidden",
                     "conn_cls_hidden"):
            if getattr(self, name) < 1:
                raise DataError(f"{name} must be positive")
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise DataError("epoch counts must be >= 0")
        if isinstance(self.bandwidth, str):
            if self.bandwidth != "scott":
                raise DataError(f"unknown bandwidth policy {self.bandwidth!r}")
        elif not self.bandwidth > 0:
            raise DataError("fixed bandwidth must be > 0")
        if self.optimizer not in ("adam", "sgd"):
            raise DataError(f"unknown optimizer {self.optimizer!r}")
        if self.hypergraph_norm not in ("paper", "standard"):
            raise DataError(f"unknown hypergraph_norm {self.hypergraph_norm!r}")
        if self.modalities not in ("trimodal", "bimodal"):
            raise DataError(f"unknown modalities {self.modalities!r}")
        if self.diffusion_steps < 0:
            raise DataError("diffusion_steps must be >= 0")

    @property
    def dims(self) -> tuple:
        return (self.n_nodes, self.ts_dim, self.vec_dim)

    def with_updates(self, **kwargs) -> "ModelConfig":
        return replace(self, **kwargs)


def config_field_names() -> tuple:
    return tuple(f.name for f in fields(ModelConfig))


def derive_seed(*parts: int) -> int:
    """Stable child seed from an ordered tuple of integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def one_hot(label: int, num_classes: int = 2) -> np.ndarray:
    """Encode a class index as an indicator vector."""
    label = int(label)
    if not 0 <= label < num_classes:
        raise DataError(f"label {label} out of range [0, {num_classes})")
    v = np.zeros(num_classes, dtype=np.float64)
    v[label] = 1.0
    return v


def minmax_scale(values: np.ndarray) -> np.ndarray:
    """Rescale an array into [0, 1]; a constant array maps to all 0.5."""
    values = np.asarray(values, dtype=np.float64)
    lo, hi = values.min(), values.max()
    if hi == lo:
        return np.full_like(values, 0.5)
    return (values - lo) / (hi - lo)


def validate_subject(subject: Subject, dims: Sequence[int]) -> Subject:
    """Check all subject invariants against (N, d, c); return it unchanged.

    Errors name the offending field and index. Nothing is coerced: a
    non-binary adjacency entry is a failure, not something to round.
    """
    n, d, c = (int(v) for v in dims)
    sid = subject.subject_id
    a, x, v = subject.adjacency, subject.node_features, subject.feature_vector

    if a.shape != (n, n):
        raise DataError(f"{sid}: adjacency shape {a.shape} != ({n}, {n})")
    if x.shape != (n, d):
        raise DataError(f"{sid}: node_features shape {x.shape} != ({n}, {d})")
    if v.shape != (c,):
        raise DataError(f"{sid}: feature_vector shape {v.shape} != ({c},)")

    if not np.isfinite(a).all():
        i, j = np.argwhere(~np.isfinite(a))[0]
        raise DataError(f"{sid}: adjacency non-finite at ({i}, {j})")
    bad = (a != 0.0) & (a != 1.0)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DataError(f"{sid}: adjacency non-binary entry {a[i, j]} at ({i}, {j})")
    asym = a != a.T
    if asym.any():
        i, j = np.argwhere(asym)[0]
        raise DataError(f"{sid}: adjacency asymmetric at ({i}, {j})")
    diag = np.flatnonzero(np.diag(a))
    if diag.size:
        raise DataError(f"{sid}: adjacency nonzero diagonal at ({diag[0]}, {diag[0]})")

    if not np.isfinite(x).all():
        i, j = np.argwhere(~np.isfinite(x))[0]
        raise DataError(f"{sid}: node_features non-finite at ({i}, {j})")
    if not np.isfinite(v).all():
        i = np.flatnonzero(~np.isfinite(v))[0]
        raise DataError(f"{sid}: feature_vector non-finite at ({i},)")

    if subject.label not in (0, 1):
        raise DataError(f"{sid}: label {subject.label} not in {{0, 1}}")
    return subject


def validate_cohort(cohort: Cohort) -> Cohort:
    for s in cohort.subjects:
        validate_subject(s, cohort.dims)
    labels = set(int(s.label) for s in cohort.subjects)
    if labels != {0, 1}:
        raise DataError(f"cohort must contain both classes, found labels {sorted(labels)}")
    return cohort


def _format_float(x: float) -> str:
    return FLOAT_FMT % x


def write_matrix(matrix: np.ndarray, path: Union[str, Path]) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        for row in matrix:
            fh.write(",".join(_format_float(x) for x in row))
            fh.write("\n")


def read_matrix(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        rows = []
        with open(path, newline="") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    rows.append([float(tok) for tok in line.split(",")])
        if not rows:
            raise ValueError("empty file")
        return np.asarray(rows, dtype=np.float64)
    except ValueError as exc:
        raise DataError(f"failed to parse {path}: {exc}") from exc


def save_cohort(cohort: Cohort, out_dir: Union[str, Path]) -> Path:
    """Write per-subject CSVs plus a manifest; returns the manifest path.

    Layout: `<id>_sc.csv` (N x N), `<id>_ft.csv` (N x d), `<id>_fv.csv`
    (1 x c), and `manifest.csv` with header id,label,sc,ft,fv holding paths
    relative to the manifest.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest_path = out_dir / "manifest.csv"
    with open(manifest_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for s in cohort.subjects:
            names = {kind: f"{s.subject_id}_{kind}.csv" for kind in ("sc", "ft", "fv")}
            write_matrix(s.adjacency, out_dir / names["sc"])
            write_matrix(s.node_features, out_dir / names["ft"])
            write_matrix(s.feature_vector.reshape(1, -1), out_dir / names["fv"])
            writer.writerow([s.subject_id, s.label, names["sc"], names["ft"], names["fv"]])
    return manifest_path


def load_cohort(manifest_path: Union[str, Path],
                class_names: Sequence[str] = ("class0", "class1")) -> Cohort:
    """Load and validate a cohort in manifest order."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise DataError(f"missing manifest: {manifest_path}")
    base = manifest_path.parent
    subjects = []
    with open(manifest_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != MANIFEST_HEADER:
            raise DataError(f"bad manifest header {header} in {manifest_path}")
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise DataError(f"bad manifest row {row} in {manifest_path}")
            sid, label, sc, ft, fv = row
            try:
                label = int(label)
            except ValueError as exc:
                raise DataError(f"{sid}: bad label {label!r}") from exc
            subjects.append(Subject(
                subject_id=sid,
                adjacency=read_matrix(base / sc),
                node_features=read_matrix(base / ft),
                feature_vector=read_matrix(base / fv).ravel(),
                label=label,
            ))
    if not subjects:
        raise DataError(f"empty manifest: {manifest_path}")

    n, d = subjects[0].node_features.shape
    c = subjects[0].feature_vector.shape[0]
    for s in subjects:
        if s.node_features.shape != (n, d) or s.feature_vector.shape != (c,) \
                or s.adjacency.shape != (n, n):
            raise DataError(
                f"dimension mismatch: {subjects[0].subject_id} has "
                f"(N={n}, d={d}, c={c}) but {s.subject_id} has "
                f"(N={s.adjacency.shape[0]}, d={s.node_features.shape[1]}, "
                f"c={s.feature_vector.shape[0]})")
    cohort = Cohort(subjects=tuple(subjects), class_names=tuple(class_names),
                    dims=(n, d, c))
    return validate_cohort(cohort)
