"""Synthetic multimodal cohorts with a planted, tunable class signal.

Structural graphs come from a planted-community model; class 1 loses a
separation-proportional fraction of the edges incident to a configurable
set of disease nodes. Time-series features are class-conditional Gaussians
whose disease-node rows are mean-shifted for class 1, and the image feature
vector is a Gaussian whose class means are `separation` noise units apart.
With separation 0 the two classes are distributionally identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .datamodel import Cohort, DataError, Subject, derive_seed, save_cohort

# Fraction of disease-incident edges removed per unit of separation.
EDGE_REMOVAL_PER_UNIT = 0.1


@dataclass(frozen=True)
class SynthSpec:
    """Shape, signal, and topology knobs for one generated cohort."""

    n_per_class: int = 40
    n_nodes: int = 90
    ts_dim: int = 187
    vec_dim: int = 128
    separation: float = 0.0
    noise: float = 1.0
    communities: int = 4
    disease_rois: tuple = tuple(range(12))
    seed: int = 0
    intra_p: float = 0.6
    inter_p: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "disease_rois",
                           tuple(int(i) for i in self.disease_rois))
        if min(self.n_per_class, self.n_nodes, self.ts_dim, self.vec_dim,
               self.communities) < 1:
            raise DataError("all counts in a synth spec must be positive")
        if self.separation < 0:
            raise DataError("separation must be >= 0")
        if not self.noise > 0:
            raise DataError("noise must be > 0")
        if self.disease_rois and (min(self.disease_rois) < 0
                                  or max(self.disease_rois) >= self.n_nodes):
            raise DataError(f"disease ROI indices out of range [0, {self.n_nodes})")
        for p in (self.intra_p, self.inter_p):
            if not 0 <= p <= 1:
                raise DataError("edge probabilities must be in [0, 1]")


def ts_shift_direction(ts_dim: int) -> np.ndarray:
    """Unit direction of the planted time-series mean shift."""
    return np.full(ts_dim, 1.0 / np.sqrt(ts_dim))


def vec_shift_direction(vec_dim: int) -> np.ndarray:
    """Unit direction of the planted feature-vector mean shift."""
    return np.full(vec_dim, 1.0 / np.sqrt(vec_dim))


def _community_labels(n_nodes: int, communities: int) -> np.ndarray:
    return (np.arange(n_nodes) * communities) // n_nodes


def _sample_adjacency(rng: np.random.Generator, spec: SynthSpec, label: int) -> np.ndarray:
    comm = _community_labels(spec.n_nodes, spec.communities)
    same = comm[:, None] == comm[None, :]
    prob = np.where(same, spec.intra_p, spec.inter_p)
    upper = np.triu(rng.random((spec.n_nodes, spec.n_nodes)) < prob, k=1)
    if label == 1 and spec.separation > 0 and spec.disease_rois:
        removal = min(1.0, EDGE_REMOVAL_PER_UNIT * spec.separation)
        sick = np.zeros(spec.n_nodes, dtype=bool)
        sick[list(spec.disease_rois)] = True
        incident = sick[:, None] | sick[None, :]
        drop = np.triu(rng.random((spec.n_nodes, spec.n_nodes)) < removal, k=1)
        upper = upper & ~(incident & drop)
    adjacency = upper.astype(np.float64)
    return adjacency + adjacency.T


def _sample_subject(spec: SynthSpec, label: int, index: int) -> Subject:
    rng = np.random.default_rng(derive_seed(spec.seed, label, index))
    adjacency = _sample_adjacency(rng, spec, label)
    features = rng.normal(0.0, spec.noise, size=(spec.n_nodes, spec.ts_dim))
    vector = rng.normal(0.0, spec.noise, size=spec.vec_dim)
    if label == 1 and spec.separation > 0:
        shift = spec.separation * spec.noise
        if spec.disease_rois:
            features[list(spec.disease_rois)] += shift * ts_shift_direction(spec.ts_dim)
        vector += shift * vec_shift_direction(spec.vec_dim)
    return Subject(subject_id=f"subj{label * spec.n_per_class + index:03d}",
                   adjacency=adjacency, node_features=features,
                   feature_vector=vector, label=label)


def generate_cohort(spec: SynthSpec) -> Cohort:
    """Deterministically generate a balanced two-class cohort."""
    subjects = [_sample_subject(spec, label, i)
                for label in (0, 1) for i in range(spec.n_per_class)]
    return Cohort(subjects=tuple(subjects),
                  class_names=("control", "patient"),
                  dims=(spec.n_nodes, spec.ts_dim, spec.vec_dim))


def write_cohort(cohort: Cohort, out_dir: Union[str, Path]) -> Path:
    """Emit the cohort in the shared CSV formats; returns the manifest path."""
    return save_cohort(cohort, out_dir)
