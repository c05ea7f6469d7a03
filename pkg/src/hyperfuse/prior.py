"""Latent prior estimation: diverse node selection, PCA reduction, Gaussian KDE.

The prior over the latent space is estimated from the graph data itself
rather than assumed standard normal: a size-m node subset is drawn by an
exact k-DPP on the adjacency (favoring structurally diverse regions), the
selected node features are reduced to the latent dimension by PCA, and the
reduced rows become centers of an isotropic Gaussian kernel density. The
fitted density acts as the "real" sample source for the latent critic.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .datamodel import DataError, derive_seed, read_matrix, write_matrix

# Ridge added to the adjacency before the spectral shift that makes the
# k-DPP kernel positive definite.
KDPP_RIDGE = 1e-3


class PriorError(DataError):
    """Raised for invalid prior-fitting inputs."""


@dataclass(frozen=True)
class NodeSubset:
    """A size-m set of node indices into {0..N-1}."""

    indices: tuple

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise PriorError(f"duplicate node indices in subset: {idx}")
        object.__setattr__(self, "indices", idx)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass(frozen=True)
class PcaMap:
    """Affine projection onto the top principal directions.

    `components` has orthonormal columns (d x q); `explained_variance` is
    non-increasing.
    """

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def transform(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) @ self.components

    def inverse_transform(self, reduced: np.ndarray) -> np.ndarray:
        return np.asarray(reduced, dtype=np.float64) @ self.components.T + self.mean


@dataclass(frozen=True)
class LatentPrior:
    """Equal-weight isotropic Gaussian mixture over latent-space centers."""

    centers: np.ndarray   # (m, q)
    bandwidth: float

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=np.float64))
        if not np.isfinite(centers).all():
            raise PriorError("prior centers contain non-finite values")
        if not self.bandwidth > 0:
            raise PriorError(f"bandwidth must be > 0, got {self.bandwidth}")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def log_pdf(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        m, q = self.centers.shape
        b2 = self.bandwidth ** 2
        sq = ((pts[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=-1)
        logw = -0.5 * q * np.log(2.0 * np.pi * b2) - sq / (2.0 * b2)
        peak = logw.max(axis=1, keepdims=True)
        return (peak.ravel()
                + np.log(np.exp(logw - peak).sum(axis=1))
                - np.log(m))

    def pdf(self, points: np.ndarray) -> np.ndarray:
        return np.exp(self.log_pdf(points))


def kdpp_kernel(adjacency: np.ndarray) -> np.ndarray:
    """Positive-definite k-DPP kernel built from a binary adjacency.

    A ridge of 1e-3 alone cannot make A + eps*I positive definite for any
    graph with at least one edge (the smallest adjacency eigenvalue is
    <= -1 there), so the identity coefficient is raised by the magnitude
    of the most negative eigenvalue. Eigenvectors, hence the diversity
    structure, are unchanged by the shift.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    n = a.shape[0]
    eigvals = np.linalg.eigvalsh(a)
    shift = KDPP_RIDGE + max(0.0, -float(eigvals[0]))
    kernel = a + shift * np.eye(n)
    if np.linalg.eigvalsh(kernel)[0] <= 0:
        raise PriorError("k-DPP kernel not positive definite after regularization")
    return kernel


def _elementary_symmetric(eigvals: np.ndarray, k: int) -> np.ndarray:
    """Table E[j, i] = e_j(eigvals[:i]) of elementary symmetric polynomials."""
    n = len(eigvals)
    table = np.zeros((k + 1, n + 1))
    table[0, :] = 1.0
    for i in range(1, n + 1):
        for j in range(1, k + 1):
            table[j, i] = table[j, i - 1] + eigvals[i - 1] * table[j - 1, i - 1]
    return table


def _select_eigen_indices(eigvals: np.ndarray, k: int, rng: np.random.Generator) -> list:
    table = _elementary_symmetric(eigvals, k)
    chosen = []
    j = k
    for i in range(len(eigvals), 0, -1):
        if j == 0:
            break
        if j == i:
            # All remaining eigenvalues are forced.
            chosen.extend(range(i))
            j = 0
            break
        prob = eigvals[i - 1] * table[j - 1, i - 1] / table[j, i]
        if rng.random() < prob:
            chosen.append(i - 1)
            j -= 1
    return chosen


def _sample_from_eigenvectors(vectors: np.ndarray, rng: np.random.Generator) -> list:
    """Phase 2 of exact DPP sampling: draw one item per selected eigenvector."""
    v = vectors.copy()
    items = []
    while v.shape[1] > 0:
        probs = (v ** 2).sum(axis=1)
        probs = np.clip(probs, 0.0, None)
        probs /= probs.sum()
        i = int(rng.choice(len(probs), p=probs))
        items.append(i)
        col = int(np.argmax(np.abs(v[i, :])))
        pivot = v[:, col].copy()
        v = np.delete(v, col, axis=1)
        if v.shape[1] > 0:
            v = v - np.outer(pivot, v[i, :] / pivot[i])
            q, _ = np.linalg.qr(v)
            v = q
    return sorted(items)


def sample_node_subsets(adjacency: np.ndarray, size: int, count: int, seed: int,
                        candidates: Optional[Sequence[int]] = None) -> list:
    """Draw `count` independent size-m subsets from an exact k-DPP.

    P(U) is proportional to det(L_U) for the regularized kernel L, so
    structurally diverse subsets are favored. Optionally restricted to a
    candidate whitelist of node indices. Deterministic given the seed; the
    eigendecomposition is shared across draws.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    n = a.shape[0]
    if candidates is None:
        pool = np.arange(n)
    else:
        pool = np.array(sorted(set(int(i) for i in candidates)), dtype=int)
        if pool.size == 0 or pool.min() < 0 or pool.max() >= n:
            raise PriorError(f"candidate indices out of range [0, {n})")
    if not 1 <= size <= pool.size:
        raise PriorError(f"subset size {size} out of range [1, {pool.size}]")

    kernel = kdpp_kernel(a[np.ix_(pool, pool)])
    eigvals, eigvecs = np.linalg.eigh(kernel)
    rng = np.random.default_rng(seed)
    subsets = []
    for _ in range(count):
        eigen_idx = _select_eigen_indices(eigvals, size, rng)
        local = _sample_from_eigenvectors(eigvecs[:, eigen_idx], rng)
        subsets.append(NodeSubset(indices=tuple(int(pool[i]) for i in local)))
    return subsets


def select_roi_subset(adjacency: np.ndarray, size: int, seed: int,
                      candidates: Optional[Sequence[int]] = None) -> NodeSubset:
    """Draw one size-m node subset from the exact k-DPP on the adjacency."""
    return sample_node_subsets(adjacency, size, 1, seed, candidates)[0]


def fit_pca(features: np.ndarray, n_components: int) -> PcaMap:
    """PCA on mean-centered rows; components are top right singular vectors."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise PriorError(f"expected a 2-D feature matrix, got shape {x.shape}")
    m, d = x.shape
    q = int(n_components)
    if not 1 <= q <= min(m, d):
        raise PriorError(f"n_components {q} out of range [1, min({m}, {d})]")
    mean = x.mean(axis=0)
    centered = x - mean
    if np.abs(centered).max() == 0.0:
        raise PriorError("degenerate input: all rows identical (zero variance)")
    _, sing, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:q].T
    # Fix the sign of each direction so results do not depend on the LAPACK
    # implementation's arbitrary choice.
    anchor = np.argmax(np.abs(components), axis=0)
    signs = np.sign(components[anchor, np.arange(q)])
    signs[signs == 0] = 1.0
    components = components * signs
    explained = sing[:q] ** 2 / max(m - 1, 1)
    return PcaMap(mean=mean, components=components, explained_variance=explained)


def fit_kde(centers: np.ndarray, bandwidth: Union[str, float] = "scott") -> LatentPrior:
    """Fit the equal-weight Gaussian mixture density over the given centers.

    "scott" picks b = m^(-1/(q+4)) * mean per-dimension sample std of the
    centers; a positive float fixes b directly.
    """
    z = np.atleast_2d(np.asarray(centers, dtype=np.float64))
    if not np.isfinite(z).all():
        raise PriorError("non-finite centers")
    m, q = z.shape
    if isinstance(bandwidth, str):
        if bandwidth != "scott":
            raise PriorError(f"unknown bandwidth policy {bandwidth!r}")
        if m < 2:
            raise PriorError("scott bandwidth needs at least 2 centers")
        spread = z.std(axis=0, ddof=1).mean()
        if spread <= 0:
            raise PriorError("scott bandwidth undefined for zero-variance centers")
        b = m ** (-1.0 / (q + 4)) * spread
    else:
        b = float(bandwidth)
    return LatentPrior(centers=z, bandwidth=b)


def sample_prior(prior: LatentPrior, count: int, seed: int) -> np.ndarray:
    """Draw samples: a uniformly chosen center plus isotropic noise of scale b."""
    if count < 1:
        raise PriorError(f"sample count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    m, q = prior.centers.shape
    idx = rng.integers(0, m, size=count)
    noise = rng.standard_normal((count, q))
    return prior.centers[idx] + prior.bandwidth * noise


def fit_cohort_prior(subjects, config, seed: int) -> LatentPrior:
    """Estimate one latent prior from a training cohort.

    Per subject, a k-DPP subset of nodes is selected on its adjacency and the
    matching node-feature rows are collected; the pooled rows are PCA-reduced
    to the latent dimension and used as KDE centers. Pooling across subjects
    keeps the PCA well-posed (the latent dimension typically exceeds the
    per-subject subset size) and yields a single prior for the whole cohort.
    """
    rows = []
    for i, s in enumerate(subjects):
        subset = select_roi_subset(s.adjacency, config.prior_subset_size,
                                   derive_seed(seed, i),
                                   candidates=config.roi_whitelist)
        rows.append(np.asarray(s.node_features)[list(subset.indices)])
    pooled = np.vstack(rows)
    if pooled.shape[0] < config.latent_dim:
        raise PriorError(
            f"{pooled.shape[0]} pooled rows cannot support a "
            f"{config.latent_dim}-dim PCA; use more subjects or a larger "
            f"prior_subset_size")
    pca = fit_pca(pooled, config.latent_dim)
    return fit_kde(pca.transform(pooled), config.bandwidth)


def save_prior(prior: LatentPrior, out_dir: Union[str, Path]) -> Path:
    """Write the prior as a CSV bundle (centers + bandwidth); returns the dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_matrix(prior.centers, out_dir / "centers.csv")
    write_matrix(np.array([[prior.bandwidth]]), out_dir / "bandwidth.csv")
    return out_dir


def load_prior(in_dir: Union[str, Path]) -> LatentPrior:
    in_dir = Path(in_dir)
    centers = read_matrix(in_dir / "centers.csv")
    bandwidth = float(read_matrix(in_dir / "bandwidth.csv").ravel()[0])
    return LatentPrior(centers=centers, bandwidth=bandwidth)
