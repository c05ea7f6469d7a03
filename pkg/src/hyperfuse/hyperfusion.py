"""Hypergraph construction and adversarial fusion of two latent modalities.

Each node centers one hyperedge containing its K nearest latent-space
neighbors, so the incidence matrix is square (one hyperedge per node). Node
features are pulled onto hyperedges (aggregation for one branch, a trainable
linear convolution for the other), a critic aligns the two hyperedge-feature
distributions adversarially, and edge aggregation fuses both branches back
into node features whose bilinear pooling gives the connectivity matrix fed
to the final classifier.

The default normalization applies the edge-degree (resp. node-degree)
inverse square root on both sides of the incidence product, which is
well-defined here precisely because the incidence is square; the "standard"
mode offers the usual D_v/D_e mixed normalization for experimentation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import torch
from torch import nn

from .graphgan import (ArrayLike, DTYPE, LEAKY_SLOPE, as_tensor,
                       classification_loss, glorot)

# Weight of the alignment term inside the combined fusion loss.
ALIGNMENT_WEIGHT = 0.1


class HypergraphError(ValueError):
    """Raised for invalid hypergraph construction or normalization inputs."""


@dataclass(frozen=True)
class Hypergraph:
    """Binary incidence matrix (nodes x hyperedges) with degree diagonals."""

    incidence: torch.Tensor
    neighborhood_size: int

    def __post_init__(self):
        h = as_tensor(self.incidence)
        object.__setattr__(self, "incidence", h)
        if h.dim() != 2:
            raise HypergraphError(f"incidence must be 2-D, got shape {tuple(h.shape)}")
        if torch.any(h.sum(dim=0) <= 0):
            raise HypergraphError("every hyperedge must contain at least one node")

    @property
    def n_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]

    @property
    def edge_degrees(self) -> torch.Tensor:
        return self.incidence.sum(dim=0)

    @property
    def node_degrees(self) -> torch.Tensor:
        return self.incidence.sum(dim=1)


def build_hypergraph(rep: ArrayLike, neighborhood_size: int) -> Hypergraph:
    """One hyperedge per node: the node plus its K-1 nearest neighbors by
    Euclidean distance between latent rows; ties break toward lower index."""
    r = np.asarray(as_tensor(rep).detach().numpy(), dtype=np.float64)
    if r.ndim != 2:
        raise HypergraphError(f"representation must be 2-D, got shape {r.shape}")
    if not np.isfinite(r).all():
        raise HypergraphError("representation contains non-finite values")
    n = r.shape[0]
    k = int(neighborhood_size)
    if not 1 <= k <= n:
        raise HypergraphError(f"neighborhood size {k} out of range [1, {n}]")

    norms = (r ** 2).sum(axis=1)
    sq = norms[:, None] + norms[None, :] - 2.0 * (r @ r.T)
    # Force each center to sort first in its own row; a stable sort then
    # breaks distance ties toward the lower node index.
    np.fill_diagonal(sq, -1.0)
    members = np.argsort(sq, axis=1, kind="stable")[:, :k]
    incidence = np.zeros((n, n), dtype=np.float64)
    incidence[members.ravel(), np.repeat(np.arange(n), k)] = 1.0
    return Hypergraph(incidence=torch.as_tensor(incidence, dtype=DTYPE),
                      neighborhood_size=k)


def _require_square(hg: Hypergraph, op: str) -> None:
    if hg.n_nodes != hg.n_edges:
        raise HypergraphError(
            f"{op} with 'paper' normalization needs a square incidence; "
            f"got {hg.n_nodes} nodes x {hg.n_edges} hyperedges")


def vertex_aggregate(hg: Hypergraph, feats: ArrayLike,
                     normalization: str = "paper") -> torch.Tensor:
    """Node features -> hyperedge features, with no trainable weights."""
    x = as_tensor(feats)
    h = hg.incidence
    if normalization == "paper":
        _require_square(hg, "vertex_aggregate")
        de = hg.edge_degrees.rsqrt()
        return de[:, None] * (h.T @ (de[:, None] * x))
    if normalization == "standard":
        dv = hg.node_degrees.rsqrt()
        return (h.T @ (dv[:, None] * x)) / hg.edge_degrees[:, None]
    raise HypergraphError(f"unknown normalization {normalization!r}")


def vertex_convolve(hg: Hypergraph, feats: ArrayLike, theta: ArrayLike,
                    normalization: str = "paper") -> torch.Tensor:
    """Vertex aggregation followed by the trainable q x q linear map."""
    return vertex_aggregate(hg, feats, normalization) @ as_tensor(theta)


def edge_aggregate(hg: Hypergraph, edge_feats: ArrayLike,
                   normalization: str = "paper") -> torch.Tensor:
    """Hyperedge features -> node features for a single branch."""
    x = as_tensor(edge_feats)
    dv = hg.node_degrees.rsqrt()
    if normalization == "paper":
        _require_square(hg, "edge_aggregate")
        return dv[:, None] * (hg.incidence @ (dv[:, None] * x))
    if normalization == "standard":
        return dv[:, None] * (hg.incidence @ x)
    raise HypergraphError(f"unknown normalization {normalization!r}")


def edge_aggregate_fuse(hg_first: Hypergraph, hg_second: Hypergraph,
                        edge_feats_first: ArrayLike, edge_feats_second: ArrayLike,
                        normalization: str = "paper") -> torch.Tensor:
    """Hyperedge features -> fused node features, summing the two branches."""
    return (edge_aggregate(hg_first, edge_feats_first, normalization)
            + edge_aggregate(hg_second, edge_feats_second, normalization))


def bilinear_connectivity(fused: ArrayLike) -> torch.Tensor:
    """Connectivity by bilinear pooling: sigmoid(F F^T)."""
    f = as_tensor(fused)
    return torch.sigmoid(f @ f.T)


class HyperedgeCritic(nn.Module):
    """Two-stage score for an (E, q) hyperedge-feature matrix.

    Stage 1 contracts the hyperedge axis with one shared length-E filter
    (leaky-rectified), leaving a q-vector; stage 2 contracts the feature
    axis into a single unbounded score.
    """

    def __init__(self, n_edges: int, latent_dim: int, rng: np.random.Generator):
        super().__init__()
        self.edge_filter = nn.Parameter(glorot(rng, n_edges, 1, (n_edges,)))
        self.edge_bias = nn.Parameter(torch.zeros((), dtype=DTYPE))
        self.feature_filter = nn.Parameter(glorot(rng, latent_dim, 1, (latent_dim,)))
        self.feature_bias = nn.Parameter(torch.zeros((), dtype=DTYPE))

    def score(self, edge_feats: torch.Tensor) -> torch.Tensor:
        per_feature = torch.nn.functional.leaky_relu(
            edge_feats.T @ self.edge_filter + self.edge_bias, LEAKY_SLOPE)
        return per_feature @ self.feature_filter + self.feature_bias

    forward = score


class ConnectivityClassifier(nn.Module):
    """Row-mean-pool a connectivity matrix, then a two-layer softmax head."""

    def __init__(self, n_nodes: int, hidden: int, rng: np.random.Generator,
                 n_classes: int = 2):
        super().__init__()
        self.w1 = nn.Parameter(glorot(rng, n_nodes, hidden))
        self.b1 = nn.Parameter(torch.zeros(hidden, dtype=DTYPE))
        self.w2 = nn.Parameter(glorot(rng, hidden, n_classes))
        self.b2 = nn.Parameter(torch.zeros(n_classes, dtype=DTYPE))

    def forward(self, connectivity: torch.Tensor) -> torch.Tensor:
        pooled = connectivity.mean(dim=1)
        h = torch.tanh(pooled @ self.w1 + self.b1)
        return torch.softmax(h @ self.w2 + self.b2, dim=-1)


@dataclass(frozen=True)
class FusionLossParts:
    """Components of the fusion objective and their printed combination."""

    critic_term: torch.Tensor          # E[score(aggregated branch)]
    alignment_term: torch.Tensor       # -E[score(convolved branch)]
    classification_term: torch.Tensor  # cross-entropy of the final classifier
    total: torch.Tensor


def _mean_edge_score(critic: HyperedgeCritic, batch) -> torch.Tensor:
    if isinstance(batch, (list, tuple)):
        return torch.stack([critic.score(as_tensor(b)) for b in batch]).mean()
    t = as_tensor(batch)
    if t.dim() == 2:
        return critic.score(t)
    return torch.stack([critic.score(t[i]) for i in range(t.shape[0])]).mean()


def fusion_loss(critic: HyperedgeCritic, aggregated_batch, convolved_batch,
                labels_onehot: Sequence, predictions: Sequence) -> FusionLossParts:
    """Adversarial + classification objective of the fusion stage.

    The critic trains on critic_term + ALIGNMENT_WEIGHT * alignment_term;
    the convolution weights train on the sign-consistent counterpart
    E[score(convolved)]; the classification term trains the final head.
    """
    critic_term = _mean_edge_score(critic, aggregated_batch)
    alignment_term = -_mean_edge_score(critic, convolved_batch)
    labels = [as_tensor(y) for y in labels_onehot]
    preds = [as_tensor(p) for p in predictions]
    if len(labels) != len(preds) or not labels:
        raise ValueError("labels and predictions must be equal-length, non-empty")
    classification_term = torch.stack(
        [classification_loss(y, p) for y, p in zip(labels, preds)]).mean()
    total = critic_term + ALIGNMENT_WEIGHT * alignment_term + classification_term
    return FusionLossParts(critic_term=critic_term,
                           alignment_term=alignment_term,
                           classification_term=classification_term,
                           total=total)
