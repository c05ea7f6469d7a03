"""Adversarial graph autoencoder over (adjacency, time-series) inputs.

A two-layer GCN encoder maps node features to latent representations; a
mirrored GCN decoder reconstructs the features and an inner-product decoder
reconstructs the adjacency. A two-stage critic scores whole latent matrices
so the encoder can be pushed toward the KDE-estimated prior, and a small
mean-pooled perceptron head classifies the latents.

Loss sign conventions follow the critic-style min-max pair: the critic
minimizes -E[score(encoded)] + E[score(prior)] while the encoder minimizes
E[score(encoded)]; reconstruction and classification losses are standard
(positive) cross-entropies minimized at zero.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn

DTYPE = torch.float64
LEAKY_SLOPE = 0.2
PROB_EPS = 1e-12

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence]


def as_tensor(value: ArrayLike) -> torch.Tensor:
    if isinstance(value, torch.Tensor):
        return value.to(DTYPE)
    arr = np.asarray(value)
    if isinstance(arr, np.ndarray) and not arr.flags.writeable:
        arr = arr.copy()
    return torch.as_tensor(arr, dtype=DTYPE)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int,
           shape: Optional[tuple] = None) -> torch.Tensor:
    """Uniform init in +/- sqrt(6 / (fan_in + fan_out))."""
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    if shape is None:
        shape = (fan_in, fan_out)
    return torch.as_tensor(rng.uniform(-limit, limit, size=shape), dtype=DTYPE)


def normalized_adjacency(adjacency: ArrayLike) -> torch.Tensor:
    """Self-loop symmetric normalization: D^{-1/2} (A + I) D^{-1/2}."""
    a = as_tensor(adjacency)
    n = a.shape[0]
    with_loops = a + torch.eye(n, dtype=DTYPE)
    inv_sqrt_deg = with_loops.sum(dim=1).rsqrt()
    return inv_sqrt_deg[:, None] * with_loops * inv_sqrt_deg[None, :]


def gcn_layer(adjacency: ArrayLike, node_states: ArrayLike,
              weight: ArrayLike, bias: ArrayLike,
              activation: Optional[Callable] = None) -> torch.Tensor:
    """One graph-convolution step: act(norm(A) @ H @ W + b)."""
    h = as_tensor(node_states)
    w = as_tensor(weight)
    if h.shape[1] != w.shape[0]:
        raise ValueError(f"state dim {h.shape[1]} != weight rows {w.shape[0]}")
    out = normalized_adjacency(adjacency) @ h @ w + as_tensor(bias)
    return activation(out) if activation is not None else out


class GcnLayer(nn.Module):
    """Graph convolution with an externally precomputed normalized adjacency."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.weight = nn.Parameter(glorot(rng, in_dim, out_dim))
        self.bias = nn.Parameter(torch.zeros(out_dim, dtype=DTYPE))

    def forward(self, adj_norm: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
        return adj_norm @ h @ self.weight + self.bias


class GraphBranch(nn.Module):
    """Encoder + feature decoder for the (adjacency, time-series) modality pair."""

    def __init__(self, ts_dim: int, enc_hidden: int, latent_dim: int,
                 dec_hidden: int, rng: np.random.Generator):
        super().__init__()
        self.enc1 = GcnLayer(ts_dim, enc_hidden, rng)
        self.enc2 = GcnLayer(enc_hidden, latent_dim, rng)
        self.dec1 = GcnLayer(latent_dim, dec_hidden, rng)
        self.dec2 = GcnLayer(dec_hidden, ts_dim, rng)

    def encode(self, adj_norm: torch.Tensor, node_features: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(self.enc1(adj_norm, node_features))
        return self.enc2(adj_norm, h)

    def decode_features(self, adj_norm: torch.Tensor, latent: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(self.dec1(adj_norm, latent))
        return torch.sigmoid(self.dec2(adj_norm, h))


def decode_adjacency(latent: ArrayLike) -> torch.Tensor:
    """Inner-product decoder: sigmoid(Z Z^T); symmetric with entries in (0, 1)."""
    z = as_tensor(latent)
    return torch.sigmoid(z @ z.T)


class LatentCritic(nn.Module):
    """Two-stage score for an (N, q) latent matrix.

    Stage 1 contracts the feature axis with one shared length-q filter
    (leaky-rectified), giving one value per node; stage 2 contracts the node
    axis with a length-N filter into a single unbounded score.
    """

    def __init__(self, latent_dim: int, n_nodes: int, rng: np.random.Generator):
        super().__init__()
        self.feature_filter = nn.Parameter(glorot(rng, latent_dim, 1, (latent_dim,)))
        self.feature_bias = nn.Parameter(torch.zeros((), dtype=DTYPE))
        self.node_filter = nn.Parameter(glorot(rng, n_nodes, 1, (n_nodes,)))
        self.node_bias = nn.Parameter(torch.zeros((), dtype=DTYPE))

    def score(self, latent: torch.Tensor) -> torch.Tensor:
        per_node = torch.nn.functional.leaky_relu(
            latent @ self.feature_filter + self.feature_bias, LEAKY_SLOPE)
        return per_node @ self.node_filter + self.node_bias

    forward = score


class LatentClassifier(nn.Module):
    """Mean-pool over nodes, then a two-layer perceptron with softmax output."""

    def __init__(self, latent_dim: int, hidden: int, rng: np.random.Generator,
                 n_classes: int = 2):
        super().__init__()
        self.w1 = nn.Parameter(glorot(rng, latent_dim, hidden))
        self.b1 = nn.Parameter(torch.zeros(hidden, dtype=DTYPE))
        self.w2 = nn.Parameter(glorot(rng, hidden, n_classes))
        self.b2 = nn.Parameter(torch.zeros(n_classes, dtype=DTYPE))

    def forward(self, rep: torch.Tensor) -> torch.Tensor:
        pooled = rep.mean(dim=0)
        h = torch.tanh(pooled @ self.w1 + self.b1)
        return torch.softmax(h @ self.w2 + self.b2, dim=-1)


def _mean_score(critic: nn.Module, batch: ArrayLike) -> torch.Tensor:
    """Average critic score over one matrix or a batch of matrices."""
    if isinstance(batch, (list, tuple)):
        return torch.stack([critic.score(as_tensor(b)) for b in batch]).mean()
    t = as_tensor(batch)
    if t.dim() == 2:
        return critic.score(t)
    return torch.stack([critic.score(t[i]) for i in range(t.shape[0])]).mean()


def critic_loss(critic: LatentCritic, encoded: ArrayLike, prior_draws: ArrayLike) -> torch.Tensor:
    """-E[score(encoded)] + E[score(prior)]; minimized by the critic."""
    return -_mean_score(critic, encoded) + _mean_score(critic, prior_draws)


def encoder_adversarial_loss(critic: LatentCritic, encoded: ArrayLike) -> torch.Tensor:
    """E[score(encoded)]; minimized by the encoder."""
    return _mean_score(critic, encoded)


def bce_mean(target: ArrayLike, prediction: ArrayLike) -> torch.Tensor:
    """Mean binary cross-entropy with the 0*log(0) := 0 convention.

    Targets must lie in [0, 1]; predictions are clamped away from {0, 1}.
    """
    t = as_tensor(target)
    p = as_tensor(prediction)
    if t.shape != p.shape:
        raise ValueError(f"target shape {tuple(t.shape)} != prediction shape {tuple(p.shape)}")
    if torch.any(t < 0) or torch.any(t > 1):
        raise ValueError("cross-entropy target outside [0, 1]")
    p = p.clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()


def graph_reconstruction_loss(x_target: ArrayLike, x_recon: ArrayLike,
                              a_target: ArrayLike, a_recon: ArrayLike) -> torch.Tensor:
    """Feature and adjacency reconstruction cross-entropies, summed.

    Feature targets must already be rescaled into [0, 1] (the decoder output
    is sigmoidal); zero at perfect reconstruction.
    """
    return bce_mean(x_target, x_recon) + bce_mean(a_target, a_recon)


def classification_loss(label_onehot: ArrayLike, probs: ArrayLike) -> torch.Tensor:
    """Cross-entropy -sum(y * log p); zero at a confident correct prediction."""
    y = as_tensor(label_onehot)
    p = as_tensor(probs).clamp(PROB_EPS, 1.0 - PROB_EPS)
    return -(y * torch.log(p)).sum()


def clip_parameters(module: nn.Module, bound: float) -> None:
    """In-place clamp of all parameters to [-bound, bound] (critic stabilizer)."""
    if bound <= 0:
        return
    with torch.no_grad():
        for p in module.parameters():
            p.clamp_(-bound, bound)
