"""Graph autoencoder for the precomputed image feature vector.

The single c-dim vector is first spread over the graph: every node receives
V/N and one normalized-adjacency diffusion step lets the structural
connectivity guide the flow between connected regions. A two-layer GCN
encoder then produces per-node latents; the decoder maps each node back to
c dims and mean-pools the rows into one reconstructed vector. Classification
reuses the shared mean-pooled latent classifier head.
"""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from .graphgan import (ArrayLike, DTYPE, GcnLayer, as_tensor, bce_mean,
                       glorot, normalized_adjacency)


def distribute_features(feature_vector: ArrayLike, adjacency: ArrayLike,
                        steps: int = 1) -> torch.Tensor:
    """Spread a c-vector over N nodes: uniform V/N rows, then `steps`
    diffusion steps with the self-loop-normalized adjacency."""
    v = as_tensor(feature_vector).reshape(-1)
    a = as_tensor(adjacency)
    n = a.shape[0]
    field = (v / n).expand(n, -1)
    if steps > 0:
        adj_norm = normalized_adjacency(a)
        for _ in range(steps):
            field = adj_norm @ field
    return field


class VectorBranch(nn.Module):
    """Encoder + decoder for the distributed image-feature modality."""

    def __init__(self, vec_dim: int, enc_hidden: int, latent_dim: int,
                 dec_hidden: int, rng: np.random.Generator):
        super().__init__()
        self.enc1 = GcnLayer(vec_dim, enc_hidden, rng)
        self.enc2 = GcnLayer(enc_hidden, latent_dim, rng)
        # The decoder acts per node, with no graph mixing.
        self.dec_w1 = nn.Parameter(glorot(rng, latent_dim, dec_hidden))
        self.dec_b1 = nn.Parameter(torch.zeros(dec_hidden, dtype=DTYPE))
        self.dec_w2 = nn.Parameter(glorot(rng, dec_hidden, vec_dim))
        self.dec_b2 = nn.Parameter(torch.zeros(vec_dim, dtype=DTYPE))

    def encode(self, adj_norm: torch.Tensor, distributed: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(self.enc1(adj_norm, distributed))
        return self.enc2(adj_norm, h)

    def decode(self, rep: torch.Tensor) -> torch.Tensor:
        h = torch.tanh(rep @ self.dec_w1 + self.dec_b1)
        per_node = torch.sigmoid(h @ self.dec_w2 + self.dec_b2)
        return per_node.mean(dim=0)


def vector_reconstruction_loss(v_target: ArrayLike, v_recon: ArrayLike) -> torch.Tensor:
    """Cross-entropy between the [0, 1]-rescaled vector and its reconstruction."""
    return bce_mean(as_tensor(v_target).reshape(-1), as_tensor(v_recon).reshape(-1))
