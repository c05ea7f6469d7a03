"""Multimodal brain-network classification: adversarial latent representation
learning over structural/functional graphs plus hypergraph fusion of the
learned representations."""

__version__ = "0.1.0"
