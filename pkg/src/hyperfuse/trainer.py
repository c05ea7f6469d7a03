"""Two-stage training: representation learning, then hypergraph fusion.

Stage 1 walks the cohort per subject (batch size 1, reshuffled every epoch)
and applies three sub-steps in order: (1) reconstruction + adversarial
losses update both autoencoder branches, (2) the latent critic updates on
encoded-vs-prior samples and is weight-clipped, (3) classification losses
update the encoders and the shared classifier head. Stage 2 freezes all
stage-1 parameters, rebuilds per-subject hypergraphs from the (now fixed)
representations each epoch, and alternates hyperedge-critic and convolution
updates before the final-classifier step.

Every update role owns its own optimizer. The encoders deliberately appear
in two optimizers (reconstruction role and classification role) with
independent moment estimates, so a step from one loss never drags
parameters that the other loss does not touch.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
import torch
from torch import nn

from . import cnnae, graphgan, hyperfusion
from .datamodel import (Cohort, DataError, ModelConfig, Subject, derive_seed,
                        minmax_scale, one_hot)
from .graphgan import as_tensor
from .prior import LatentPrior, fit_cohort_prior, sample_prior

CHECKPOINT_FORMAT = "hyperfuse-checkpoint-v1"

# Coefficient of the latent-critic term inside the reported total loss; the
# critic's own update is not scaled by it.
LATENT_CRITIC_WEIGHT = 0.1

LOSS_COLUMNS = ("adv_encoder", "critic_latent", "recon_graph", "recon_vector",
                "cls_latent", "cls_vector", "fusion_critic", "fusion_align",
                "fusion_cls", "fusion_total", "total")


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or parameter becomes non-finite during training."""


class FusionConvolution(nn.Module):
    """Trainable q x q linear map applied after vertex aggregation."""

    def __init__(self, latent_dim: int, rng: np.random.Generator):
        super().__init__()
        self.theta = nn.Parameter(graphgan.glorot(rng, latent_dim, latent_dim))


@dataclass
class TrainState:
    """All trainable parameter groups plus optimizer and logging state."""

    config: ModelConfig
    seed: int
    graph_branch: graphgan.GraphBranch
    vector_branch: cnnae.VectorBranch
    latent_critic: graphgan.LatentCritic
    latent_classifier: graphgan.LatentClassifier
    fusion_conv: FusionConvolution
    hyper_critic: hyperfusion.HyperedgeCritic
    conn_classifier: hyperfusion.ConnectivityClassifier
    optimizers: Dict[str, torch.optim.Optimizer]
    prior: Optional[LatentPrior] = None
    epochs_stage1: int = 0
    epochs_stage2: int = 0
    loss_history: List[dict] = field(default_factory=list)
    update_log: List[tuple] = field(default_factory=list)

    def modules(self) -> Dict[str, nn.Module]:
        return {
            "graph_branch": self.graph_branch,
            "vector_branch": self.vector_branch,
            "latent_critic": self.latent_critic,
            "latent_classifier": self.latent_classifier,
            "fusion_conv": self.fusion_conv,
            "hyper_critic": self.hyper_critic,
            "conn_classifier": self.conn_classifier,
        }

    def named_parameters(self) -> Dict[str, torch.Tensor]:
        out = {}
        for mod_name, module in self.modules().items():
            for p_name, p in module.named_parameters():
                out[f"{mod_name}.{p_name}"] = p
        return out


def _make_optimizer(params, lr: float, config: ModelConfig) -> torch.optim.Optimizer:
    params = list(params)
    if config.optimizer == "adam":
        return torch.optim.Adam(params, lr=lr, betas=(0.9, 0.999), eps=1e-8,
                                foreach=True)
    return torch.optim.SGD(params, lr=lr, foreach=True)


def init_state(config: ModelConfig, seed: Optional[int] = None) -> TrainState:
    """Build all modules with deterministic initialization from one seed."""
    torch.set_num_threads(1)
    seed = config.seed if seed is None else int(seed)
    rng = np.random.default_rng(derive_seed(seed, 0))
    graph_branch = graphgan.GraphBranch(config.ts_dim, config.enc_hidden,
                                        config.latent_dim, config.dec_hidden, rng)
    vector_branch = cnnae.VectorBranch(config.vec_dim, config.vec_enc_hidden,
                                       config.latent_dim, config.vec_dec_hidden, rng)
    latent_critic = graphgan.LatentCritic(config.latent_dim, config.n_nodes, rng)
    latent_classifier = graphgan.LatentClassifier(config.latent_dim,
                                                  config.latent_cls_hidden, rng)
    fusion_conv = FusionConvolution(config.latent_dim, rng)
    hyper_critic = hyperfusion.HyperedgeCritic(config.n_nodes, config.latent_dim, rng)
    conn_classifier = hyperfusion.ConnectivityClassifier(config.n_nodes,
                                                         config.conn_cls_hidden, rng)
    encoder_params = (list(graph_branch.enc1.parameters())
                      + list(graph_branch.enc2.parameters())
                      + list(vector_branch.enc1.parameters())
                      + list(vector_branch.enc2.parameters()))
    optimizers = {
        "autoencoders": _make_optimizer(
            list(graph_branch.parameters()) + list(vector_branch.parameters()),
            config.lr_model, config),
        "latent_critic": _make_optimizer(latent_critic.parameters(),
                                         config.lr_critic, config),
        "classifier": _make_optimizer(
            encoder_params + list(latent_classifier.parameters()),
            config.lr_model, config),
        # The convolution weights form the adversarial pair with the
        # hyperedge critic; running them at the model rate lets them outrun
        # the weight-clipped critic and the hyperedge features diverge.
        "fusion_conv": _make_optimizer(fusion_conv.parameters(),
                                       config.lr_critic, config),
        "hyper_critic": _make_optimizer(hyper_critic.parameters(),
                                        config.lr_critic, config),
        "conn_classifier": _make_optimizer(conn_classifier.parameters(),
                                           config.lr_model, config),
    }
    return TrainState(config=config, seed=seed, graph_branch=graph_branch,
                      vector_branch=vector_branch, latent_critic=latent_critic,
                      latent_classifier=latent_classifier, fusion_conv=fusion_conv,
                      hyper_critic=hyper_critic, conn_classifier=conn_classifier,
                      optimizers=optimizers)


@dataclass
class _SubjectCache:
    subject_id: str
    adj_norm: torch.Tensor
    adjacency: torch.Tensor
    node_features: torch.Tensor
    x_target: torch.Tensor
    distributed: torch.Tensor
    v_target: torch.Tensor
    label_onehot: torch.Tensor


def _prepare(subject: Subject, config: ModelConfig) -> _SubjectCache:
    adjacency = as_tensor(subject.adjacency)
    return _SubjectCache(
        subject_id=subject.subject_id,
        adj_norm=graphgan.normalized_adjacency(adjacency),
        adjacency=adjacency,
        node_features=as_tensor(subject.node_features),
        x_target=as_tensor(minmax_scale(subject.node_features)),
        distributed=cnnae.distribute_features(subject.feature_vector,
                                              adjacency, config.diffusion_steps),
        v_target=as_tensor(minmax_scale(subject.feature_vector)),
        label_onehot=as_tensor(one_hot(subject.label)),
    )


def _check_loss(value: torch.Tensor, what: str, stage: int, epoch: int,
                subject_id: str) -> float:
    v = float(value.detach())
    if not math.isfinite(v):
        raise TrainingDivergedError(
            f"non-finite {what} loss at stage {stage} epoch {epoch} "
            f"subject {subject_id}")
    return v


def _check_parameters(state: TrainState, stage: int, epoch: int) -> None:
    for name, p in state.named_parameters().items():
        if not torch.isfinite(p).all():
            raise TrainingDivergedError(
                f"non-finite parameter {name} after stage {stage} epoch {epoch}")


def _step(optimizer: torch.optim.Optimizer, loss: torch.Tensor,
          params: Sequence[torch.Tensor]) -> None:
    optimizer.zero_grad(set_to_none=True)
    loss.backward(inputs=list(params))
    optimizer.step()


def total_loss(components: Mapping[str, float], fusion_weight: float) -> float:
    """Reported weighted sum over the loss components of one epoch.

    Absent components contribute nothing; the latent-critic term carries its
    0.1 report weight; the fusion total is scaled by the fusion weight.
    """
    def get(key: str) -> float:
        v = components.get(key)
        return 0.0 if v is None else float(v)

    return (get("adv_encoder") + LATENT_CRITIC_WEIGHT * get("critic_latent")
            + get("recon_graph") + get("recon_vector")
            + get("cls_latent") + get("cls_vector")
            + fusion_weight * get("fusion_total"))


def _require_trainable_cohort(cohort: Cohort) -> None:
    if len(cohort) == 0:
        raise DataError("training cohort is empty")
    labels = set(int(s.label) for s in cohort.subjects)
    if labels != {0, 1}:
        raise DataError(f"training cohort needs both classes, found {sorted(labels)}")


def train_stage1(cohort: Cohort, config: ModelConfig,
                 seed: Optional[int] = None,
                 state: Optional[TrainState] = None) -> TrainState:
    """Representation learning over the training cohort."""
    _require_trainable_cohort(cohort)
    if state is None:
        state = init_state(config, seed)
    seed = state.seed
    trimodal = config.modalities == "trimodal"

    if config.epochs_stage1 > 0 and state.prior is None:
        state.prior = fit_cohort_prior(cohort.subjects, config, derive_seed(seed, 1))

    caches = [_prepare(s, config) for s in cohort.subjects]
    shuffle_rng = np.random.default_rng(derive_seed(seed, 2))
    gb, vb = state.graph_branch, state.vector_branch
    critic, head = state.latent_critic, state.latent_classifier
    opt = state.optimizers
    ae_params = list(gb.parameters()) + (list(vb.parameters()) if trimodal else [])
    cls_params = [p for grp in opt["classifier"].param_groups for p in grp["params"]]
    if not trimodal:
        vec_enc = set(id(p) for p in list(vb.enc1.parameters()) + list(vb.enc2.parameters()))
        cls_params = [p for p in cls_params if id(p) not in vec_enc]

    step_counter = 0
    for epoch in range(config.epochs_stage1):
        order = shuffle_rng.permutation(len(caches))
        sums = {k: 0.0 for k in ("adv_encoder", "critic_latent", "recon_graph",
                                 "recon_vector", "cls_latent", "cls_vector")}
        for idx in order:
            c = caches[idx]

            # (1) reconstruction + adversarial losses update both branches.
            latent = gb.encode(c.adj_norm, c.node_features)
            rec1 = graphgan.graph_reconstruction_loss(
                c.x_target, gb.decode_features(c.adj_norm, latent),
                c.adjacency, graphgan.decode_adjacency(latent))
            adv = graphgan.encoder_adversarial_loss(critic, latent)
            gen_loss = rec1 + adv
            if trimodal:
                rep = vb.encode(c.adj_norm, c.distributed)
                rec2 = cnnae.vector_reconstruction_loss(c.v_target, vb.decode(rep))
                gen_loss = gen_loss + rec2
                sums["recon_vector"] += _check_loss(rec2, "recon_vector", 1,
                                                    epoch, c.subject_id)
            sums["recon_graph"] += _check_loss(rec1, "recon_graph", 1, epoch,
                                               c.subject_id)
            sums["adv_encoder"] += _check_loss(adv, "adv_encoder", 1, epoch,
                                               c.subject_id)
            _step(opt["autoencoders"], gen_loss, ae_params)

            # (2) critic update on re-encoded (frozen) latents vs prior draws.
            with torch.no_grad():
                latent_fixed = gb.encode(c.adj_norm, c.node_features)
            draws = sample_prior(state.prior, config.n_nodes,
                                 derive_seed(seed, 3, step_counter))
            dz = graphgan.critic_loss(critic, latent_fixed, as_tensor(draws))
            sums["critic_latent"] += _check_loss(dz, "critic_latent", 1, epoch,
                                                 c.subject_id)
            _step(opt["latent_critic"], dz, list(critic.parameters()))
            graphgan.clip_parameters(critic, config.critic_clip)

            # (3) classification losses update encoders and the shared head.
            latent = gb.encode(c.adj_norm, c.node_features)
            cls1 = graphgan.classification_loss(c.label_onehot, head(latent))
            cls_loss = cls1
            if trimodal:
                rep = vb.encode(c.adj_norm, c.distributed)
                cls2 = graphgan.classification_loss(c.label_onehot, head(rep))
                cls_loss = cls_loss + cls2
                sums["cls_vector"] += _check_loss(cls2, "cls_vector", 1, epoch,
                                                  c.subject_id)
            sums["cls_latent"] += _check_loss(cls1, "cls_latent", 1, epoch,
                                              c.subject_id)
            _step(opt["classifier"], cls_loss, cls_params)
            step_counter += 1

        _check_parameters(state, 1, epoch)
        comps = {k: (v / len(caches) if (trimodal or not k.endswith("vector")) else None)
                 for k, v in sums.items()}
        row = {"stage": 1, "epoch": epoch, **comps,
               "fusion_critic": None, "fusion_align": None, "fusion_cls": None,
               "fusion_total": None}
        row["total"] = total_loss(row, config.fusion_weight)
        state.loss_history.append(row)
        state.epochs_stage1 += 1
    return state


def _frozen_stage1_components(state: TrainState, caches, trimodal: bool,
                              seed: int) -> dict:
    """Stage-1 component means under the frozen parameters, for reporting."""
    config = state.config
    gb, vb = state.graph_branch, state.vector_branch
    sums = {k: 0.0 for k in ("adv_encoder", "critic_latent", "recon_graph",
                             "recon_vector", "cls_latent", "cls_vector")}
    with torch.no_grad():
        for i, c in enumerate(caches):
            latent = gb.encode(c.adj_norm, c.node_features)
            sums["recon_graph"] += float(graphgan.graph_reconstruction_loss(
                c.x_target, gb.decode_features(c.adj_norm, latent),
                c.adjacency, graphgan.decode_adjacency(latent)))
            sums["adv_encoder"] += float(graphgan.encoder_adversarial_loss(
                state.latent_critic, latent))
            if state.prior is not None:
                draws = sample_prior(state.prior, config.n_nodes,
                                     derive_seed(seed, 9, i))
                sums["critic_latent"] += float(graphgan.critic_loss(
                    state.latent_critic, latent, as_tensor(draws)))
            sums["cls_latent"] += float(graphgan.classification_loss(
                c.label_onehot, state.latent_classifier(latent)))
            if trimodal:
                rep = vb.encode(c.adj_norm, c.distributed)
                sums["recon_vector"] += float(cnnae.vector_reconstruction_loss(
                    c.v_target, vb.decode(rep)))
                sums["cls_vector"] += float(graphgan.classification_loss(
                    c.label_onehot, state.latent_classifier(rep)))
    n = max(len(caches), 1)
    out = {k: v / n for k, v in sums.items()}
    if not trimodal:
        out["recon_vector"] = None
        out["cls_vector"] = None
    if state.prior is None:
        out["critic_latent"] = None
    return out


def train_stage2(state: TrainState, cohort: Cohort, config: ModelConfig,
                 seed: Optional[int] = None) -> TrainState:
    """Adversarial hypergraph fusion on frozen representations."""
    _require_trainable_cohort(cohort)
    seed = state.seed if seed is None else int(seed)
    trimodal = config.modalities == "trimodal"
    norm = config.hypergraph_norm
    k = config.hyperedge_size

    caches = [_prepare(s, config) for s in cohort.subjects]
    gb, vb = state.graph_branch, state.vector_branch
    with torch.no_grad():
        latents = [gb.encode(c.adj_norm, c.node_features) for c in caches]
        vec_reps = ([vb.encode(c.adj_norm, c.distributed) for c in caches]
                    if trimodal else [None] * len(caches))

    frozen = _frozen_stage1_components(state, caches, trimodal, seed)
    shuffle_rng = np.random.default_rng(derive_seed(seed, 4))
    critic, conv, head = state.hyper_critic, state.fusion_conv, state.conn_classifier
    opt = state.optimizers

    hypergraphs = None
    aggregated = None
    for _ in range(config.epochs_stage2):
        epoch = state.epochs_stage2
        if hypergraphs is None or not config.freeze_hypergraphs:
            # Rebuilt from the current representations; with frozen encoders
            # this reproduces the same structure every epoch by construction.
            hypergraphs = [
                (hyperfusion.build_hypergraph(latents[i], k),
                 hyperfusion.build_hypergraph(vec_reps[i], k) if trimodal else None)
                for i in range(len(caches))]
            aggregated = [hyperfusion.vertex_aggregate(hypergraphs[i][0],
                                                       latents[i], norm)
                          for i in range(len(caches))]

        sums = {"fusion_critic": 0.0, "fusion_align": 0.0, "fusion_cls": 0.0}
        order = shuffle_rng.permutation(len(caches))
        for idx in order:
            c = caches[idx]
            hg1, hg2 = hypergraphs[idx]
            agg = aggregated[idx]

            if trimodal:
                # (a) hyperedge-critic update; convolution weights frozen.
                # The critic's own step uses the unweighted sign-consistent
                # pair; the 0.1 coefficient enters only the reported
                # decomposition, matching the latent critic's treatment.
                with torch.no_grad():
                    convolved_fixed = hyperfusion.vertex_convolve(
                        hg2, vec_reps[idx], conv.theta, norm)
                pos_score = critic.score(agg)
                neg_score = critic.score(convolved_fixed)
                dh = pos_score - neg_score
                _check_loss(dh, "fusion_critic", 2, epoch, c.subject_id)
                sums["fusion_critic"] += float(pos_score.detach())
                sums["fusion_align"] += -float(neg_score.detach())
                _step(opt["hyper_critic"], dh, list(critic.parameters()))
                graphgan.clip_parameters(critic, config.critic_clip)
                state.update_log.append((epoch, c.subject_id, "critic"))

                # (b) convolution update; critic frozen.
                ver = critic.score(hyperfusion.vertex_convolve(
                    hg2, vec_reps[idx], conv.theta, norm))
                _check_loss(ver, "fusion_align", 2, epoch, c.subject_id)
                _step(opt["fusion_conv"], ver, [conv.theta])
                state.update_log.append((epoch, c.subject_id, "convolution"))

            # (c) final classifier update on the fused connectivity.
            with torch.no_grad():
                if trimodal:
                    convolved = hyperfusion.vertex_convolve(
                        hg2, vec_reps[idx], conv.theta, norm)
                    fused = hyperfusion.edge_aggregate_fuse(
                        hg1, hg2, agg, convolved, norm)
                else:
                    fused = hyperfusion.edge_aggregate(hg1, agg, norm)
                conn = hyperfusion.bilinear_connectivity(fused)
            cls3 = graphgan.classification_loss(c.label_onehot, head(conn))
            sums["fusion_cls"] += _check_loss(cls3, "fusion_cls", 2, epoch,
                                              c.subject_id)
            _step(opt["conn_classifier"], cls3, list(head.parameters()))
            state.update_log.append((epoch, c.subject_id, "classifier"))

        _check_parameters(state, 2, epoch)
        n = len(caches)
        row = {"stage": 2, "epoch": epoch, **frozen,
               "fusion_cls": sums["fusion_cls"] / n}
        if trimodal:
            row["fusion_critic"] = sums["fusion_critic"] / n
            row["fusion_align"] = sums["fusion_align"] / n
            row["fusion_total"] = (row["fusion_critic"]
                                   + hyperfusion.ALIGNMENT_WEIGHT * row["fusion_align"]
                                   + row["fusion_cls"])
        else:
            row["fusion_critic"] = None
            row["fusion_align"] = None
            row["fusion_total"] = row["fusion_cls"]
        row["total"] = total_loss(row, config.fusion_weight)
        state.loss_history.append(row)
        state.epochs_stage2 += 1
    return state


def train(cohort: Cohort, config: ModelConfig, seed: Optional[int] = None) -> TrainState:
    """Run both stages end to end on one training cohort."""
    state = train_stage1(cohort, config, seed)
    return train_stage2(state, cohort, config)


@dataclass
class SubjectOutputs:
    """Frozen-model forward pass artifacts for one subject."""

    latent_graph: np.ndarray
    latent_vector: Optional[np.ndarray]
    fused: np.ndarray
    connectivity: np.ndarray
    probs: np.ndarray


def forward_subject(state: TrainState, subject: Subject) -> SubjectOutputs:
    """Full frozen pipeline for one subject, up to class probabilities."""
    config = state.config
    trimodal = config.modalities == "trimodal"
    norm = config.hypergraph_norm
    c = _prepare(subject, config)
    with torch.no_grad():
        latent = state.graph_branch.encode(c.adj_norm, c.node_features)
        hg1 = hyperfusion.build_hypergraph(latent, config.hyperedge_size)
        agg = hyperfusion.vertex_aggregate(hg1, latent, norm)
        if trimodal:
            rep = state.vector_branch.encode(c.adj_norm, c.distributed)
            hg2 = hyperfusion.build_hypergraph(rep, config.hyperedge_size)
            convolved = hyperfusion.vertex_convolve(hg2, rep,
                                                    state.fusion_conv.theta, norm)
            fused = hyperfusion.edge_aggregate_fuse(hg1, hg2, agg, convolved, norm)
        else:
            rep = None
            fused = hyperfusion.edge_aggregate(hg1, agg, norm)
        conn = hyperfusion.bilinear_connectivity(fused)
        probs = state.conn_classifier(conn)
    return SubjectOutputs(
        latent_graph=latent.numpy(),
        latent_vector=None if rep is None else rep.numpy(),
        fused=fused.numpy(),
        connectivity=conn.numpy(),
        probs=probs.numpy(),
    )


def config_hash(config: ModelConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()


def save_checkpoint(state: TrainState, out_dir: Union[str, Path]) -> Path:
    """Named-array bundle: one .npy per parameter plus a shape manifest."""
    out_dir = Path(out_dir)
    arrays_dir = out_dir / "arrays"
    arrays_dir.mkdir(parents=True, exist_ok=True)
    arrays = {name: p.detach().numpy() for name, p in state.named_parameters().items()}
    if state.prior is not None:
        arrays["prior.centers"] = state.prior.centers
        arrays["prior.bandwidth"] = np.array([state.prior.bandwidth])
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in asdict(state.config).items()},
        "config_hash": config_hash(state.config),
        "seed": state.seed,
        "epochs": {"stage1": state.epochs_stage1, "stage2": state.epochs_stage2},
        "arrays": {name: {"shape": list(a.shape), "dtype": str(a.dtype)}
                   for name, a in sorted(arrays.items())},
    }
    for name, a in arrays.items():
        np.save(arrays_dir / f"{name}.npy", np.ascontiguousarray(a))
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return out_dir


def load_checkpoint(in_dir: Union[str, Path]) -> TrainState:
    in_dir = Path(in_dir)
    with open(in_dir / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"unsupported checkpoint format {manifest.get('format')!r}")
    cfg = dict(manifest["config"])
    if cfg.get("roi_whitelist") is not None:
        cfg["roi_whitelist"] = tuple(cfg["roi_whitelist"])
    config = ModelConfig(**cfg)
    state = init_state(config, manifest["seed"])
    params = state.named_parameters()
    for name, meta in manifest["arrays"].items():
        arr = np.load(in_dir / "arrays" / f"{name}.npy")
        if list(arr.shape) != meta["shape"]:
            raise DataError(f"checkpoint array {name} has shape {arr.shape}, "
                            f"manifest says {meta['shape']}")
        if name == "prior.centers":
            continue
        if name == "prior.bandwidth":
            centers = np.load(in_dir / "arrays" / "prior.centers.npy")
            state.prior = LatentPrior(centers=centers, bandwidth=float(arr[0]))
            continue
        with torch.no_grad():
            params[name].copy_(torch.as_tensor(arr, dtype=graphgan.DTYPE))
    state.epochs_stage1 = int(manifest["epochs"]["stage1"])
    state.epochs_stage2 = int(manifest["epochs"]["stage2"])
    return state


def write_loss_rows(rows: Sequence[dict], path: Union[str, Path]) -> Path:
    """Per-epoch CSV with one column per loss component plus the total."""
    path = Path(path)
    with open(path, "w") as fh:
        fh.write("stage,epoch," + ",".join(LOSS_COLUMNS) + "\n")
        for row in rows:
            cells = [str(row["stage"]), str(row["epoch"])]
            for col in LOSS_COLUMNS:
                v = row.get(col)
                cells.append("" if v is None else "%.9g" % v)
            fh.write(",".join(cells) + "\n")
    return path


def write_loss_log(state: TrainState, path: Union[str, Path]) -> Path:
    return write_loss_rows(state.loss_history, path)
