"""Stratified cross-validation, confusion metrics, AUC, and export artifacts.

`run_cv` trains the full two-stage pipeline per fold on the train split,
scores the held-out subjects with the final connectivity classifier, and
aggregates fold metrics. It also collects per-subject test-time features
for 2-D projection exports and group-mean connectivity-difference maps.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path
from typing import Dict, Mapping, Optional, Sequence, Union

import numpy as np

from . import trainer
from .datamodel import (Cohort, DataError, ModelConfig, derive_seed,
                        write_matrix)

METRIC_NAMES = ("acc", "sen", "spec", "auc")


@dataclass(frozen=True)
class FoldPlan:
    """Stratified fold assignment: subject index -> fold in {0..k-1}."""

    assignments: np.ndarray
    n_folds: int
    seed: int

    def __post_init__(self):
        a = np.asarray(self.assignments, dtype=int)
        a.flags.writeable = False
        object.__setattr__(self, "assignments", a)

    def split(self, fold: int):
        test = np.flatnonzero(self.assignments == fold)
        train = np.flatnonzero(self.assignments != fold)
        return train, test


def make_folds(labels: Sequence[int], n_folds: int = 10, seed: int = 0) -> FoldPlan:
    """Deal each class round-robin into folds after a seeded shuffle."""
    labels = np.asarray(labels, dtype=int)
    if n_folds < 2:
        raise DataError("need at least 2 folds")
    if n_folds > len(labels):
        raise DataError(f"{n_folds} folds for {len(labels)} subjects")
    assignments = np.full(len(labels), -1, dtype=int)
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng = np.random.default_rng(derive_seed(seed, int(cls)))
        rng.shuffle(idx)
        assignments[idx] = np.arange(len(idx)) % n_folds
    return FoldPlan(assignments=assignments, n_folds=n_folds, seed=seed)


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def rank_auc(labels: Sequence[int], scores: Sequence[float]) -> Optional[float]:
    """P(score of a positive > score of a negative), ties counted half.

    Returns None when either class is absent (undefined, not zero).
    """
    labels = np.asarray(labels, dtype=int)
    scores = np.asarray(scores, dtype=np.float64)
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _midranks(scores)
    rank_sum = ranks[labels == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def compute_metrics(labels: Sequence[int], scores: Sequence[float],
                    threshold: float = 0.5) -> Dict[str, Optional[float]]:
    """Thresholded confusion metrics plus rank AUC.

    Scores are positive-class probabilities; a score strictly above the
    threshold predicts the positive class (matching argmax at 0.5 for a
    two-way softmax). Undefined ratios (single-class inputs) are None.
    """
    labels = np.asarray(labels, dtype=int)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape:
        raise DataError("labels and scores must have equal length")
    preds = (scores > threshold).astype(int)
    tp = int(((preds == 1) & (labels == 1)).sum())
    tn = int(((preds == 0) & (labels == 0)).sum())
    fp = int(((preds == 1) & (labels == 0)).sum())
    fn = int(((preds == 0) & (labels == 1)).sum())
    total = len(labels)
    return {
        "acc": (tp + tn) / total if total else None,
        "sen": tp / (tp + fn) if (tp + fn) else None,
        "spec": tn / (tn + fp) if (tn + fp) else None,
        "auc": rank_auc(labels, scores),
        "tp": tp, "tn": tn, "fp": fp, "fn": fn, "n": total,
    }


def _pca_2d(features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    centered = x - x.mean(axis=0)
    coords = np.zeros((x.shape[0], 2))
    if centered.size and np.abs(centered).max() > 0:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        take = min(2, vt.shape[0])
        coords[:, :take] = centered @ vt[:take].T
    return coords


def project_features(features: np.ndarray, method: str = "tsne",
                     seed: int = 0) -> np.ndarray:
    """2-D embedding for plotting: t-SNE by default, PCA for tiny inputs."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected 2-D features, got shape {x.shape}")
    if method == "pca" or x.shape[0] < 10 or x.shape[1] < 2:
        return _pca_2d(x)
    if method != "tsne":
        raise DataError(f"unknown projection method {method!r}")
    from sklearn.manifold import TSNE
    n = x.shape[0]
    tsne = TSNE(n_components=2, perplexity=min(15.0, (n - 1) / 3.0),
                max_iter=500, init="pca", random_state=seed, method="exact")
    return np.asarray(tsne.fit_transform(x), dtype=np.float64)


def connectivity_difference(conn_by_group: Mapping[int, Sequence[np.ndarray]]) -> np.ndarray:
    """Mean control-group connectivity minus mean patient-group connectivity."""
    for grp in (0, 1):
        if not conn_by_group.get(grp):
            raise DataError(f"connectivity group {grp} is empty")
    mean0 = np.mean([np.asarray(m, dtype=np.float64) for m in conn_by_group[0]], axis=0)
    mean1 = np.mean([np.asarray(m, dtype=np.float64) for m in conn_by_group[1]], axis=0)
    if mean0.shape != mean1.shape:
        raise DataError("group connectivity shapes differ")
    return mean0 - mean1


def _run_fold(fold: int, cohort: Cohort, config: ModelConfig, fold_seed: int,
              train_idx: np.ndarray, test_idx: np.ndarray) -> dict:
    train_set, test_set = set(train_idx.tolist()), set(test_idx.tolist())
    if train_set & test_set or (train_set | test_set) != set(range(len(cohort))):
        raise DataError(f"fold {fold} does not partition the cohort")
    train_cohort = Cohort(
        subjects=tuple(cohort.subjects[i] for i in train_idx),
        class_names=cohort.class_names, dims=cohort.dims)
    state = trainer.train(train_cohort, config, seed=fold_seed)
    subjects = []
    for i in test_idx:
        s = cohort.subjects[i]
        out = trainer.forward_subject(state, s)
        subjects.append({
            "index": int(i),
            "id": s.subject_id,
            "label": int(s.label),
            "score": float(out.probs[1]),
            "latent_pooled": out.latent_graph.mean(axis=0),
            "fused_pooled": out.fused.mean(axis=0),
            "connectivity": out.connectivity,
        })
    labels = [s["label"] for s in subjects]
    scores = [s["score"] for s in subjects]
    return {
        "fold": fold,
        "metrics": compute_metrics(labels, scores),
        "subjects": subjects,
        "loss_history": state.loss_history,
    }


def _aggregate(values: Sequence[Optional[float]]):
    present = [v for v in values if v is not None]
    if not present:
        return None, None
    arr = np.asarray(present, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def run_cv(cohort: Cohort, config: ModelConfig, seed: Optional[int] = None,
           out_dir: Optional[Union[str, Path]] = None, n_folds: int = 10,
           jobs: int = 1) -> dict:
    """Cross-validated training and evaluation; optionally writes artifacts."""
    seed = config.seed if seed is None else int(seed)
    plan = make_folds(cohort.labels, n_folds=n_folds, seed=seed)
    tasks = []
    for fold in range(plan.n_folds):
        train_idx, test_idx = plan.split(fold)
        if len(test_idx) == 0:
            raise DataError(f"fold {fold} has no test subjects")
        tasks.append((fold, cohort, config, derive_seed(seed, 5, fold),
                      train_idx, test_idx))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs,
                                 mp_context=get_context("spawn")) as pool:
            results = list(pool.map(_run_fold_star, tasks))
    else:
        results = [_run_fold(*t) for t in tasks]
    results.sort(key=lambda r: r["fold"])

    report = {"n_folds": plan.n_folds, "seed": seed, "folds": [], "mean": {},
              "std": {}, "pooled": {}}
    for r in results:
        report["folds"].append({"fold": r["fold"],
                                **{k: r["metrics"][k] for k in METRIC_NAMES},
                                **{k: r["metrics"][k] for k in ("tp", "tn", "fp", "fn", "n")}})
    for name in METRIC_NAMES:
        mean, std = _aggregate([f[name] for f in report["folds"]])
        report["mean"][name] = mean
        report["std"][name] = std
    all_subjects = [s for r in results for s in r["subjects"]]
    report["pooled"] = compute_metrics([s["label"] for s in all_subjects],
                                       [s["score"] for s in all_subjects])

    if out_dir is not None:
        _write_artifacts(Path(out_dir), cohort, results, report, seed)
    return report


def _run_fold_star(args):
    return _run_fold(*args)


def _write_artifacts(out_dir: Path, cohort: Cohort, results, report: dict,
                     seed: int) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "metrics.json", "w") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")

    def fmt(v):
        return "" if v is None else "%.9g" % v

    with open(out_dir / "metrics.csv", "w") as fh:
        fh.write("fold,acc,sen,spec,auc,tp,tn,fp,fn,n\n")
        for f in report["folds"]:
            fh.write(",".join([str(f["fold"])] + [fmt(f[m]) for m in METRIC_NAMES]
                              + [str(f[k]) for k in ("tp", "tn", "fp", "fn", "n")])
                     + "\n")
        fh.write(",".join(["mean"] + [fmt(report["mean"][m]) for m in METRIC_NAMES])
                 + ",,,,,\n")
        fh.write(",".join(["std"] + [fmt(report["std"][m]) for m in METRIC_NAMES])
                 + ",,,,,\n")

    subjects = sorted((s for r in results for s in r["subjects"]),
                      key=lambda s: s["index"])
    fold_of = {s["index"]: r["fold"] for r in results for s in r["subjects"]}
    for stage, key in (("stage1", "latent_pooled"), ("stage2", "fused_pooled")):
        feats = np.vstack([s[key] for s in subjects])
        coords = project_features(feats, seed=seed)
        with open(out_dir / f"embedding_{stage}.csv", "w") as fh:
            fh.write("id,label,fold,x,y\n")
            for s, (x, y) in zip(subjects, coords):
                fh.write(f"{s['id']},{s['label']},{fold_of[s['index']]},"
                         f"{fmt(x)},{fmt(y)}\n")

    conn_by_group = {0: [], 1: []}
    for s in subjects:
        conn_by_group[s["label"]].append(s["connectivity"])
    write_matrix(connectivity_difference(conn_by_group), out_dir / "conn_diff.csv")

    for r in results:
        trainer.write_loss_rows(r["loss_history"],
                                out_dir / f"fold{r['fold']:02d}_losses.csv")
