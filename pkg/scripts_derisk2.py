"""Scratch de-risk: MMD alignment across seeds after the critic-update fix."""
import json
import time

import numpy as np
import torch


def pooled_edge_feats(state, cohort):
    from hyperfuse import hyperfusion as hf, trainer
    cfg = state.config
    zs, rs = [], []
    with torch.no_grad():
        for s in cohort.subjects:
            c = trainer._prepare(s, cfg)
            z = state.graph_branch.encode(c.adj_norm, c.node_features)
            r = state.vector_branch.encode(c.adj_norm, c.distributed)
            h1 = hf.build_hypergraph(z, cfg.hyperedge_size)
            h2 = hf.build_hypergraph(r, cfg.hyperedge_size)
            zs.append(hf.vertex_aggregate(h1, z).numpy())
            rs.append(hf.vertex_convolve(h2, r, state.fusion_conv.theta).numpy())
    return np.vstack(zs), np.vstack(rs)


def main():
    import sys
    sys.path.insert(0, "tests")
    from helpers import median_heuristic_bandwidth, rbf_mmd, subsample_rows
    from hyperfuse import datamodel as dm, synthdata as sd, trainer

    results = {}
    spec = sd.SynthSpec(n_per_class=40, separation=2.0, seed=11)
    cohort = sd.generate_cohort(spec)
    for seed in (101, 202, 303):
        t0 = time.time()
        cfg = dm.ModelConfig(seed=seed)
        state = trainer.train_stage1(cohort, cfg)
        z0, r0 = pooled_edge_feats(state, cohort)
        joint = subsample_rows(np.vstack([z0, r0]), 600, 0)
        bw = median_heuristic_bandwidth(joint)
        m0 = rbf_mmd(subsample_rows(z0, 800, 1), subsample_rows(r0, 800, 2), bw)
        state = trainer.train_stage2(state, cohort, cfg)
        z1, r1 = pooled_edge_feats(state, cohort)
        m1 = rbf_mmd(subsample_rows(z1, 800, 1), subsample_rows(r1, 800, 2), bw)
        results[seed] = {"epoch0": float(m0), "epoch200": float(m1),
                         "decreased": bool(m1 < m0), "time": time.time() - t0}
        print(seed, results[seed], flush=True)
    with open("/root/pkg/derisk_mmd.json", "w") as fh:
        json.dump(results, fh, indent=2)


if __name__ == "__main__":
    main()
