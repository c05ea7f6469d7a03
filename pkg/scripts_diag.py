"""Scratch diagnostics for stage-2 adversarial dynamics (not shipped)."""
import sys

import numpy as np
import torch

sys.path.insert(0, "tests")


def main():
    from helpers import median_heuristic_bandwidth, rbf_mmd, subsample_rows
    from hyperfuse import datamodel as dm, hyperfusion as hf, synthdata as sd, trainer

    spec = sd.SynthSpec(n_per_class=40, separation=2.0, seed=11)
    cohort = sd.generate_cohort(spec)
    cfg = dm.ModelConfig(seed=101)
    state = trainer.train_stage1(cohort, cfg)

    caches = [trainer._prepare(s, cfg) for s in cohort.subjects]
    with torch.no_grad():
        latents = [state.graph_branch.encode(c.adj_norm, c.node_features) for c in caches]
        vreps = [state.vector_branch.encode(c.adj_norm, c.distributed) for c in caches]
    hg1s = [hf.build_hypergraph(z, cfg.hyperedge_size) for z in latents]
    hg2s = [hf.build_hypergraph(r, cfg.hyperedge_size) for r in vreps]
    aggs = [hf.vertex_aggregate(h, z) for h, z in zip(hg1s, latents)]

    def pops():
        with torch.no_grad():
            convs = [hf.vertex_convolve(h, r, state.fusion_conv.theta)
                     for h, r in zip(hg2s, vreps)]
        return (np.vstack([a.numpy() for a in aggs]),
                np.vstack([c.numpy() for c in convs]))

    z0, r0 = pops()
    bw = median_heuristic_bandwidth(subsample_rows(np.vstack([z0, r0]), 600, 0))
    print("bandwidth", bw)
    print("scale zhat", np.abs(z0).mean(), "scale rh", np.abs(r0).mean())
    print("theta norm", float(state.fusion_conv.theta.norm()))

    checkpoints = [0, 10, 25, 50, 100, 200]
    total = 0
    for stop in checkpoints[1:]:
        cfg_step = cfg.with_updates(epochs_stage1=0, epochs_stage2=stop - total)
        state.config = cfg_step
        trainer.train_stage2(state, cohort, cfg_step)
        total = stop
        z, r = pops()
        mmd = rbf_mmd(subsample_rows(z, 800, 1), subsample_rows(r, 800, 2), bw)
        with torch.no_grad():
            pos = np.mean([float(state.hyper_critic.score(a)) for a in aggs])
            neg = np.mean([float(state.hyper_critic.score(torch.as_tensor(m)))
                           for m in np.array_split(r, len(caches))])
        print(f"epoch {stop:3d} mmd {mmd:.4f} theta {float(state.fusion_conv.theta.norm()):.3f} "
              f"rh_scale {np.abs(r).mean():.3f} zh_scale {np.abs(z).mean():.3f} "
              f"score_pos {pos:.4f} score_neg {neg:.4f}", flush=True)


if __name__ == "__main__":
    main()
