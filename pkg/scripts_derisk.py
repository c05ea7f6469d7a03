"""Scratch de-risk for signal recovery, null cohort, ablation (not shipped)."""
import json
import time


def main():
    from hyperfuse import datamodel as dm, synthdata as sd
    from hyperfuse.evalharness import run_cv

    results = {}

    t0 = time.time()
    spec3 = sd.SynthSpec(n_per_class=40, separation=3.0, seed=21)
    cohort3 = sd.generate_cohort(spec3)
    rep = run_cv(cohort3, dm.ModelConfig(seed=7), n_folds=10, jobs=2)
    results["signal"] = {"mean": rep["mean"], "pooled_acc": rep["pooled"]["acc"],
                         "time": time.time() - t0}
    print("SIGNAL", results["signal"], flush=True)

    t0 = time.time()
    spec0 = sd.SynthSpec(n_per_class=40, separation=0.0, seed=31)
    cohort0 = sd.generate_cohort(spec0)
    rep0 = run_cv(cohort0, dm.ModelConfig(seed=7), n_folds=10, jobs=2)
    results["null"] = {"mean": rep0["mean"], "pooled_acc": rep0["pooled"]["acc"],
                       "time": time.time() - t0}
    print("NULL", results["null"], flush=True)

    t0 = time.time()
    spec2 = sd.SynthSpec(n_per_class=40, separation=2.0, seed=11)
    cohort2 = sd.generate_cohort(spec2)
    ablation = {}
    for seed in (101, 202):
        tri = run_cv(cohort2, dm.ModelConfig(seed=seed, epochs_stage1=50,
                                             epochs_stage2=100),
                     n_folds=5, jobs=2)
        bi = run_cv(cohort2, dm.ModelConfig(seed=seed, epochs_stage1=50,
                                            epochs_stage2=100,
                                            modalities="bimodal"),
                    n_folds=5, jobs=2)
        ablation[seed] = {"tri": tri["mean"]["auc"], "bi": bi["mean"]["auc"]}
        print("ABL", seed, ablation[seed], flush=True)
    results["ablation"] = {"seeds": ablation, "time": time.time() - t0}

    with open("/root/pkg/derisk_results.json", "w") as fh:
        json.dump(results, fh, indent=2)
    print("DONE")


if __name__ == "__main__":
    main()
