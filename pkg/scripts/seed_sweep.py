"""How stable is the DER comparison? Repeat the default protocol over world and master seeds.

Prints the one-sided Wilcoxon p-value on per-trial best DER for Fair EHVI
against random search and against EI, one row per (world seed, master seed).
"""
import argparse
from dataclasses import replace

from sysfair.experiment import ExperimentConfig, default_world_config, report, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--world-seeds", type=int, nargs="+", default=[20240601, 1, 2, 3])
    ap.add_argument("--master-seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    print("world_seed,master_seed,p_vs_random,p_vs_ei")
    wins = {"random": 0, "ei": 0}
    total = 0
    for ws in args.world_seeds:
        for ms in args.master_seeds:
            cfg = replace(ExperimentConfig(master_seed=ms), world=default_world_config(ws))
            tests = report(run_experiment(cfg, threads=args.threads))["summary"]["wilcoxon"]
            p = {o: tests[f"fair_ehvi_vs_{o}"]["best_der"]["greater"]["p_value"] for o in wins}
            for o in wins:
                wins[o] += p[o] < 0.05
            total += 1
            print(f"{ws},{ms},{p['random']:.4g},{p['ei']:.4g}", flush=True)
    print(f"# p < 0.05 vs random in {wins['random']}/{total}, vs EI in {wins['ei']}/{total}")


if __name__ == "__main__":
    main()
