"""Run the certificate suite over several data seeds and tabulate the
estimated constants.

    python scripts/certificate_sweep.py --seeds 0 1 2 3 4
"""

import argparse

from deepo import experiments as ex


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    args = ap.parse_args()

    print("seed  passed  sigma_min(D)   l0          alpha_hat   mu_hat      time")
    failures = 0
    for seed in args.seeds:
        cfg = ex.ExperimentConfig(seed=seed)
        data = ex.build_data(cfg)
        rep = ex.run_certificates(cfg, data)
        e = rep.estimates
        failures += not rep.passed
        print(f"{seed:<5d} {str(rep.passed):<7s} {data.sigma_min_D:<13.4e} {e['l0']:<11.4e} "
              f"{e['alpha_hat']:<11.4e} {e['mu_hat']:<11.4e} {rep.wall_time:.2f}s")
        for c in rep.checks:
            if not c.passed:
                print(f"      FAILED {c.name}: {c.value}")
    raise SystemExit(1 if failures else 0)


if __name__ == "__main__":
    main()
