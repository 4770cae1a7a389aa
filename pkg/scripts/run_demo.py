"""Run the default desk-scale scenario and print a per-round summary.

Usage: python3 scripts/run_demo.py [--rounds N] [--seed N] [--out DIR]
"""

import argparse

from hpfl.experiment import run_experiment, write_outputs
from hpfl.scenario import Scenario


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rounds", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=None, help="also write rounds.csv here")
    args = ap.parse_args()

    scn = Scenario(rounds=args.rounds, seed=args.seed)
    result = run_experiment(scn)
    print("round    loss     acc   latency  A_eff  importance")
    for r in result.records:
        print("%5d  %7.4f  %5.3f  %7.3f  %5d  %10.4f"
              % (r.round, r.loss, r.acc, r.latency, r.a_eff, r.importance))
    if args.out:
        write_outputs(result, args.out)
        print("wrote", args.out)


if __name__ == "__main__":
    main()
