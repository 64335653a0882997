"""Compare the four DeepSea agents as the grid grows.

Prints the median final target-segment average reward per grid size and
agent. The defaults finish in a few minutes on one core; pass a larger
horizon (for example ``--T 1000000``) for the full-length picture.
"""
import argparse

from eepolitex.harness import BENCH_AGENTS, aggregate, deepsea_bench


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--T", type=int, default=200_000)
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--sizes", type=int, nargs="+", default=[2, 4, 8])
    args = parser.parse_args()
    rows = deepsea_bench(args.seeds, tuple(args.sizes), BENCH_AGENTS, args.T)
    summary = aggregate(rows, keys=("N", "agent"))
    print(f"{'N':>3}  {'agent':<18} median reward")
    for row in sorted(summary, key=lambda r: (r["N"], r["agent"])):
        print(f"{row['N']:>3}  {row['agent']:<18} {-row['median_final_target_avg_cost']:+.3f}")


if __name__ == "__main__":
    main()
