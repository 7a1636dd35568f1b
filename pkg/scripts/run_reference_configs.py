#!/usr/bin/env python3
# scripts/run_reference_configs.py
"""
Manual runner for the two reference experiment configurations.

    full-bandit:  d=8, m=3, n=5000, alpha in {0, 0.25, 0.5, 1}, 20 trials
    semi-bandit:  d=9, m=4, n=2000, alpha in {0, 0.25, 0.5, 1}, 20 trials

Usage:
    python scripts/run_reference_configs.py [out_dir] [workers]

Examples:
    python scripts/run_reference_configs.py
    python scripts/run_reference_configs.py results/ 4
"""

import logging
import os
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from config import REFERENCE_ALPHAS, DEFAULT_SEED, OUTPUT_DIR, REFERENCE_CONFIGS, REFERENCE_TRIALS
from services.harness import (
    ExperimentConfig,
    FamilySpec,
    final_summary,
    run_experiment,
    write_results,
    write_summary,
)
from utils.errors import CombBanditError


def main():
    """Run both reference configurations and write CSV + summary per algorithm."""
    logging.basicConfig(
        level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    )

    out_dir = sys.argv[1] if len(sys.argv) > 1 else OUTPUT_DIR
    workers = int(sys.argv[2]) if len(sys.argv) > 2 else 1

    print("=" * 70)
    print("Reference configurations")
    print("=" * 70)
    print(f"Output:  {out_dir}")
    print(f"Workers: {workers}")
    print(f"Seed:    {DEFAULT_SEED}")
    print("=" * 70)

    try:
        for algo, params in REFERENCE_CONFIGS.items():
            config = ExperimentConfig(
                algo=algo,
                family=FamilySpec(kind="uniform-matroid", d=params["d"], m=params["m"]),
                n=params["n"],
                alphas=REFERENCE_ALPHAS,
                trials=REFERENCE_TRIALS,
                seed=DEFAULT_SEED,
                workers=workers,
            )
            print(f"\n{algo}: d={params['d']}, m={params['m']}, n={params['n']}")
            result = run_experiment(config)
            write_results(result, os.path.join(out_dir, f"{algo}.csv"), "csv")
            write_summary(result, os.path.join(out_dir, f"{algo}_summary.csv"))

            slowest = max(tr.wall_time for tr in result.trials)
            print(final_summary(result).to_string(index=False))
            print(f"slowest trial: {slowest:.2f}s")

    except KeyboardInterrupt:
        print("\n\nInterrupted by user")
        sys.exit(130)

    except CombBanditError as e:
        print(f"\n✗ ERROR: {e}")
        sys.exit(3)

    print("\n" + "=" * 70)
    print("✓ done")


if __name__ == "__main__":
    main()
