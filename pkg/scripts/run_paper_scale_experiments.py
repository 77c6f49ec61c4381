#!/usr/bin/env python3
"""Power analysis and method comparison at the tablet-study scale.

18 candidate features, 3 per screen, 10 screens per respondent, 10 design
versions. Prints a power table over a sample-size grid and a response-mode
comparison at N=400, both fully seeded.

Run:  python scripts/run_paper_scale_experiments.py [seed]
"""

import sys
import time

import numpy as np

from maxdiff.domain import BEST_ONLY, DesignSpec
from maxdiff.simulator import (
    PopulationSpec,
    compare_methods,
    comparison_to_csv,
    power_analysis,
    power_table_to_csv,
)


def main() -> None:
    seed = int(sys.argv[1]) if len(sys.argv) > 1 else 7
    spec = DesignSpec(
        n_items=18,
        items_per_screen=3,
        screens_per_respondent=10,
        n_versions=10,
        rng_seed=seed,
    )
    population = PopulationSpec(
        mean_utilities=tuple(np.linspace(-1.0, 1.0, 18)),
        heterogeneity_sd=0.5,
        n_respondents=500,
        response_mode=BEST_ONLY,
        rng_seed=seed,
    )

    print("== power analysis (50 replications per N) ==")
    started = time.time()
    table = power_analysis(
        population, spec, n_grid=[100, 200, 300, 400, 500], replications=50, seed=seed
    )
    print(power_table_to_csv(table), end="")
    print(f"-- {time.time() - started:.1f}s")

    print()
    print("== response-mode comparison at N=400 (50 replications) ==")
    started = time.time()
    comparison = compare_methods(population, 400, spec, replications=50, seed=seed)
    print(comparison_to_csv(comparison), end="")
    print(f"-- {time.time() - started:.1f}s")


if __name__ == "__main__":
    main()
