"""Synthetic respondents, choice simulation, power analysis, method comparison.

Respondent heterogeneity is an additive per-item normal perturbation around
the population mean utilities. All randomness derives from explicit integer
seeds through named sub-streams, so every table is reproducible bit for bit
regardless of execution order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .design import generate_design
from .domain import (
    BEST_ONLY,
    BEST_WORST,
    RESPONSE_MODES,
    TOP_CHOICE,
    ChoiceObservation,
    Dataset,
    Design,
    DesignSpec,
    InvalidInputError,
    InvalidSpecError,
    Item,
)
from .estimator import FitOptions, count_shares, fit, shares_from_utilities

DEFAULT_TOP_SET_SIZE = 4


@dataclass(frozen=True)
class PopulationSpec:
    """Synthetic population: mean utilities plus per-respondent normal noise."""

    mean_utilities: tuple[float, ...]
    heterogeneity_sd: float = 0.0
    n_respondents: int = 100
    response_mode: str = BEST_ONLY
    rng_seed: int = 0

    def __post_init__(self):
        values = np.asarray(self.mean_utilities, dtype=float)
        if values.ndim != 1 or len(values) < 2:
            raise InvalidSpecError("mean_utilities must hold at least 2 values")
        if not np.all(np.isfinite(values)):
            raise InvalidSpecError("mean_utilities must be finite")
        # Sum-zero identification is enforced, not assumed.
        object.__setattr__(self, "mean_utilities", tuple(values - values.mean()))
        if self.heterogeneity_sd < 0:
            raise InvalidSpecError("heterogeneity_sd must be >= 0")
        if self.n_respondents < 1:
            raise InvalidSpecError("n_respondents must be >= 1")
        if self.response_mode not in RESPONSE_MODES:
            raise InvalidSpecError(f"unknown response mode {self.response_mode!r}")

    @property
    def n_items(self) -> int:
        return len(self.mean_utilities)


@dataclass(frozen=True)
class PowerRow:
    n_respondents: int
    replications: int
    mean_abs_share_error: float
    rank_correlation_mean: float
    # None when the true shares tie across the top-set boundary.
    top_set_recovery: float | None


@dataclass(frozen=True)
class PowerTable:
    rows: tuple[PowerRow, ...]
    top_set_size: int
    seed: int

    def __post_init__(self):
        ns = [row.n_respondents for row in self.rows]
        if ns != sorted(ns):
            raise InvalidInputError("power table rows must be sorted by N")


@dataclass(frozen=True)
class MethodMetrics:
    mean_abs_share_error: float
    mean_share_se: float


@dataclass(frozen=True)
class MethodComparison:
    methods: Mapping[str, MethodMetrics]
    n_respondents: int
    replications: int
    seed: int


def default_items(n_items: int) -> tuple[Item, ...]:
    """Placeholder items with ids whose lexical order matches index order."""
    width = max(2, len(str(n_items)))
    return tuple(
        Item(id=f"item{i + 1:0{width}d}", label=f"Item {i + 1}")
        for i in range(n_items)
    )


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def draw_population(pop: PopulationSpec) -> np.ndarray:
    """Per-respondent utility matrix (N x K), each row re-centered to sum zero."""
    mean = np.asarray(pop.mean_utilities)
    rng = np.random.default_rng(pop.rng_seed)
    if pop.heterogeneity_sd == 0:
        return np.tile(mean, (pop.n_respondents, 1))
    u = mean + rng.normal(0.0, pop.heterogeneity_sd, size=(pop.n_respondents, len(mean)))
    return u - u.mean(axis=1, keepdims=True)


def _pick(utilities: np.ndarray, uniform: float) -> int:
    """Inverse-CDF draw from softmax(utilities) using one uniform variate."""
    w = np.exp(utilities - utilities.max())
    cum = np.cumsum(w)
    pos = int(np.searchsorted(cum, uniform * cum[-1], side="right"))
    return min(pos, len(utilities) - 1)


def simulate_dataset(
    population: np.ndarray,
    design: Design | None,
    mode: str,
    seed: int,
    items: Sequence[Item] | None = None,
    attributes: Mapping[str, str] | Callable[[int], Mapping[str, str]] | None = None,
) -> Dataset:
    """Simulate one complete wave of responses.

    best_only / best_worst require a design; versions are assigned round-robin
    by respondent index. top_choice ignores designs entirely (pass None): each
    respondent answers a single screen showing every item. ``attributes`` may
    be a constant mapping or a per-respondent-index callable, and lands on
    every observation (cohort tags).
    """
    population = np.asarray(population, dtype=float)
    if population.ndim != 2:
        raise InvalidInputError("population must be an (N, K) utility matrix")
    n_respondents, n_items = population.shape
    if mode not in RESPONSE_MODES:
        raise InvalidInputError(f"unknown response mode {mode!r}")
    if mode == TOP_CHOICE:
        if design is not None:
            raise InvalidInputError("top_choice ignores designs; pass design=None")
    else:
        if design is None:
            raise InvalidInputError(f"{mode} simulation requires a design")
        if design.spec.n_items != n_items:
            raise InvalidInputError(
                f"design is for {design.spec.n_items} items, population has {n_items}"
            )
    if items is None:
        items = default_items(n_items)
    elif len(items) != n_items:
        raise InvalidInputError(f"need {n_items} items, got {len(items)}")
    ids = [item.id for item in items]

    def tags_for(r: int) -> Mapping[str, str]:
        if attributes is None:
            return {}
        if callable(attributes):
            return attributes(r)
        return attributes

    id_width = len(str(n_respondents))
    observations: list[ChoiceObservation] = []
    for r in range(n_respondents):
        rng = np.random.default_rng([seed, r])
        respondent_id = f"r{r + 1:0{id_width}d}"
        u = population[r]
        tags = tags_for(r)
        if mode == TOP_CHOICE:
            best = _pick(u, rng.random())
            observations.append(
                ChoiceObservation(
                    respondent_id=respondent_id,
                    version_index=0,
                    screen_index=0,
                    shown=tuple(ids),
                    best=ids[best],
                    attributes=tags,
                )
            )
            continue
        version = r % len(design.versions)
        screens = design.versions[version]
        draws_per_screen = 2 if mode == BEST_WORST else 1
        uniforms = rng.random(len(screens) * draws_per_screen)
        for t, screen in enumerate(screens):
            shown = list(screen.item_indices)
            best_pos = _pick(u[shown], uniforms[t * draws_per_screen])
            worst_id = None
            if mode == BEST_WORST:
                reduced = shown[:best_pos] + shown[best_pos + 1 :]
                worst_pos = _pick(-u[reduced], uniforms[t * draws_per_screen + 1])
                worst_id = ids[reduced[worst_pos]]
            observations.append(
                ChoiceObservation(
                    respondent_id=respondent_id,
                    version_index=version,
                    screen_index=t,
                    shown=tuple(ids[i] for i in shown),
                    best=ids[shown[best_pos]],
                    worst=worst_id,
                    attributes=tags,
                )
            )
    return Dataset(items=tuple(items), observations=tuple(observations))


def true_shares(pop: PopulationSpec) -> np.ndarray:
    return shares_from_utilities(np.asarray(pop.mean_utilities))


def _rank_correlation(estimate: np.ndarray, truth: np.ndarray) -> float:
    # No variation means no orderable signal; we report zero correlation
    # rather than propagate scipy's NaN.
    if np.ptp(truth) == 0 or np.ptp(estimate) == 0:
        return 0.0
    return float(stats.spearmanr(estimate, truth).statistic)


def _top_set(shares: np.ndarray, ids: Sequence[str], size: int) -> frozenset[str]:
    order = sorted(range(len(ids)), key=lambda i: (-shares[i], ids[i]))
    return frozenset(ids[i] for i in order[:size])


def _top_set_defined(truth: np.ndarray, size: int) -> bool:
    if size >= len(truth):
        return False
    ordered = np.sort(truth)[::-1]
    return bool(ordered[size - 1] - ordered[size] > 1e-12)


def _estimate_shares(
    dataset: Dataset, mode: str, options: FitOptions
) -> np.ndarray:
    if mode == TOP_CHOICE:
        return count_shares(dataset)
    return np.array([e.share for e in fit(dataset, options).shares.entries])


def power_analysis(
    pop_template: PopulationSpec,
    design_spec: DesignSpec,
    n_grid: Sequence[int],
    replications: int,
    seed: int,
    top_set_size: int = DEFAULT_TOP_SET_SIZE,
    options: FitOptions = FitOptions(),
) -> PowerTable:
    """Simulated accuracy of the whole pipeline across sample sizes.

    For each N, runs ``replications`` independent simulate-and-estimate
    passes and scores them against the population's true shares. Replicate
    randomness derives from (seed, N, replication), so rows never interact.
    """
    if not n_grid:
        raise InvalidInputError("n_grid must be nonempty")
    if list(n_grid) != sorted(n_grid):
        raise InvalidInputError("n_grid must be ascending")
    if replications < 1:
        raise InvalidInputError("replications must be >= 1")
    if design_spec.n_items != pop_template.n_items:
        raise InvalidSpecError("design_spec and population disagree on item count")

    design = generate_design(design_spec)
    items = default_items(pop_template.n_items)
    ids = [item.id for item in items]
    truth = true_shares(pop_template)
    recovery_defined = _top_set_defined(truth, top_set_size)
    true_top = _top_set(truth, ids, top_set_size)

    rows = []
    for n in n_grid:
        errors = np.empty(replications)
        correlations = np.empty(replications)
        recovered = np.empty(replications)
        for rep in range(replications):
            pop = PopulationSpec(
                mean_utilities=pop_template.mean_utilities,
                heterogeneity_sd=pop_template.heterogeneity_sd,
                n_respondents=n,
                response_mode=pop_template.response_mode,
                rng_seed=_derived_seed(seed, n, rep, 0),
            )
            utilities = draw_population(pop)
            mode = pop.response_mode
            dataset = simulate_dataset(
                utilities,
                None if mode == TOP_CHOICE else design,
                mode,
                seed=_derived_seed(seed, n, rep, 1),
                items=items,
            )
            estimate = _estimate_shares(dataset, mode, options)
            errors[rep] = np.abs(estimate - truth).mean()
            correlations[rep] = _rank_correlation(estimate, truth)
            recovered[rep] = _top_set(estimate, ids, top_set_size) == true_top
        rows.append(
            PowerRow(
                n_respondents=int(n),
                replications=replications,
                mean_abs_share_error=float(errors.mean()),
                rank_correlation_mean=float(correlations.mean()),
                top_set_recovery=float(recovered.mean()) if recovery_defined else None,
            )
        )
    return PowerTable(rows=tuple(rows), top_set_size=top_set_size, seed=seed)


def compare_methods(
    pop_template: PopulationSpec,
    n_respondents: int,
    design_spec: DesignSpec,
    replications: int,
    seed: int,
    options: FitOptions = FitOptions(),
) -> MethodComparison:
    """Replay identical populations under each response mode and score them.

    top_choice is the single-question poll baseline (estimated by counting);
    best_only and best_worst share the same design and are estimated by the
    logit fit.
    """
    if replications < 1:
        raise InvalidInputError("replications must be >= 1")
    if design_spec.n_items != pop_template.n_items:
        raise InvalidSpecError("design_spec and population disagree on item count")

    design = generate_design(design_spec)
    items = default_items(pop_template.n_items)
    truth = true_shares(pop_template)
    modes = (BEST_ONLY, BEST_WORST, TOP_CHOICE)
    estimates = {mode: np.empty((replications, len(items))) for mode in modes}

    for rep in range(replications):
        pop = PopulationSpec(
            mean_utilities=pop_template.mean_utilities,
            heterogeneity_sd=pop_template.heterogeneity_sd,
            n_respondents=n_respondents,
            response_mode=pop_template.response_mode,
            rng_seed=_derived_seed(seed, rep, 0),
        )
        utilities = draw_population(pop)
        for m, mode in enumerate(modes):
            dataset = simulate_dataset(
                utilities,
                None if mode == TOP_CHOICE else design,
                mode,
                seed=_derived_seed(seed, rep, 1 + m),
                items=items,
            )
            estimates[mode][rep] = _estimate_shares(dataset, mode, options)

    methods = {}
    for mode in modes:
        per_rep = estimates[mode]
        methods[mode] = MethodMetrics(
            mean_abs_share_error=float(np.abs(per_rep - truth).mean()),
            mean_share_se=float(per_rep.std(axis=0, ddof=1).mean())
            if replications > 1
            else 0.0,
        )
    return MethodComparison(
        methods=methods,
        n_respondents=n_respondents,
        replications=replications,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Exports
# ---------------------------------------------------------------------------


def power_table_to_dict(table: PowerTable) -> dict:
    return {
        "rows": [
            {
                "n_respondents": row.n_respondents,
                "replications": row.replications,
                "mean_abs_share_error": row.mean_abs_share_error,
                "rank_correlation_mean": row.rank_correlation_mean,
                "top_set_recovery": row.top_set_recovery,
            }
            for row in table.rows
        ],
        "top_set_size": table.top_set_size,
        "seed": table.seed,
    }


def power_table_to_csv(table: PowerTable) -> str:
    lines = [
        "n_respondents,replications,mean_abs_share_error,"
        "rank_correlation_mean,top_set_recovery,seed"
    ]
    for row in table.rows:
        recovery = "" if row.top_set_recovery is None else repr(row.top_set_recovery)
        lines.append(
            f"{row.n_respondents},{row.replications},{row.mean_abs_share_error!r},"
            f"{row.rank_correlation_mean!r},{recovery},{table.seed}"
        )
    return "\n".join(lines) + "\n"


def comparison_to_dict(comparison: MethodComparison) -> dict:
    return {
        "methods": {
            mode: {
                "mean_abs_share_error": metrics.mean_abs_share_error,
                "mean_share_se": metrics.mean_share_se,
            }
            for mode, metrics in comparison.methods.items()
        },
        "n_respondents": comparison.n_respondents,
        "replications": comparison.replications,
        "seed": comparison.seed,
    }


def comparison_to_csv(comparison: MethodComparison) -> str:
    lines = ["method,mean_abs_share_error,mean_share_se,n_respondents,replications,seed"]
    for mode, metrics in comparison.methods.items():
        lines.append(
            f"{mode},{metrics.mean_abs_share_error!r},{metrics.mean_share_se!r},"
            f"{comparison.n_respondents},{comparison.replications},{comparison.seed}"
        )
    return "\n".join(lines) + "\n"
