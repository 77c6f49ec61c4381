"""Aggregate multinomial-logit estimation for best (and optional worst) picks.

The model: picking item i as best from a shown set S has probability
exp(u_i) / sum_{j in S} exp(u_j). When a worst pick is recorded, it is
modeled as a second draw from S minus the best, with negated utilities.
The log-likelihood is concave; a ridge penalty (small by default) keeps
utilities finite under separation and makes the maximizer unique, so the
fit is deterministic. Utilities are identified by centering to sum zero,
which the translation-invariant likelihood permits at no cost.

Fitting is damped Newton ascent (equal to Fisher scoring here) with a
backtracking line search, so the objective never decreases between
iterations. Each iterate is re-centered, which can only increase the
penalized objective.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .domain import (
    CohortSpec,
    Dataset,
    InsufficientDataError,
    InvalidInputError,
    ItemShare,
    ShareReport,
    UndefinedItemError,
    chance_cutoff,
)

_ARMIJO_C = 1e-4
_MIN_STEP = 1e-12


@dataclass(frozen=True)
class FitOptions:
    """Knobs for the penalized maximum-likelihood fit."""

    l2_penalty: float = 0.001
    grad_tolerance: float = 1e-8
    max_iterations: int = 500
    # None = enable the worst-pick stage iff any observation carries one.
    worst_model_enabled: bool | None = None

    def __post_init__(self):
        if self.l2_penalty < 0:
            raise InvalidInputError("l2_penalty must be >= 0")
        if self.grad_tolerance <= 0:
            raise InvalidInputError("grad_tolerance must be > 0")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")


@dataclass(frozen=True)
class UtilityVector:
    """Logit-scale utilities under the sum-zero identification constraint."""

    values: tuple[float, ...]

    def __post_init__(self):
        values = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", values)
        arr = np.asarray(values)
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("utilities must be finite")
        if abs(arr.sum()) > 1e-9:
            raise InvalidInputError(f"utilities sum to {arr.sum()!r}, not 0")

    @classmethod
    def centered(cls, values: Iterable[float]) -> "UtilityVector":
        arr = np.asarray(list(values), dtype=float)
        return cls(tuple(arr - arr.mean()))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class FitResult:
    utilities: UtilityVector
    shares: ShareReport
    log_likelihood: float
    converged: bool
    iterations: int
    n_respondents: int
    n_observations: int
    l2_penalty: float
    # Objective value after each accepted step; populated on request only.
    objective_trace: tuple[float, ...] | None = field(default=None, compare=False)


@dataclass(frozen=True)
class CohortDelta:
    """Per-item difference of one cohort against the pooled fit."""

    cohort: str
    item_id: str
    share_delta: float
    rank_shift: int


@dataclass(frozen=True)
class CohortAnalysis:
    pooled: FitResult
    cohorts: Mapping[str, FitResult]
    comparison: tuple[CohortDelta, ...]


# ---------------------------------------------------------------------------
# Packed observation arrays
# ---------------------------------------------------------------------------


class _Packed:
    """Dataset flattened into padded index arrays for vectorized likelihoods.

    shown/mask cover the best stage (one row per observation); the w_*
    arrays cover the worst stage (one row per observation that carries a
    worst pick, masked to exclude the best item).
    """

    def __init__(
        self,
        n_items: int,
        shown: np.ndarray,
        mask: np.ndarray,
        best: np.ndarray,
        worst_rows: np.ndarray,
        worst: np.ndarray,
    ):
        self.n_items = n_items
        self.shown = shown
        self.mask = mask
        self.best = best
        self.worst_rows = worst_rows  # indices into shown rows
        self.worst = worst

    @classmethod
    def from_dataset(cls, dataset: Dataset, worst_enabled: bool) -> "_Packed":
        index = dataset.item_index()
        n = len(dataset.observations)
        width = max((len(obs.shown) for obs in dataset.observations), default=2)
        shown = np.zeros((n, width), dtype=np.intp)
        mask = np.zeros((n, width), dtype=bool)
        best = np.zeros(n, dtype=np.intp)
        worst_rows: list[int] = []
        worst: list[int] = []
        try:
            for r, obs in enumerate(dataset.observations):
                ids = [index[i] for i in obs.shown]
                shown[r, : len(ids)] = ids
                mask[r, : len(ids)] = True
                best[r] = index[obs.best]
                if worst_enabled and obs.worst is not None:
                    worst_rows.append(r)
                    worst.append(index[obs.worst])
        except KeyError as exc:
            raise InvalidInputError(f"observation references unknown item {exc}") from exc
        return cls(
            n_items=len(dataset.items),
            shown=shown,
            mask=mask,
            best=best,
            worst_rows=np.asarray(worst_rows, dtype=np.intp),
            worst=np.asarray(worst, dtype=np.intp),
        )

    def take(self, rows: np.ndarray) -> "_Packed":
        """Row-subset view used by the respondent bootstrap."""
        rows = np.asarray(rows, dtype=np.intp)
        # Worst rows must repeat as often as their parent observation.
        worst_by_row = dict(zip(self.worst_rows.tolist(), self.worst.tolist()))
        w_rows: list[int] = []
        w_items: list[int] = []
        for new_r, old_r in enumerate(rows.tolist()):
            if old_r in worst_by_row:
                w_rows.append(new_r)
                w_items.append(worst_by_row[old_r])
        return _Packed(
            n_items=self.n_items,
            shown=self.shown[rows],
            mask=self.mask[rows],
            best=self.best[rows],
            worst_rows=np.asarray(w_rows, dtype=np.intp),
            worst=np.asarray(w_items, dtype=np.intp),
        )


def _stage_log_probs(u: np.ndarray, idx: np.ndarray, mask: np.ndarray):
    """Masked log-softmax over each row of idx; returns (log_probs, logsumexp)."""
    eta = np.where(mask, u[idx], -np.inf)
    peak = eta.max(axis=1)
    lse = peak + np.log(np.exp(eta - peak[:, None]).sum(axis=1))
    return eta - lse[:, None], lse


def _packed_log_likelihood(u: np.ndarray, packed: _Packed, l2_penalty: float) -> float:
    log_p, lse = _stage_log_probs(u, packed.shown, packed.mask)
    total = float(u[packed.best].sum() - lse.sum())
    if len(packed.worst_rows):
        w_shown = packed.shown[packed.worst_rows]
        w_mask = packed.mask[packed.worst_rows] & (
            w_shown != packed.best[packed.worst_rows, None]
        )
        _, w_lse = _stage_log_probs(-u, w_shown, w_mask)
        total += float((-u[packed.worst]).sum() - w_lse.sum())
    return total - l2_penalty * float(np.dot(u, u))


def _packed_gradient(u: np.ndarray, packed: _Packed, l2_penalty: float) -> np.ndarray:
    K = packed.n_items
    log_p, _ = _stage_log_probs(u, packed.shown, packed.mask)
    probs = np.where(packed.mask, np.exp(log_p), 0.0)
    grad = np.bincount(packed.best, minlength=K).astype(float)
    grad -= np.bincount(packed.shown.ravel(), weights=probs.ravel(), minlength=K)
    if len(packed.worst_rows):
        w_shown = packed.shown[packed.worst_rows]
        w_mask = packed.mask[packed.worst_rows] & (
            w_shown != packed.best[packed.worst_rows, None]
        )
        w_log_p, _ = _stage_log_probs(-u, w_shown, w_mask)
        w_probs = np.where(w_mask, np.exp(w_log_p), 0.0)
        grad -= np.bincount(packed.worst, minlength=K).astype(float)
        grad += np.bincount(w_shown.ravel(), weights=w_probs.ravel(), minlength=K)
    return grad - 2.0 * l2_penalty * u


def _stage_curvature(idx: np.ndarray, probs: np.ndarray, K: int) -> np.ndarray:
    """Sum over rows of diag(p) - p p^T, scattered into a K x K matrix."""
    H = np.zeros((K, K))
    diag = np.bincount(idx.ravel(), weights=probs.ravel(), minlength=K)
    H[np.diag_indices(K)] += diag
    outer = probs[:, :, None] * probs[:, None, :]
    flat = (idx[:, :, None] * K + idx[:, None, :]).ravel()
    H -= np.bincount(flat, weights=outer.ravel(), minlength=K * K).reshape(K, K)
    return H


def _packed_neg_hessian(u: np.ndarray, packed: _Packed, l2_penalty: float) -> np.ndarray:
    """Negated Hessian of the penalized log-likelihood (positive semidefinite)."""
    K = packed.n_items
    log_p, _ = _stage_log_probs(u, packed.shown, packed.mask)
    probs = np.where(packed.mask, np.exp(log_p), 0.0)
    H = _stage_curvature(packed.shown, probs, K)
    if len(packed.worst_rows):
        w_shown = packed.shown[packed.worst_rows]
        w_mask = packed.mask[packed.worst_rows] & (
            w_shown != packed.best[packed.worst_rows, None]
        )
        w_log_p, _ = _stage_log_probs(-u, w_shown, w_mask)
        w_probs = np.where(w_mask, np.exp(w_log_p), 0.0)
        H += _stage_curvature(w_shown, w_probs, K)
    H[np.diag_indices(K)] += 2.0 * l2_penalty
    return H


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def _check_u(u: Sequence[float] | np.ndarray | UtilityVector, n_items: int) -> np.ndarray:
    if isinstance(u, UtilityVector):
        u = u.as_array()
    arr = np.asarray(u, dtype=float)
    if arr.shape != (n_items,):
        raise InvalidInputError(
            f"utility vector has shape {arr.shape}, expected ({n_items},)"
        )
    return arr


def log_likelihood(
    u: Sequence[float] | np.ndarray | UtilityVector,
    dataset: Dataset,
    l2_penalty: float = 0.0,
) -> float:
    """Penalized log-likelihood of the best(-then-worst) stacked logit."""
    arr = _check_u(u, len(dataset.items))
    packed = _Packed.from_dataset(dataset, worst_enabled=True)
    return _packed_log_likelihood(arr, packed, l2_penalty)


def log_likelihood_gradient(
    u: Sequence[float] | np.ndarray | UtilityVector,
    dataset: Dataset,
    l2_penalty: float = 0.0,
) -> np.ndarray:
    """Exact analytic gradient of log_likelihood with respect to u."""
    arr = _check_u(u, len(dataset.items))
    packed = _Packed.from_dataset(dataset, worst_enabled=True)
    return _packed_gradient(arr, packed, l2_penalty)


def shares_from_utilities(
    u: Sequence[float] | np.ndarray | UtilityVector,
) -> np.ndarray:
    """Preference shares in percent: stabilized softmax times 100."""
    if isinstance(u, UtilityVector):
        u = u.as_array()
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("utilities must be finite")
    w = np.exp(arr - arr.max())
    return 100.0 * w / w.sum()


def count_shares(dataset: Dataset) -> np.ndarray:
    """Counting estimator: per-item pick rate given shown, normalized to 100.

    A sanity oracle for the model-based fit; exact for full-list screens.
    """
    K = len(dataset.items)
    index = dataset.item_index()
    times_shown = np.zeros(K)
    times_best = np.zeros(K)
    for obs in dataset.observations:
        for item_id in obs.shown:
            times_shown[index[item_id]] += 1
        times_best[index[obs.best]] += 1
    never = np.flatnonzero(times_shown == 0)
    if len(never):
        raise UndefinedItemError(dataset.items[i].id for i in never)
    raw = times_best / times_shown
    return 100.0 * raw / raw.sum()


def build_share_report(
    item_ids: Sequence[str],
    shares: np.ndarray,
    n_respondents: int,
    n_observations: int,
    intervals: Mapping[str, tuple[float, float]] | None = None,
) -> ShareReport:
    """Assemble a ShareReport: ranks by descending share, ties by item id."""
    cutoff = chance_cutoff(len(item_ids))
    order = sorted(range(len(item_ids)), key=lambda i: (-shares[i], item_ids[i]))
    rank = {item_ids[i]: pos + 1 for pos, i in enumerate(order)}
    entries = []
    for i, item_id in enumerate(item_ids):
        ci = intervals.get(item_id) if intervals else None
        share = float(shares[i])
        entries.append(
            ItemShare(
                item_id=item_id,
                share=share,
                rank=rank[item_id],
                above_chance=share >= cutoff,
                ci_low=None if ci is None else float(min(ci[0], share)),
                ci_high=None if ci is None else float(max(ci[1], share)),
            )
        )
    return ShareReport(
        entries=tuple(entries),
        chance_cutoff=cutoff,
        n_respondents=n_respondents,
        n_observations=n_observations,
    )


def _fit_packed(
    packed: _Packed,
    options: FitOptions,
    initial: np.ndarray | None,
    trace: list[float] | None,
) -> tuple[np.ndarray, float, bool, int]:
    K = packed.n_items
    u = np.zeros(K) if initial is None else np.asarray(initial, dtype=float).copy()
    u -= u.mean()
    lam = options.l2_penalty
    objective = _packed_log_likelihood(u, packed, lam)
    if trace is not None:
        trace.append(objective)
    converged = False
    iterations = 0
    for _ in range(options.max_iterations):
        grad = _packed_gradient(u, packed, lam)
        if np.abs(grad).max() < options.grad_tolerance:
            converged = True
            break
        neg_hessian = _packed_neg_hessian(u, packed, lam)
        direction = _solve_ascent(neg_hessian, grad)
        # Saturated softmax terms leave near-zero curvature and can blow the
        # Newton step up; utilities beyond ~|35| are already saturated, so
        # capping the move costs nothing and spares the line search.
        largest = np.abs(direction).max()
        if largest > 100.0:
            direction *= 100.0 / largest
        slope = float(grad @ direction)
        if slope <= 0:
            break
        step = 1.0
        moved = False
        while step >= _MIN_STEP:
            candidate = u + step * direction
            candidate -= candidate.mean()
            value = _packed_log_likelihood(candidate, packed, lam)
            if value >= objective + _ARMIJO_C * step * slope:
                gain = value - objective
                u, objective = candidate, value
                moved = gain > 0.0
                break
            step *= 0.5
        if not moved:
            break  # at the floating-point plateau: no representable progress
        iterations += 1
        if trace is not None:
            trace.append(objective)
    if not converged:
        converged = bool(
            np.abs(_packed_gradient(u, packed, lam)).max() < options.grad_tolerance
        )
    return u, objective, converged, iterations


def _solve_ascent(neg_hessian: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Solve (-H + damping) d = g, escalating damping until the solve succeeds."""
    damping = 0.0
    eye = np.eye(len(grad))
    for _ in range(40):
        try:
            chol = np.linalg.cholesky(neg_hessian + damping * eye)
        except np.linalg.LinAlgError:
            damping = 1e-10 if damping == 0.0 else damping * 10.0
            continue
        return np.linalg.solve(chol.T, np.linalg.solve(chol, grad))
    return grad  # fully damped fallback: plain gradient ascent


def fit(
    dataset: Dataset,
    options: FitOptions = FitOptions(),
    initial: Sequence[float] | np.ndarray | None = None,
    track_objective: bool = False,
) -> FitResult:
    """Maximize the penalized log-likelihood; monotone in the objective."""
    if not dataset.observations:
        raise InsufficientDataError("cannot fit a model on zero observations")
    worst_enabled = options.worst_model_enabled
    if worst_enabled is None:
        worst_enabled = any(obs.worst is not None for obs in dataset.observations)
    packed = _Packed.from_dataset(dataset, worst_enabled=worst_enabled)
    trace: list[float] | None = [] if track_objective else None
    u, objective, converged, iterations = _fit_packed(
        packed, options, None if initial is None else np.asarray(initial), trace
    )
    return FitResult(
        utilities=UtilityVector.centered(u),
        shares=build_share_report(
            dataset.item_ids(),
            shares_from_utilities(u),
            n_respondents=dataset.n_respondents,
            n_observations=len(dataset.observations),
        ),
        log_likelihood=objective,
        converged=converged,
        iterations=iterations,
        n_respondents=dataset.n_respondents,
        n_observations=len(dataset.observations),
        l2_penalty=options.l2_penalty,
        objective_trace=None if trace is None else tuple(trace),
    )


def bootstrap_shares(
    dataset: Dataset,
    options: FitOptions = FitOptions(),
    b_replicates: int = 1000,
    seed: int = 0,
) -> dict[str, tuple[float, float]]:
    """Respondent-block bootstrap: percentile 95% interval per item share.

    Replicate r draws its randomness from (seed, r), so results are identical
    under any execution order.
    """
    if b_replicates < 1:
        raise InvalidInputError("b_replicates must be >= 1")
    respondents = sorted({obs.respondent_id for obs in dataset.observations})
    if len(respondents) < 2:
        raise InvalidInputError("bootstrap needs at least 2 distinct respondents")
    worst_enabled = options.worst_model_enabled
    if worst_enabled is None:
        worst_enabled = any(obs.worst is not None for obs in dataset.observations)
    packed = _Packed.from_dataset(dataset, worst_enabled=worst_enabled)
    rows_by_respondent: dict[str, list[int]] = {r: [] for r in respondents}
    for row, obs in enumerate(dataset.observations):
        rows_by_respondent[obs.respondent_id].append(row)

    shares = np.empty((b_replicates, len(dataset.items)))
    for r in range(b_replicates):
        rng = np.random.default_rng([seed, r])
        picks = rng.integers(len(respondents), size=len(respondents))
        rows = np.concatenate([rows_by_respondent[respondents[p]] for p in picks])
        u, _, _, _ = _fit_packed(packed.take(rows), options, None, None)
        shares[r] = shares_from_utilities(u)

    low = np.percentile(shares, 2.5, axis=0)
    high = np.percentile(shares, 97.5, axis=0)
    return {
        item.id: (float(low[i]), float(high[i]))
        for i, item in enumerate(dataset.items)
    }


def fit_by_cohort(
    dataset: Dataset,
    cohorts: Sequence[CohortSpec],
    options: FitOptions = FitOptions(),
) -> CohortAnalysis:
    """Fit each cohort independently and compare against the pooled fit."""
    names = [c.name for c in cohorts]
    if len(set(names)) != len(names):
        raise InvalidInputError("cohort names must be unique")
    pooled = fit(dataset, options)
    results: dict[str, FitResult] = {}
    comparison: list[CohortDelta] = []
    for cohort in cohorts:
        observations = tuple(
            obs for obs in dataset.observations if cohort.matches(obs.attributes)
        )
        if not observations:
            raise InsufficientDataError(
                f"cohort {cohort.name!r} matches no respondents"
            )
        result = fit(Dataset(dataset.items, observations), options)
        results[cohort.name] = result
        for item in dataset.items:
            comparison.append(
                CohortDelta(
                    cohort=cohort.name,
                    item_id=item.id,
                    share_delta=result.shares.share_of(item.id)
                    - pooled.shares.share_of(item.id),
                    rank_shift=result.shares.rank_of(item.id)
                    - pooled.shares.rank_of(item.id),
                )
            )
    return CohortAnalysis(
        pooled=pooled, cohorts=results, comparison=tuple(comparison)
    )


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def fit_result_to_dict(result: FitResult, item_ids: Sequence[str]) -> dict:
    shares = []
    for entry in result.shares.ranked():
        row: dict = {
            "id": entry.item_id,
            "share": entry.share,
            "rank": entry.rank,
            "above_chance": entry.above_chance,
        }
        if entry.ci_low is not None:
            row["ci_low"] = entry.ci_low
            row["ci_high"] = entry.ci_high
        shares.append(row)
    return {
        "utilities": {
            item_id: value
            for item_id, value in zip(item_ids, result.utilities.values)
        },
        "shares": shares,
        "log_likelihood": result.log_likelihood,
        "converged": result.converged,
        "iterations": result.iterations,
        "lambda": result.l2_penalty,
        "n_respondents": result.n_respondents,
        "n_observations": result.n_observations,
        "chance_cutoff": result.shares.chance_cutoff,
    }


def with_intervals(result: FitResult, intervals: Mapping[str, tuple[float, float]]) -> FitResult:
    """Return a copy of the result whose report carries bootstrap intervals."""
    item_ids = [e.item_id for e in result.shares.entries]
    shares = np.array([e.share for e in result.shares.entries])
    return FitResult(
        utilities=result.utilities,
        shares=build_share_report(
            item_ids,
            shares,
            n_respondents=result.n_respondents,
            n_observations=result.n_observations,
            intervals=intervals,
        ),
        log_likelihood=result.log_likelihood,
        converged=result.converged,
        iterations=result.iterations,
        n_respondents=result.n_respondents,
        n_observations=result.n_observations,
        l2_penalty=result.l2_penalty,
        objective_trace=result.objective_trace,
    )
