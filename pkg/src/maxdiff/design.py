"""Balanced assignment of item subsets to screens.

Construction has three deterministic phases per design:

1. greedy fill: each screen takes the k least-shown items of its version
   (ties broken by a seeded shuffle), which provably keeps per-version
   appearance counts within max - min <= 1;
2. pairwise-swap hill climb: a fixed budget of proposed swaps between two
   screens of the same version, accepted only when the variance of the
   design-wide pair co-occurrence counts strictly drops;
3. display-order shuffle: per screen, positions are filled greedily by the
   item with the fewest appearances at that position so far.

Every phase draws from a sub-seed derived from (rng_seed, version_index,
phase), so regeneration is bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import Design, DesignSpec, InvalidInputError, Screen

SWAP_ATTEMPTS_PER_VERSION = 2000
# The per-version budget runs in interleaved rounds: improvements in one
# version can unlock further improvements in another, since acceptance is
# scored on the design-wide co-occurrence matrix.
SWAP_ROUNDS = 4

_PHASE_FILL = 0
_PHASE_SWAP = 1
_PHASE_SHUFFLE = 2


@dataclass(frozen=True)
class DesignDiagnostics:
    """Exact balance accounting for a design.

    frequencies: per-version item appearance counts, shape (V, K).
    cooccurrence: pair co-occurrence counts summed over versions, shape (K, K),
        symmetric with zero diagonal.
    positional: appearance counts by display position, shape (K, k).
    violations: text findings; empty iff the design invariants hold.
    balance_score: variance of the co-occurrence counts over unordered pairs.
    """

    frequencies: np.ndarray
    cooccurrence: np.ndarray
    positional: np.ndarray
    violations: tuple[str, ...]
    balance_score: float


def pair_balance_score(cooccurrence: np.ndarray) -> float:
    """Variance of co-occurrence counts over unordered item pairs."""
    upper = np.triu_indices(cooccurrence.shape[0], k=1)
    return float(np.var(cooccurrence[upper]))


def _version_rng(seed: int, version: int, phase: int) -> np.random.Generator:
    return np.random.default_rng([seed, version, phase])


def _greedy_fill(
    n_items: int, per_screen: int, n_screens: int, rng: np.random.Generator
) -> np.ndarray:
    """Fill each screen with the k least-used items; keeps max-min count <= 1.

    Items strictly below the boundary count are forced in; ties at the
    boundary are broken toward the candidate that has co-occurred least
    with the items already on the screen (then by a seeded shuffle), which
    starts the swap phase close to pair balance.
    """
    counts = np.zeros(n_items, dtype=np.int64)
    cooc = np.zeros((n_items, n_items), dtype=np.int64)
    screens = np.empty((n_screens, per_screen), dtype=np.intp)
    for t in range(n_screens):
        order = rng.permutation(n_items)
        by_count = order[np.argsort(counts[order], kind="stable")]
        boundary = counts[by_count[per_screen - 1]]
        chosen = [int(i) for i in by_count[:per_screen] if counts[i] < boundary]
        pool = [int(i) for i in by_count if counts[i] == boundary]
        while len(chosen) < per_screen:
            pick = min(pool, key=lambda i: sum(cooc[i, c] for c in chosen))
            pool.remove(pick)
            chosen.append(pick)
        screens[t] = chosen
        counts[chosen] += 1
        for a_pos in range(per_screen):
            for b_pos in range(a_pos + 1, per_screen):
                a, b = chosen[a_pos], chosen[b_pos]
                cooc[a, b] += 1
                cooc[b, a] += 1
    return screens


def _cooccurrence_matrix(versions: list[np.ndarray], n_items: int) -> np.ndarray:
    cooc = np.zeros((n_items, n_items), dtype=np.int64)
    for screens in versions:
        for row in screens:
            for a_pos in range(len(row)):
                for b_pos in range(a_pos + 1, len(row)):
                    a, b = row[a_pos], row[b_pos]
                    if a != b:
                        cooc[a, b] += 1
                        cooc[b, a] += 1
    return cooc


def _swap_improvement(
    cooc: np.ndarray, row1: np.ndarray, s1: int, row2: np.ndarray, s2: int
) -> int:
    """Change in the sum of squared pair counts if row1[s1] and row2[s2] swap.

    The number of pairs is fixed, so the pair-count mean is invariant and
    minimizing the variance is the same as minimizing the sum of squares.
    Net changes are accumulated per unordered pair first: when the screens
    share an item, the same pair can lose and gain one co-occurrence.
    """
    x, y = row1[s1], row2[s2]
    net: dict[tuple[int, int], int] = {}

    def bump(a: int, b: int, change: int) -> None:
        key = (a, b) if a < b else (b, a)
        net[key] = net.get(key, 0) + change

    for pos in range(len(row1)):
        if pos != s1:
            bump(x, row1[pos], -1)
            bump(y, row1[pos], +1)
    for pos in range(len(row2)):
        if pos != s2:
            bump(y, row2[pos], -1)
            bump(x, row2[pos], +1)

    delta = 0
    for (a, b), change in net.items():
        c = int(cooc[a, b])
        delta += (c + change) ** 2 - c**2
    return delta


def _apply_swap(
    cooc: np.ndarray, row1: np.ndarray, s1: int, row2: np.ndarray, s2: int
) -> None:
    x, y = row1[s1], row2[s2]
    for pos in range(len(row1)):
        if pos == s1:
            continue
        other = row1[pos]
        cooc[x, other] -= 1
        cooc[other, x] -= 1
        cooc[y, other] += 1
        cooc[other, y] += 1
    for pos in range(len(row2)):
        if pos == s2:
            continue
        other = row2[pos]
        cooc[y, other] -= 1
        cooc[other, y] -= 1
        cooc[x, other] += 1
        cooc[other, x] += 1
    row1[s1], row2[s2] = y, x


def _hill_climb(
    screens: np.ndarray,
    cooc: np.ndarray,
    rng: np.random.Generator,
    attempts: int,
) -> None:
    """Strictly-improving swaps between two screens of one version, in place."""
    n_screens, per_screen = screens.shape
    if n_screens < 2:
        return
    for _ in range(attempts):
        t1, t2 = rng.choice(n_screens, size=2, replace=False)
        s1 = int(rng.integers(per_screen))
        s2 = int(rng.integers(per_screen))
        x, y = screens[t1, s1], screens[t2, s2]
        if x == y or y in screens[t1] or x in screens[t2]:
            continue
        if _swap_improvement(cooc, screens[t1], s1, screens[t2], s2) < 0:
            _apply_swap(cooc, screens[t1], s1, screens[t2], s2)


def _shuffle_positions(
    screens: np.ndarray,
    position_counts: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Order each screen so items land on their least-used display positions."""
    n_screens, per_screen = screens.shape
    ordered = np.empty_like(screens)
    for t in range(n_screens):
        remaining = list(rng.permutation(screens[t]))
        for pos in range(per_screen):
            best_i = min(
                range(len(remaining)), key=lambda i: position_counts[remaining[i], pos]
            )
            item = remaining.pop(best_i)
            ordered[t, pos] = item
            position_counts[item, pos] += 1
    return ordered


def generate_design(spec: DesignSpec) -> Design:
    """Build a Design for the spec; bit-identical for equal specs (incl. seed)."""
    n_items = spec.n_items
    per_screen = spec.items_per_screen
    n_screens = spec.screens_per_respondent
    seed = spec.rng_seed

    versions = [
        _greedy_fill(n_items, per_screen, n_screens, _version_rng(seed, v, _PHASE_FILL))
        for v in range(spec.n_versions)
    ]

    cooc = _cooccurrence_matrix(versions, n_items)
    score_before = pair_balance_score(cooc)
    swap_rngs = [_version_rng(seed, v, _PHASE_SWAP) for v in range(spec.n_versions)]
    per_round = SWAP_ATTEMPTS_PER_VERSION // SWAP_ROUNDS
    for _ in range(SWAP_ROUNDS):
        for v, screens in enumerate(versions):
            _hill_climb(screens, cooc, swap_rngs[v], per_round)
    score_after = pair_balance_score(cooc)

    position_counts = np.zeros((n_items, per_screen), dtype=np.int64)
    versions = [
        _shuffle_positions(screens, position_counts, _version_rng(seed, v, _PHASE_SHUFFLE))
        for v, screens in enumerate(versions)
    ]

    metadata = {
        "warnings": spec.warnings(),
        "balance_score_initial": score_before,
        "balance_score": score_after,
        "swap_attempts_per_version": SWAP_ATTEMPTS_PER_VERSION,
    }
    return Design(
        spec=spec,
        versions=tuple(
            tuple(Screen(tuple(int(i) for i in row)) for row in screens)
            for screens in versions
        ),
        metadata=metadata,
    )


def design_diagnostics(design: Design) -> DesignDiagnostics:
    """Count frequencies, pair co-occurrences, and positions; list violations."""
    spec = design.spec
    n_items, per_screen = spec.n_items, spec.items_per_screen
    violations: list[str] = []

    if len(design.versions) != spec.n_versions:
        violations.append(
            f"design has {len(design.versions)} versions, spec says {spec.n_versions}"
        )

    frequencies = np.zeros((len(design.versions), n_items), dtype=np.int64)
    cooc = np.zeros((n_items, n_items), dtype=np.int64)
    positional = np.zeros((n_items, per_screen), dtype=np.int64)

    for v, screens in enumerate(design.versions):
        if len(screens) != spec.screens_per_respondent:
            violations.append(
                f"version {v} has {len(screens)} screens, "
                f"spec says {spec.screens_per_respondent}"
            )
        for t, screen in enumerate(screens):
            indices = screen.item_indices
            where = f"version {v} screen {t}"
            if len(indices) != per_screen:
                violations.append(
                    f"{where}: {len(indices)} items, spec says {per_screen}"
                )
            if len(set(indices)) != len(indices):
                violations.append(f"{where}: duplicate item in screen")
            out_of_range = [i for i in indices if i >= n_items]
            if out_of_range:
                violations.append(f"{where}: item index out of range")
            valid = [i for i in indices if i < n_items]
            for i in valid:
                frequencies[v, i] += 1
            for pos, i in enumerate(valid[:per_screen]):
                positional[i, pos] += 1
            for a_pos in range(len(valid)):
                for b_pos in range(a_pos + 1, len(valid)):
                    a, b = valid[a_pos], valid[b_pos]
                    if a != b:
                        cooc[a, b] += 1
                        cooc[b, a] += 1

        spread = frequencies[v].max() - frequencies[v].min()
        if spread > 1:
            violations.append(
                f"version {v}: item frequencies spread by {spread}, max allowed is 1"
            )
        total_slots = spec.screens_per_respondent * per_screen
        if total_slots >= n_items and frequencies[v].min() == 0:
            missing = [int(i) for i in np.flatnonzero(frequencies[v] == 0)]
            violations.append(f"version {v}: items {missing} never appear")

    return DesignDiagnostics(
        frequencies=frequencies,
        cooccurrence=cooc,
        positional=positional,
        violations=tuple(violations),
        balance_score=pair_balance_score(cooc),
    )


# ---------------------------------------------------------------------------
# JSON interchange (item ids, not indices, for portability)
# ---------------------------------------------------------------------------


def design_to_dict(design: Design, item_ids: list[str] | tuple[str, ...]) -> dict:
    if len(item_ids) != design.spec.n_items:
        raise InvalidInputError(
            f"design expects {design.spec.n_items} items, got {len(item_ids)}"
        )
    spec = design.spec
    return {
        "spec": {
            "n_items": spec.n_items,
            "items_per_screen": spec.items_per_screen,
            "screens_per_respondent": spec.screens_per_respondent,
            "n_versions": spec.n_versions,
            "rng_seed": spec.rng_seed,
        },
        "item_ids": list(item_ids),
        "versions": [
            [[item_ids[i] for i in screen.item_indices] for screen in screens]
            for screens in design.versions
        ],
        "metadata": dict(design.metadata),
    }


def design_from_dict(doc: dict) -> tuple[Design, tuple[str, ...]]:
    spec = DesignSpec(**doc["spec"])
    item_ids = tuple(doc["item_ids"])
    index = {item_id: i for i, item_id in enumerate(item_ids)}
    try:
        versions = tuple(
            tuple(Screen(tuple(index[i] for i in screen)) for screen in screens)
            for screens in doc["versions"]
        )
    except KeyError as exc:
        raise InvalidInputError(f"design references unknown item id {exc}") from exc
    return Design(spec=spec, versions=versions, metadata=doc.get("metadata", {})), item_ids
