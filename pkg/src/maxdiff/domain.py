"""Core vocabulary for MaxDiff studies: items, designs, observations, reports.

Everything here is an immutable value after construction and safe to share
across threads. Constructors enforce only the invariants a caller cannot
reasonably get wrong by accident (non-empty ids, valid spec arithmetic);
data-quality problems are collected by :func:`validate_dataset` as
diagnostics rather than raised, so that malformed field data can be loaded
and inspected.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

# Fixed default seed: reproducibility outranks novelty for a research tool.
DEFAULT_SEED = 1729

BEST_ONLY = "best_only"
BEST_WORST = "best_worst"
TOP_CHOICE = "top_choice"
RESPONSE_MODES = (BEST_ONLY, BEST_WORST, TOP_CHOICE)

ITEMS_CSV_HEADER = ("id", "label", "description")
RESPONSES_CSV_HEADER = (
    "respondent_id",
    "version",
    "screen",
    "shown",
    "best",
    "worst",
    "attributes",
)

_ID_RE = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.\-]*$")


class MaxDiffError(Exception):
    """Base class for every error raised by this package."""


class InvalidSpecError(MaxDiffError):
    """A design or population specification violates its own arithmetic."""


class InvalidInputError(MaxDiffError):
    """An argument is malformed or inconsistent with the study."""


class InsufficientDataError(MaxDiffError):
    """Not enough observations (or respondents) to run the requested analysis."""


class UndefinedItemError(MaxDiffError):
    """An operation needs exposure counts for items that were never shown."""

    def __init__(self, item_ids: Iterable[str]):
        self.item_ids = tuple(item_ids)
        super().__init__("items never shown: " + ", ".join(self.item_ids))


class NotFoundError(MaxDiffError):
    """Unknown study or session id."""


class ConflictError(MaxDiffError):
    """A write collides with already-recorded state (first answer wins)."""


def chance_cutoff(n_items: int) -> float:
    """Share (in percent) an item gets under uniform random picking: 100/K.

    Items at or above this bar are the candidates worth carrying forward.
    """
    if n_items < 2:
        raise InvalidSpecError(f"chance cutoff needs at least 2 items, got {n_items}")
    return 100.0 / n_items


@dataclass(frozen=True)
class Item:
    """One candidate feature shown to respondents."""

    id: str
    label: str
    description: str = ""

    def __post_init__(self):
        if not _ID_RE.match(self.id or ""):
            raise InvalidInputError(f"item id {self.id!r} is not a valid slug")
        if not self.label:
            raise InvalidInputError(f"item {self.id!r} has an empty label")


@dataclass(frozen=True)
class DesignSpec:
    """Shape of an experimental design: K items, k per screen, T screens, V versions."""

    n_items: int
    items_per_screen: int
    screens_per_respondent: int
    n_versions: int
    rng_seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.n_items < 2:
            raise InvalidSpecError(f"need at least 2 items, got {self.n_items}")
        if not 2 <= self.items_per_screen <= self.n_items:
            raise InvalidSpecError(
                f"items_per_screen must be in [2, {self.n_items}], "
                f"got {self.items_per_screen}"
            )
        if self.screens_per_respondent < 1:
            raise InvalidSpecError("screens_per_respondent must be >= 1")
        if self.n_versions < 1:
            raise InvalidSpecError("n_versions must be >= 1")
        if not 0 <= self.rng_seed < 2**64:
            raise InvalidSpecError("rng_seed must fit in an unsigned 64-bit integer")

    def warnings(self) -> list[str]:
        """Nonfatal findings: legal but nonstandard parameter choices."""
        notes = []
        if not 3 <= self.items_per_screen <= 5:
            notes.append(
                f"nonstandard screen size k={self.items_per_screen}: "
                "typical studies show 3-5 items per screen"
            )
        if self.screens_per_respondent * self.items_per_screen < self.n_items:
            notes.append(
                "T*k < K: a single version cannot show every item to its respondent"
            )
        return notes


@dataclass(frozen=True)
class Screen:
    """Ordered item indices for one trial; order is display order."""

    item_indices: tuple[int, ...]

    def __post_init__(self):
        indices = tuple(int(i) for i in self.item_indices)
        object.__setattr__(self, "item_indices", indices)
        if any(i < 0 for i in indices):
            raise InvalidInputError("screen contains a negative item index")


@dataclass(frozen=True)
class Design:
    """V versions of T screens each. Use design_diagnostics() to audit balance.

    ``metadata`` carries generation bookkeeping (warnings, balance scores);
    it is informational and not part of the design's identity.
    """

    spec: DesignSpec
    versions: tuple[tuple[Screen, ...], ...]
    metadata: Mapping[str, object] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "versions", tuple(tuple(screens) for screens in self.versions)
        )
        if not self.versions:
            raise InvalidInputError("design has no versions")


@dataclass(frozen=True)
class ChoiceObservation:
    """One recorded trial: what was shown, what was picked.

    ``worst`` is None in Best-Only studies. Consistency against the item
    list and the design is checked by validate_dataset, not here, so that
    dirty field data remains loadable.
    """

    respondent_id: str
    version_index: int
    screen_index: int
    shown: tuple[str, ...]
    best: str
    worst: str | None = None
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.respondent_id:
            raise InvalidInputError("observation has an empty respondent_id")
        object.__setattr__(self, "shown", tuple(self.shown))
        object.__setattr__(self, "attributes", dict(self.attributes))

    @property
    def n_decisions(self) -> int:
        """Selections the respondent had to make on this screen (1 or 2)."""
        return 1 + (self.worst is not None)


@dataclass(frozen=True)
class Dataset:
    """Items under test plus every recorded observation."""

    items: tuple[Item, ...]
    observations: tuple[ChoiceObservation, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(self, "observations", tuple(self.observations))
        ids = [item.id for item in self.items]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise InvalidInputError(f"duplicate item ids: {', '.join(dupes)}")

    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self.items)

    def item_index(self) -> dict[str, int]:
        return {item.id: i for i, item in enumerate(self.items)}

    def respondent_ids(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for obs in self.observations:
            seen.setdefault(obs.respondent_id, None)
        return tuple(seen)

    @property
    def n_respondents(self) -> int:
        return len({obs.respondent_id for obs in self.observations})


@dataclass(frozen=True)
class CohortSpec:
    """Named respondent segment: exact match on every required attribute."""

    name: str
    required_attributes: Mapping[str, str]

    def __post_init__(self):
        if not self.name:
            raise InvalidInputError("cohort name must be nonempty")
        object.__setattr__(self, "required_attributes", dict(self.required_attributes))

    def matches(self, attributes: Mapping[str, str]) -> bool:
        return all(attributes.get(k) == v for k, v in self.required_attributes.items())


@dataclass(frozen=True)
class ItemShare:
    """One item's row in a ShareReport."""

    item_id: str
    share: float
    rank: int
    above_chance: bool
    ci_low: float | None = None
    ci_high: float | None = None


@dataclass(frozen=True)
class ShareReport:
    """Preference shares summing to 100, ranked, with the chance bar applied.

    Construction enforces the report invariants, so any ShareReport in the
    system is internally consistent by the time anyone can see it.
    """

    entries: tuple[ItemShare, ...]
    chance_cutoff: float
    n_respondents: int
    n_observations: int

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        total = sum(e.share for e in self.entries)
        if abs(total - 100.0) > 1e-9:
            raise InvalidInputError(f"shares sum to {total!r}, not 100")
        if sorted(e.rank for e in self.entries) != list(range(1, len(self.entries) + 1)):
            raise InvalidInputError("ranks are not a permutation of 1..K")
        for e in self.entries:
            if e.above_chance != (e.share >= self.chance_cutoff):
                raise InvalidInputError(
                    f"above_chance flag for {e.item_id} contradicts its share"
                )
            if (e.ci_low is None) != (e.ci_high is None):
                raise InvalidInputError(f"half-open interval for {e.item_id}")
            if e.ci_low is not None and not e.ci_low <= e.share <= e.ci_high:
                raise InvalidInputError(
                    f"share of {e.item_id} lies outside its own interval"
                )

    def share_of(self, item_id: str) -> float:
        return self._by_id()[item_id].share

    def rank_of(self, item_id: str) -> int:
        return self._by_id()[item_id].rank

    def ranked(self) -> tuple[ItemShare, ...]:
        return tuple(sorted(self.entries, key=lambda e: e.rank))

    def _by_id(self) -> dict[str, ItemShare]:
        return {e.item_id: e for e in self.entries}


def validate_dataset(dataset: Dataset, design: Design | None = None) -> list[str]:
    """Return every invariant violation found; an empty list means valid.

    Checks per observation: shown-set size and uniqueness, membership of ids
    in the study item list, best/worst membership rules, and (when a design
    is supplied) version/screen index ranges.
    """
    problems: list[str] = []
    known = {item.id for item in dataset.items}
    for obs in dataset.observations:
        where = f"respondent {obs.respondent_id} screen {obs.screen_index}"
        if len(obs.shown) < 2:
            problems.append(f"{where}: only {len(obs.shown)} items shown, need >= 2")
        if len(set(obs.shown)) != len(obs.shown):
            problems.append(f"{where}: duplicate ids in shown set")
        unknown = [i for i in obs.shown if i not in known]
        if unknown:
            problems.append(f"{where}: unknown item ids {', '.join(unknown)}")
        if obs.best not in obs.shown:
            problems.append(f"{where}: best {obs.best!r} not in shown set")
        if obs.worst is not None:
            if obs.worst not in obs.shown:
                problems.append(f"{where}: worst {obs.worst!r} not in shown set")
            elif obs.worst == obs.best:
                problems.append(f"{where}: worst equals best ({obs.best!r})")
        if design is not None:
            if not 0 <= obs.version_index < len(design.versions):
                problems.append(
                    f"{where}: version index {obs.version_index} out of range"
                )
            elif not 0 <= obs.screen_index < len(design.versions[obs.version_index]):
                problems.append(
                    f"{where}: screen index {obs.screen_index} out of range"
                )
    return problems


def decision_counts(dataset: Dataset) -> dict[str, int]:
    """Total selections each respondent made: T in best-only, 2T in best-worst."""
    counts: dict[str, int] = {}
    for obs in dataset.observations:
        counts[obs.respondent_id] = counts.get(obs.respondent_id, 0) + obs.n_decisions
    return counts


# ---------------------------------------------------------------------------
# CSV interchange formats
# ---------------------------------------------------------------------------


def _format_attributes(attributes: Mapping[str, str]) -> str:
    return ";".join(f"{k}={attributes[k]}" for k in sorted(attributes))


def _parse_attributes(text: str) -> dict[str, str]:
    attributes: dict[str, str] = {}
    if not text:
        return attributes
    for pair in text.split(";"):
        key, sep, value = pair.partition("=")
        if not sep:
            raise InvalidInputError(f"malformed attribute pair {pair!r}")
        attributes[key] = value
    return attributes


def items_to_csv(items: Sequence[Item]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(ITEMS_CSV_HEADER)
    for item in items:
        writer.writerow([item.id, item.label, item.description])
    return buf.getvalue()


def items_from_csv(text: str) -> tuple[Item, ...]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != ITEMS_CSV_HEADER:
        raise InvalidInputError(
            f"items CSV must start with header {','.join(ITEMS_CSV_HEADER)}"
        )
    items = []
    for row in reader:
        if not row:
            continue
        if len(row) != 3:
            raise InvalidInputError(f"items CSV row has {len(row)} fields, expected 3")
        items.append(Item(id=row[0], label=row[1], description=row[2]))
    return tuple(items)


def observations_to_csv(observations: Sequence[ChoiceObservation]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESPONSES_CSV_HEADER)
    for obs in observations:
        writer.writerow(
            [
                obs.respondent_id,
                obs.version_index,
                obs.screen_index,
                "|".join(obs.shown),
                obs.best,
                obs.worst or "",
                _format_attributes(obs.attributes),
            ]
        )
    return buf.getvalue()


def observations_from_csv(text: str) -> tuple[ChoiceObservation, ...]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != RESPONSES_CSV_HEADER:
        raise InvalidInputError(
            f"responses CSV must start with header {','.join(RESPONSES_CSV_HEADER)}"
        )
    observations = []
    for row in reader:
        if not row:
            continue
        if len(row) != 7:
            raise InvalidInputError(
                f"responses CSV row has {len(row)} fields, expected 7"
            )
        observations.append(
            ChoiceObservation(
                respondent_id=row[0],
                version_index=int(row[1]),
                screen_index=int(row[2]),
                shown=tuple(row[3].split("|")),
                best=row[4],
                worst=row[5] or None,
                attributes=_parse_attributes(row[6]),
            )
        )
    return tuple(observations)


def write_items_csv(items: Sequence[Item], path: Path | str) -> None:
    Path(path).write_text(items_to_csv(items), encoding="utf-8")


def read_items_csv(path: Path | str) -> tuple[Item, ...]:
    return items_from_csv(Path(path).read_text(encoding="utf-8"))


def write_responses_csv(observations: Sequence[ChoiceObservation], path: Path | str) -> None:
    Path(path).write_text(observations_to_csv(observations), encoding="utf-8")


def read_responses_csv(path: Path | str) -> tuple[ChoiceObservation, ...]:
    return observations_from_csv(Path(path).read_text(encoding="utf-8"))


def load_dataset(items_path: Path | str, responses_path: Path | str) -> Dataset:
    return Dataset(
        items=read_items_csv(items_path),
        observations=read_responses_csv(responses_path),
    )
