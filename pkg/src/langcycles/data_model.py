"""Domain records and loaders for the article-grammaticalisation dataset.

The grammaticalisation cycle has four stages, represented as plain integers:
0 (no article), 1 (article identical to its source word), 2 (distinct word),
3 (affix).  Advancing from stage 3 wraps back to stage 0.

All bundled data files are UTF-8, tab-delimited, with ``#`` comment lines:

* ``histories.tsv``   -- one language per row; observation windows as
  ``start..end`` year pairs joined by ``;`` (negative years = BCE), stage
  sequences as comma-joined digits, and a relative population weight.
* ``wals.tsv``        -- worldwide stage counts per article.
* ``regions.tsv``     -- region, year, population size.
* ``composition.tsv`` -- language, region, fraction.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_STAGES = 4
ARTICLES = ("definite", "indefinite")


class DataFileError(ValueError):
    """A data file could not be parsed; the message names file and line."""


class ValidationError(ValueError):
    """A parsed value violates a domain invariant."""


def next_stage(stage: int) -> int:
    """Successor of a cycle stage (3 wraps to 0)."""
    return (stage + 1) % N_STAGES


def data_dir() -> Path:
    """Directory containing the bundled dataset files."""
    return Path(importlib.resources.files("langcycles") / "data")


@dataclass(frozen=True)
class ObservationWindow:
    """A historical period over which a language was observed."""

    start: float  # calendar year, negative = BCE
    end: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValidationError(
                f"window end {self.end} must be after start {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class ArticleRecord:
    """Observed stage sequence of one article in one language."""

    article: str
    stages: tuple[int, ...]

    def __post_init__(self):
        if self.article not in ARTICLES:
            raise ValidationError(f"unknown article {self.article!r}")
        if not self.stages:
            raise ValidationError("stage sequence must be non-empty")
        for s in self.stages:
            if s not in range(N_STAGES):
                raise ValidationError(f"stage {s} outside 0..{N_STAGES - 1}")
        for a, b in zip(self.stages, self.stages[1:]):
            if a == b:
                raise ValidationError(
                    f"consecutive stages must differ, got {a},{b}")

    @property
    def has_skipped_stage(self) -> bool:
        """True if any recorded transition jumps more than one stage."""
        return any((b - a) % N_STAGES > 1
                   for a, b in zip(self.stages, self.stages[1:]))


@dataclass(frozen=True)
class LanguageHistory:
    """One language's observation windows, article records and demography.

    Multiple windows encode periods in which the language was frozen (not
    spoken) between them; the effective observation time is the summed
    window duration.  ``weight`` is the relative historical mean population
    size (dimensionless, smallest region = 1) and ``composition`` maps
    region names to the fraction of that region's population speaking the
    language.
    """

    name: str
    windows: tuple[ObservationWindow, ...]
    definite: ArticleRecord
    indefinite: ArticleRecord
    weight: float
    composition: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.windows:
            raise ValidationError(f"{self.name}: needs at least one window")
        if not self.weight > 0:
            raise ValidationError(f"{self.name}: weight must be positive")
        for frac in self.composition.values():
            if not frac > 0:
                raise ValidationError(
                    f"{self.name}: composition fractions must be positive")

    @property
    def observation_time(self) -> float:
        """Total effective observation time in years (windows summed)."""
        return sum(w.duration for w in self.windows)

    def record(self, article: str) -> ArticleRecord:
        if article == "definite":
            return self.definite
        if article == "indefinite":
            return self.indefinite
        raise ValidationError(f"unknown article {article!r}")


@dataclass(frozen=True)
class CycleDistribution:
    """Worldwide stage counts and the stationary fractions derived from them."""

    counts: tuple[int, ...]
    fractions: tuple[float, ...]


@dataclass(frozen=True)
class RegionPopulationRecord:
    """One surveyed population size: region name, calendar year, persons."""

    region: str
    year: float
    size: float

    def __post_init__(self):
        if not self.size > 0:
            raise ValidationError(
                f"{self.region} at {self.year}: size must be positive")


def changes_count(record: ArticleRecord) -> int:
    """Number of stage changes along a recorded sequence.

    Each transition contributes the number of cyclic stage advances it
    implies, so a (never observed in the bundled data) skipped stage counts
    as two changes; such records are flagged by
    :attr:`ArticleRecord.has_skipped_stage`.
    """
    return sum((b - a) % N_STAGES
               for a, b in zip(record.stages, record.stages[1:]))


def path_stages(record: ArticleRecord) -> list[int]:
    """Stages traversed by the record, including any skipped intermediates.

    Returns ``changes_count(record) + 1`` stages starting at the first
    recorded stage and advancing cyclically.
    """
    m = changes_count(record)
    return [(record.stages[0] + k) % N_STAGES for k in range(m + 1)]


def rate_estimate(m: int, t: float) -> float:
    """Posterior-mean rate of change ``(m + 1) / t`` for m changes in t years."""
    if t <= 0:
        raise ValidationError(f"observation time must be positive, got {t}")
    if m < 0:
        raise ValidationError(f"change count must be non-negative, got {m}")
    return (m + 1) / t


def stationary_fractions(counts) -> CycleDistribution:
    """Stationary stage fractions from worldwide stage counts.

    The last fraction absorbs rounding so the four sum to 1 exactly.
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != N_STAGES:
        raise ValidationError(f"expected {N_STAGES} counts, got {len(counts)}")
    if any(c < 0 for c in counts):
        raise ValidationError("counts must be non-negative")
    total = sum(counts)
    if total == 0:
        raise ValidationError("counts must not all be zero")
    fracs = [c / total for c in counts]
    fracs[-1] = 1.0 - sum(fracs[:-1])
    return CycleDistribution(counts=counts, fractions=tuple(fracs))


def _data_rows(path):
    """Yield (line_number, fields) for non-comment, non-blank TSV rows."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def _parse_stages(text: str, path, lineno: int) -> tuple[int, ...]:
    stages = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok not in {"0", "1", "2", "3"}:
            raise ValidationError(
                f"{path}:{lineno}: unknown stage symbol {tok!r}")
        stages.append(int(tok))
    return tuple(stages)


def load_histories(path, composition: dict[str, dict[str, float]] | None = None,
                   ) -> list[LanguageHistory]:
    """Load language histories from a ``histories.tsv`` file.

    Parameters
    ----------
    path : str or Path
        File in the histories schema (see module docstring).
    composition : dict, optional
        Mapping language -> {region: fraction}, as returned by
        :func:`load_composition`; attached to each record when given.

    Returns
    -------
    list of LanguageHistory
    """
    composition = composition or {}
    histories = []
    header_seen = False
    for lineno, fields in _data_rows(path):
        if not header_seen and fields[0] == "language":
            header_seen = True
            continue
        if len(fields) != 5:
            raise DataFileError(
                f"{path}:{lineno}: expected 5 tab-separated fields, "
                f"got {len(fields)}")
        name, windows_text, def_text, indef_text, weight_text = fields
        try:
            windows = []
            for span in windows_text.split(";"):
                start_s, _, end_s = span.partition("..")
                windows.append(ObservationWindow(float(start_s), float(end_s)))
            weight = float(weight_text)
        except (ValueError, ValidationError) as exc:
            raise DataFileError(f"{path}:{lineno}: {exc}") from exc
        histories.append(LanguageHistory(
            name=name,
            windows=tuple(windows),
            definite=ArticleRecord("definite",
                                   _parse_stages(def_text, path, lineno)),
            indefinite=ArticleRecord("indefinite",
                                     _parse_stages(indef_text, path, lineno)),
            weight=weight,
            composition=dict(composition.get(name, {})),
        ))
    return histories


def serialize_histories(histories) -> str:
    """Render histories back into the TSV schema (inverse of load)."""
    def fmt_year(y: float) -> str:
        return f"{int(y)}" if float(y).is_integer() else f"{y}"

    lines = ["language\twindows\tdefinite\tindefinite\tweight"]
    for h in histories:
        wins = ";".join(f"{fmt_year(w.start)}..{fmt_year(w.end)}"
                        for w in h.windows)
        lines.append("\t".join([
            h.name, wins,
            ",".join(str(s) for s in h.definite.stages),
            ",".join(str(s) for s in h.indefinite.stages),
            f"{h.weight:.3g}",
        ]))
    return "\n".join(lines) + "\n"


def load_wals(path) -> dict[str, CycleDistribution]:
    """Load worldwide stage counts; returns {article: CycleDistribution}."""
    out = {}
    for lineno, fields in _data_rows(path):
        if fields[0] == "article":
            continue
        if len(fields) != 1 + N_STAGES:
            raise DataFileError(
                f"{path}:{lineno}: expected article plus {N_STAGES} counts")
        article = fields[0]
        if article not in ARTICLES:
            raise ValidationError(f"{path}:{lineno}: unknown article {article!r}")
        try:
            counts = [int(c) for c in fields[1:]]
        except ValueError as exc:
            raise DataFileError(f"{path}:{lineno}: {exc}") from exc
        out[article] = stationary_fractions(counts)
    return out


def load_regions(path) -> list[RegionPopulationRecord]:
    """Load the regional population survey; one record per (region, year)."""
    records = []
    for lineno, fields in _data_rows(path):
        if fields[0] == "region":
            continue
        if len(fields) != 3:
            raise DataFileError(
                f"{path}:{lineno}: expected region, year, size")
        try:
            records.append(RegionPopulationRecord(
                region=fields[0], year=float(fields[1]), size=float(fields[2])))
        except ValueError as exc:
            raise DataFileError(f"{path}:{lineno}: {exc}") from exc
    return records


def load_composition(path) -> dict[str, dict[str, float]]:
    """Load language -> {region: fraction} from a composition file."""
    out: dict[str, dict[str, float]] = {}
    for lineno, fields in _data_rows(path):
        if fields[0] == "language":
            continue
        if len(fields) != 3:
            raise DataFileError(
                f"{path}:{lineno}: expected language, region, fraction")
        try:
            frac = float(fields[2])
        except ValueError as exc:
            raise DataFileError(f"{path}:{lineno}: {exc}") from exc
        out.setdefault(fields[0], {})[fields[1]] = frac
    return out


def load_dataset(directory=None):
    """Load the bundled (or a compatible) dataset directory.

    Returns
    -------
    (histories, wals, regions) where histories carry their composition.
    """
    directory = Path(directory) if directory is not None else data_dir()
    composition = load_composition(directory / "composition.tsv")
    histories = load_histories(directory / "histories.tsv", composition)
    wals = load_wals(directory / "wals.tsv")
    regions = load_regions(directory / "regions.tsv")
    return histories, wals, regions


def median_change_rate(histories, article: str) -> float:
    """Median of per-language rate estimates (m+1)/t for one article."""
    rates = [rate_estimate(changes_count(h.record(article)), h.observation_time)
             for h in histories]
    return float(np.median(rates))
