"""Junction resistance wafer maps: parsing, uniformity and yield statistics.

The CSV schema is ``die_id,x_mm,y_mm,kind,area_um2,n_junctions,rn_ohm``.  An
``rn_ohm`` of ``open`` marks an open structure; values at or below the short
threshold mark a short.  Both stay in the map with flags so that exclusions
can be accounted for.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import DELTA_AL_GHZ, R_K_OHM
from .errors import ValidationError

log = logging.getLogger(__name__)

WAFER_COLUMNS = ("die_id", "x_mm", "y_mm", "kind", "area_um2", "n_junctions", "rn_ohm")
KINDS = ("JJ", "JJA")
DEFAULT_SHORT_THRESHOLD = 10.0
MIN_GROUP_SIZE = 3


@dataclass(frozen=True)
class WaferRecord:
    die_id: str
    x: float
    y: float
    kind: str
    area: float
    n_junctions: int
    rn: float
    is_open: bool = False
    is_short: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.area > 0:
            raise ValidationError("area must be positive")
        if self.n_junctions < 1:
            raise ValidationError("n_junctions must be >= 1")
        if self.kind == "JJ" and self.n_junctions != 1:
            raise ValidationError("a JJ record must have n_junctions = 1")
        if not (self.rn > 0 or self.is_open or self.is_short):
            raise ValidationError("rn must be positive unless flagged open or short")

    @property
    def group(self) -> tuple[str, float]:
        return (self.kind, self.area)

    @property
    def is_hard_failure(self) -> bool:
        return self.is_open or self.is_short


@dataclass
class WaferMap:
    records: list = field(default_factory=list)
    wafer_label: str = ""

    def __len__(self):
        return len(self.records)

    def groups(self) -> list[tuple[str, float]]:
        return sorted({r.group for r in self.records})


def _parse_row(row, lineno, short_threshold):
    try:
        rn_text = row["rn_ohm"].strip()
        is_open = rn_text.lower() == "open"
        rn = math.inf if is_open else float(rn_text)
        is_short = (not is_open) and rn <= short_threshold
        return WaferRecord(
            die_id=row["die_id"].strip(),
            x=float(row["x_mm"]),
            y=float(row["y_mm"]),
            kind=row["kind"].strip(),
            area=float(row["area_um2"]),
            n_junctions=int(row["n_junctions"]),
            rn=rn,
            is_open=is_open,
            is_short=is_short,
        )
    except (ValueError, TypeError, AttributeError) as exc:
        raise ValidationError(f"line {lineno}: {exc}") from None


def load_wafer_csv(path, short_threshold: float = DEFAULT_SHORT_THRESHOLD, wafer_label: str | None = None) -> WaferMap:
    """Parse a wafer CSV; lines starting with '#' are comments.

    Every malformed row is collected and reported together, each with its
    line number.  A file with a header but no data gives an empty map.
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"wafer file not found: {path}")
    with path.open(newline="") as fh:
        numbered = [(i, line) for i, line in enumerate(fh, start=1) if line.strip() and not line.lstrip().startswith("#")]
    if not numbered:
        return WaferMap([], wafer_label if wafer_label is not None else path.stem)
    reader = csv.DictReader([line for _, line in numbered])
    missing = [c for c in WAFER_COLUMNS if c not in (reader.fieldnames or [])]
    if missing:
        raise ValidationError(f"wafer file missing columns: {', '.join(missing)}")
    records, problems = [], []
    for (lineno, _), row in zip(numbered[1:], reader):
        if None in row or any(row[c] is None for c in WAFER_COLUMNS):
            problems.append(f"line {lineno}: wrong number of fields")
            continue
        try:
            records.append(_parse_row(row, lineno, short_threshold))
        except ValidationError as exc:
            problems.append(str(exc))
    if problems:
        raise ValidationError("malformed wafer rows:\n" + "\n".join(problems))
    return WaferMap(records, wafer_label if wafer_label is not None else path.stem)


def write_wafer_csv(wafer: WaferMap, path) -> None:
    from .io import atomic_write_text  # local import keeps wafer free of CLI plumbing

    lines = [",".join(WAFER_COLUMNS)]
    for r in wafer.records:
        rn = "open" if r.is_open else repr(float(r.rn))
        lines.append(f"{r.die_id},{r.x!r},{r.y!r},{r.kind},{r.area!r},{r.n_junctions},{rn}")
    atomic_write_text(path, "\n".join(lines) + "\n")


# -- statistics --------------------------------------------------------------------


@dataclass(frozen=True)
class GroupStats:
    kind: str
    area: float
    mean: float
    std: float
    rsd_percent: float
    count: int
    excluded: tuple = ()


@dataclass
class StatsSummary:
    groups: dict = field(default_factory=dict)
    excluded: list = field(default_factory=list)
    omitted_groups: list = field(default_factory=list)
    n_parsed: int = 0
    n_included: int = 0
    yield_percent: float | None = None

    def to_dict(self) -> dict:
        return {
            "groups": [
                {
                    "kind": g.kind,
                    "area_um2": g.area,
                    "mean_ohm": g.mean,
                    "std_ohm": g.std,
                    "rsd_percent": g.rsd_percent,
                    "count": g.count,
                    "excluded_dies": list(g.excluded),
                }
                for _, g in sorted(self.groups.items())
            ],
            "excluded": self.excluded,
            "omitted_groups": self.omitted_groups,
            "n_parsed": self.n_parsed,
            "n_included": self.n_included,
            "yield_percent": self.yield_percent,
        }


def rsd_percent(values) -> float:
    """100 * sample standard deviation / mean."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValidationError("RSD needs at least two values")
    return float(100.0 * np.std(v, ddof=1) / np.mean(v))


def rsd_by_area(
    wafer: WaferMap,
    edge_dies=(),
    drop_failures: bool = True,
    min_count: int = MIN_GROUP_SIZE,
) -> StatsSummary:
    """Per-(kind, area) mean, sample std and RSD% after exclusions.

    Records on ``edge_dies`` and (by default) opens and shorts are excluded;
    every exclusion is listed so included plus excluded equals parsed.  Groups
    with fewer than ``min_count`` remaining records are omitted with a notice.
    """
    edge = set(edge_dies)
    summary = StatsSummary(n_parsed=len(wafer.records))
    kept = defaultdict(list)
    excluded_by_group = defaultdict(list)
    for r in wafer.records:
        reason = None
        if r.die_id in edge:
            reason = "edge die"
        elif drop_failures and r.is_open:
            reason = "open"
        elif drop_failures and r.is_short:
            reason = "short"
        if reason:
            summary.excluded.append({"die_id": r.die_id, "kind": r.kind, "area_um2": r.area, "reason": reason})
            excluded_by_group[r.group].append(r.die_id)
            log.info("excluded %s %s %.4g um2: %s", r.die_id, r.kind, r.area, reason)
        else:
            kept[r.group].append(r.rn)
    summary.n_included = sum(len(v) for v in kept.values())
    for group in sorted(set(kept) | set(excluded_by_group)):
        values = kept.get(group, [])
        if len(values) < min_count:
            notice = f"group {group[0]} {group[1]:g} um2 has {len(values)} records (< {min_count}); omitted"
            summary.omitted_groups.append({"kind": group[0], "area_um2": group[1], "count": len(values), "notice": notice})
            log.warning(notice)
            continue
        v = np.asarray(values)
        mean = float(np.mean(v))
        std = float(np.std(v, ddof=1))
        summary.groups[group] = GroupStats(
            group[0], group[1], mean, std, 100.0 * std / mean, len(values), tuple(excluded_by_group.get(group, ()))
        )
    return summary


@dataclass
class YieldReport:
    yield_percent: float
    n_pass: int
    n_total: int
    failures: list

    def to_dict(self) -> dict:
        return {"yield_percent": self.yield_percent, "n_pass": self.n_pass, "n_total": self.n_total, "failures": self.failures}


def yield_report(wafer: WaferMap, expected_rn: dict, tolerance: float, exclude_dies=()) -> YieldReport:
    """Fraction of records that are neither open nor short and sit within
    ``tolerance`` (fractional) of their group's target resistance.

    ``expected_rn`` maps (kind, area) to the target in ohms.
    """
    if tolerance < 0:
        raise ValidationError("tolerance must be nonnegative")
    skip = set(exclude_dies)
    considered = [r for r in wafer.records if r.die_id not in skip]
    missing = sorted({r.group for r in considered} - set(expected_rn))
    if missing:
        raise ValidationError(f"no target resistance for groups: {missing}")
    failures = []
    for r in considered:
        if r.is_open:
            reason = "open"
        elif r.is_short:
            reason = "short"
        else:
            target = expected_rn[r.group]
            dev = abs(r.rn - target) / target
            reason = None if dev <= tolerance else f"rn off target by {100 * dev:.1f}%"
        if reason:
            failures.append({"die_id": r.die_id, "kind": r.kind, "area_um2": r.area, "reason": reason})
    total = len(considered)
    n_pass = total - len(failures)
    return YieldReport(100.0 * n_pass / total if total else 100.0, n_pass, total, failures)


# -- Ambegaokar-Baratoff ----------------------------------------------------------


def rn_to_ej(rn, delta_gap: float = DELTA_AL_GHZ):
    """Josephson energy (GHz) of a junction with normal resistance ``rn`` (ohm)."""
    rn = np.asarray(rn, dtype=float)
    if np.any(rn <= 0):
        raise ValidationError("rn must be positive")
    out = delta_gap * R_K_OHM / (8.0 * rn)
    return float(out) if out.ndim == 0 else out


def ej_to_rn(e_j, delta_gap: float = DELTA_AL_GHZ):
    """Inverse of :func:`rn_to_ej`."""
    e_j = np.asarray(e_j, dtype=float)
    if np.any(e_j <= 0):
        raise ValidationError("e_j must be positive")
    out = delta_gap * R_K_OHM / (8.0 * e_j)
    return float(out) if out.ndim == 0 else out


# -- synthetic wafers ---------------------------------------------------------------


@dataclass(frozen=True)
class StructureSpec:
    kind: str
    area: float
    n_junctions: int
    rn_target: float
    rel_sigma: float


# resistance-area product of about 400 ohm um^2 per junction
DEFAULT_STRUCTURES = tuple(
    [StructureSpec("JJ", a, 1, 400.0 / a, s) for a, s in (
        (0.01, 0.085), (0.02, 0.07), (0.04, 0.06), (0.1, 0.045), (0.2, 0.035), (0.42, 0.028))]
    + [StructureSpec("JJA", a, 100, 100 * 400.0 / a, s) for a, s in ((0.5, 0.03), (1.0, 0.025))]
)


def synth_wafer(
    seed: int = 0,
    n_dies: int = 16,
    structures=DEFAULT_STRUCTURES,
    per_structure: int = 2,
    open_fraction: float = 0.0,
    wafer_label: str = "synthetic",
    pitch_mm: float = 10.0,
) -> WaferMap:
    """Gaussian-scatter wafer map on a square die grid.

    Each die carries ``per_structure`` copies of every structure; the defaults
    give 16 structures per die.  Every die draws from its own keyed stream.
    """
    from .synth import keyed_rng

    structures = tuple(structures)
    side = math.ceil(math.sqrt(n_dies))
    records = []
    for d in range(n_dies):
        rng = keyed_rng(seed, d)
        ix, iy = d % side, d // side
        x = (ix - (side - 1) / 2) * pitch_mm
        y = (iy - (side - 1) / 2) * pitch_mm
        die_id = f"D{d:02d}"
        for s in structures:
            for _ in range(per_structure):
                rn = s.rn_target * (1 + s.rel_sigma * rng.standard_normal())
                is_open = rng.random() < open_fraction
                records.append(
                    WaferRecord(die_id, x, y, s.kind, s.area, s.n_junctions, math.inf if is_open else max(rn, 1e-3), is_open)
                )
    return WaferMap(records, wafer_label)
