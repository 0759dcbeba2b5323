"""Point patterns in box windows, their CSV/JSON file formats, and the latent
line/parent structure of simulated line cluster patterns."""
from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import BoxWindow, DirectedLine

AXIS_NAMES = ("x", "y", "z")


class PatternFormatError(ValueError):
    """A pattern file could not be parsed; carries the offending line and column."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class PointOutsideWindowError(ValueError):
    def __init__(self, indices, points):
        self.indices = list(indices)
        shown = ", ".join(f"#{i}: {tuple(p)}" for i, p in zip(self.indices[:10], points[:10]))
        more = "" if len(self.indices) <= 10 else f" and {len(self.indices) - 10} more"
        super().__init__(f"{len(self.indices)} point(s) outside the window: {shown}{more}")


@dataclass(frozen=True)
class PointPattern:
    """Finite point set observed in a box window (boundary points included)."""

    points: np.ndarray
    window: BoxWindow

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, self.window.dim)
        if pts.ndim != 2 or pts.shape[1] != self.window.dim:
            raise ValueError(
                f"points must have shape (n, {self.window.dim}), got {pts.shape}"
            )
        inside = self.window.contains(pts)
        if not np.all(inside):
            bad = np.flatnonzero(~inside)
            raise PointOutsideWindowError(bad, pts[bad])
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.window.dim

    @property
    def intensity(self) -> float:
        return self.n / self.window.volume

    def __len__(self):
        return self.n


def translation_overlap(w: BoxWindow, shift) -> np.ndarray:
    """``|W ∩ (W + shift)|`` for a box: the product of ``max(0, a_i - |shift_i|)``."""
    shift = np.asarray(shift, dtype=float)
    gaps = np.maximum(w.sides - np.abs(shift), 0.0)
    out = gaps[..., 0]
    for i in range(1, w.dim):
        out = out * gaps[..., i]
    return out


def _fmt(v: float) -> str:
    return repr(float(v))


def format_window_comment(w: BoxWindow) -> str:
    bounds = " ".join(f"{_fmt(lo)} {_fmt(hi)}" for lo, hi in zip(w.lower, w.upper))
    return f"# window: {bounds}"


def write_pattern(pattern: PointPattern, path, sidecar: bool = False) -> None:
    """Write ``pattern`` as CSV with an inline window comment.

    Coordinates use ``repr`` (shortest round-tripping decimal), so a
    subsequent :func:`read_pattern` restores them bit for bit.  With
    ``sidecar=True`` a ``<path>.window.json`` descriptor is written as well.
    """
    path = Path(path)
    buf = io.StringIO()
    buf.write(format_window_comment(pattern.window) + "\n")
    buf.write(",".join(AXIS_NAMES[: pattern.dim]) + "\n")
    for p in pattern.points:
        buf.write(",".join(_fmt(v) for v in p) + "\n")
    path.write_text(buf.getvalue())
    if sidecar:
        write_window(pattern.window, sidecar_path(path))


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".window.json")


def write_window(w: BoxWindow, path) -> None:
    Path(path).write_text(json.dumps(w.to_dict(), indent=2) + "\n")


def read_window(path) -> BoxWindow:
    try:
        d = json.loads(Path(path).read_text())
        return BoxWindow.from_dict(d)
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise PatternFormatError(f"invalid window descriptor {path}: {exc}") from exc


def _parse_window_comment(text: str, lineno: int) -> BoxWindow:
    fields = text.split(":", 1)[1].split()
    try:
        vals = [float(v) for v in fields]
    except ValueError as exc:
        raise PatternFormatError(f"bad window comment: {exc}", line=lineno) from exc
    if len(vals) not in (4, 6):
        raise PatternFormatError("window comment needs 4 or 6 numbers", line=lineno)
    try:
        return BoxWindow(vals[0::2], vals[1::2])
    except ValueError as exc:
        raise PatternFormatError(str(exc), line=lineno) from exc


def read_pattern(path, window: BoxWindow | None = None) -> PointPattern:
    """Read a CSV point pattern.

    The window is taken from, in order of preference, the ``window``
    argument, a ``<path>.window.json`` sidecar, or a ``# window: lo1 hi1 ...``
    comment line.  The header row names the axes (``x,y`` or ``x,y,z``).
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise PatternFormatError(f"cannot read {path}: {exc}") from exc
    if window is None and sidecar_path(path).exists():
        window = read_window(sidecar_path(path))

    header = None
    rows: list[list[float]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line[1:].strip().lower().startswith("window") and window is None:
                window = _parse_window_comment(line, lineno)
            continue
        cells = next(csv.reader([line]))
        if header is None:
            header = [c.strip().lower() for c in cells]
            if header not in (list(AXIS_NAMES[:2]), list(AXIS_NAMES[:3])):
                raise PatternFormatError(f"header must be 'x,y' or 'x,y,z', got {line!r}", line=lineno)
            continue
        if len(cells) != len(header):
            raise PatternFormatError(
                f"expected {len(header)} fields, got {len(cells)}", line=lineno, column=min(len(cells), len(header)) + 1
            )
        row = []
        for col, c in enumerate(cells, start=1):
            try:
                v = float(c)
            except ValueError:
                raise PatternFormatError(f"not a number: {c!r}", line=lineno, column=col) from None
            if not np.isfinite(v):
                raise PatternFormatError(f"non-finite coordinate {c!r}", line=lineno, column=col)
            row.append(v)
        rows.append(row)
    if header is None:
        raise PatternFormatError("missing header row")
    if window is None:
        raise PatternFormatError("no window given: pass one, add a .window.json sidecar or a '# window:' comment")
    if window.dim != len(header):
        raise PatternFormatError(f"window has dimension {window.dim} but header names {len(header)} axes")
    pts = np.array(rows, dtype=float).reshape(len(rows), len(header))
    counts = {}
    for p in map(tuple, pts):
        counts[p] = counts.get(p, 0) + 1
    dups = sum(c - 1 for c in counts.values() if c > 1)
    if dups:
        warnings.warn(f"{path}: {dups} duplicated point(s); they are kept and counted as distinct", stacklevel=2)
    return PointPattern(pts, window)


@dataclass
class LatentRealization:
    """A simulated line cluster pattern together with its hidden structure.

    ``parents[i]`` holds the on-line points of ``lines[i]`` and
    ``displaced[i]`` their displaced positions (row for row); ``pattern``
    keeps the displaced points that fall in the observation window.
    """

    lines: list[DirectedLine]
    parents: list[np.ndarray]
    displaced: list[np.ndarray]
    pattern: PointPattern
    window_ext: BoxWindow | None = None
    links: list[tuple[int, int]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(
            {
                "window": self.pattern.window.to_dict(),
                "window_ext": None if self.window_ext is None else self.window_ext.to_dict(),
                "lines": [{"y": l.anchor.tolist(), "u": l.direction.tolist()} for l in self.lines],
                "parents": [p.tolist() for p in self.parents],
                "displaced": [x.tolist() for x in self.displaced],
                "links": [list(t) for t in self.links],
            },
            indent=1,
        )
