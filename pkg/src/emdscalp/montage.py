"""Electrode registry and projection of a montage onto a square grid.

A montage is described by a plain-text mapping file that pins every
electrode name to one cell of an ``n x n`` grid (``NAME,row,col`` records,
``#`` comments).  The packaged ``physionet64_grid11.map`` covers the
64-channel 10-10 montage on an 11 x 11 grid with the central/temporal line
T9..T10 on row 5.  Spatial maps are nonnegative mass distributions over the
same grid and are the objects compared by the transport module.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

__all__ = [
    "Electrode",
    "GridLayout",
    "SpatialMap",
    "load_grid_layout",
    "load_grid_layout_file",
    "default_layout",
    "binary_map",
    "weighted_map",
    "load_spatial_map",
    "save_spatial_map",
]

DEFAULT_LAYOUT_RESOURCE = "physionet64_grid11.map"


@dataclass(frozen=True)
class Electrode:
    """A named electrode pinned to one grid cell."""

    name: str
    row: int
    col: int


@dataclass(frozen=True)
class GridLayout:
    """Deterministic electrode-name -> (row, col) assignment for a montage.

    Immutable after construction; safe to share across workers.  Electrode
    order is the mapping-file order and defines the montage order used for
    deterministic tie-breaking elsewhere.
    """

    n: int
    electrodes: tuple[Electrode, ...]

    @cached_property
    def name_index(self) -> dict[str, Electrode]:
        return {e.name: e for e in self.electrodes}

    @cached_property
    def _folded_index(self) -> dict[str, Electrode]:
        return {e.name.casefold(): e for e in self.electrodes}

    @cached_property
    def names(self) -> tuple[str, ...]:
        return tuple(e.name for e in self.electrodes)

    def resolve(self, name: str) -> str:
        """Return the canonical electrode name for `name`.

        Lookup is exact first, then case-insensitive with trailing dots and
        whitespace stripped (PhysioNet EDF labels pad names with dots).
        Raises KeyError when the electrode is not part of the montage.
        """
        if name in self.name_index:
            return name
        folded = name.strip().rstrip(".").casefold()
        hit = self._folded_index.get(folded)
        if hit is None:
            raise KeyError(f"unknown electrode name: {name!r}")
        return hit.name

    def position(self, name: str) -> tuple[int, int]:
        e = self.name_index[self.resolve(name)]
        return (e.row, e.col)

    def montage_rank(self, name: str) -> int:
        """Position of `name` in montage (mapping-file) order."""
        return self.names.index(self.resolve(name))

    def __contains__(self, name: str) -> bool:
        try:
            self.resolve(name)
        except KeyError:
            return False
        return True


@dataclass(frozen=True, eq=False)
class SpatialMap:
    """Nonnegative mass over an ``n x n`` grid.

    For a binary map of k channels the total mass is k and every positive
    entry is 1.  A zero-total map is representable but rejected by the
    transport module.
    """

    n: int
    mass: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.mass, dtype=float)
        if arr.shape != (self.n, self.n):
            raise ValueError(f"mass must be {self.n}x{self.n}, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("mass contains non-finite entries")
        if np.any(arr < 0):
            raise ValueError("mass entries must be nonnegative")
        arr.setflags(write=False)
        object.__setattr__(self, "mass", arr)

    @property
    def total(self) -> float:
        return float(self.mass.sum())


def load_grid_layout(source: str, n: int | None = None) -> GridLayout:
    """Parse mapping-file content into a validated GridLayout.

    Parameters
    ----------
    source : str
        Mapping text, one ``NAME,row,col`` record per line.  ``#`` starts a
        comment; blank lines are ignored.
    n : int, optional
        Grid order.  Defaults to ``max(row, col) + 1`` over all records.

    Raises
    ------
    ValueError
        On malformed records, duplicate names, duplicate cells, or
        coordinates outside the grid.
    """
    electrodes: list[Electrode] = []
    seen_names: set[str] = set()
    seen_cells: set[tuple[int, int]] = set()
    for lineno, raw_line in enumerate(source.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3 or not parts[0]:
            raise ValueError(f"line {lineno}: expected NAME,row,col, got {raw_line!r}")
        name = parts[0]
        try:
            row, col = int(parts[1]), int(parts[2])
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer coordinate in {raw_line!r}") from None
        if row < 0 or col < 0:
            raise ValueError(f"line {lineno}: negative coordinate for {name}")
        if name in seen_names:
            raise ValueError(f"line {lineno}: duplicate electrode name {name!r}")
        if (row, col) in seen_cells:
            raise ValueError(f"line {lineno}: cell ({row}, {col}) already occupied")
        seen_names.add(name)
        seen_cells.add((row, col))
        electrodes.append(Electrode(name, row, col))
    if not electrodes:
        raise ValueError("mapping contains no electrodes")
    required = max(max(e.row for e in electrodes), max(e.col for e in electrodes)) + 1
    if n is None:
        n = required
    elif n < required:
        raise ValueError(f"grid order {n} too small, coordinates require {required}")
    return GridLayout(n=n, electrodes=tuple(electrodes))


def load_grid_layout_file(path: str | Path, n: int | None = None) -> GridLayout:
    return load_grid_layout(Path(path).read_text(encoding="utf-8"), n=n)


@lru_cache(maxsize=1)
def default_layout() -> GridLayout:
    """The packaged 64-channel, 11 x 11 layout."""
    text = resources.files("emdscalp.data").joinpath(DEFAULT_LAYOUT_RESOURCE).read_text("utf-8")
    return load_grid_layout(text)


def binary_map(channels: Iterable[str], layout: GridLayout) -> SpatialMap:
    """Mark each named electrode's cell with 1, everything else 0.

    Total mass equals the number of channels.  Unknown names raise KeyError.
    """
    mass = np.zeros((layout.n, layout.n))
    for name in channels:
        row, col = layout.position(name)
        mass[row, col] = 1.0
    return SpatialMap(layout.n, mass)


def weighted_map(weights: Mapping[str, float], layout: GridLayout) -> SpatialMap:
    """Place each electrode's weight at its cell; unlisted electrodes get 0."""
    mass = np.zeros((layout.n, layout.n))
    for name, w in weights.items():
        w = float(w)
        if not np.isfinite(w):
            raise ValueError(f"non-finite weight for {name!r}")
        if w < 0:
            raise ValueError(f"negative weight for {name!r}: {w}")
        row, col = layout.position(name)
        mass[row, col] = w
    return SpatialMap(layout.n, mass)


def save_spatial_map(smap: SpatialMap, path: str | Path) -> None:
    """Write a map as CSV: n rows x n columns of decimal masses."""
    lines = [",".join(repr(float(v)) for v in row) for row in smap.mass]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_spatial_map(path: str | Path) -> SpatialMap:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append([float(v) for v in line.split(",")])
    arr = np.array(rows, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ValueError(f"spatial map file must be square, got {arr.shape}")
    return SpatialMap(arr.shape[0], arr)
