"""Raw geodata ingestion: the region grid, land-cover class grid, POI table and sparse labels.

File formats (all plain text, see README):
  * grid spec      -- ``key = value`` lines (origin_lon, origin_lat, n_cols, n_rows, cell_km)
  * land cover     -- header ``LANDCOVER <pixel_rows> <pixel_cols> <n_classes>`` then one
                      whitespace-separated line of integer class codes per pixel row
  * POIs           -- CSV ``lon,lat,category`` with header; category is an integer index or a
                      name resolved through a categories manifest (one name per line)
  * labels         -- CSV ``x_r,y_r,value`` with header

Conventions: region ids are ``(x, y)`` integer cell coordinates, ``(0, 0)`` at the grid
origin (south-west corner), x east, y north. Pixel row 0 of a land-cover file is the y=0
row. Points exactly on a cell boundary belong to the lower-left cell (floor assignment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numpy as np

# Equirectangular degree->km factors; adequate at city scale.
KM_PER_DEG_LAT = 110.574
KM_PER_DEG_LON_EQUATOR = 111.320

DEFAULT_N_LANDCOVER_CLASSES = 11

Region = tuple[int, int]


class GeoDataError(ValueError):
    """An input file or value violates the geodata contracts."""


@dataclass(frozen=True)
class GridSpec:
    """Rectangular grid of square cells anchored at (origin_lon, origin_lat)."""

    origin_lon: float
    origin_lat: float
    n_cols: int
    n_rows: int
    cell_km: float = 1.0

    def __post_init__(self) -> None:
        if self.n_cols < 1 or self.n_rows < 1:
            raise GeoDataError(f"grid must be at least 1x1, got {self.n_cols}x{self.n_rows}")
        if not (self.cell_km > 0):
            raise GeoDataError(f"cell_km must be positive, got {self.cell_km}")
        if not (math.isfinite(self.origin_lon) and math.isfinite(self.origin_lat)):
            raise GeoDataError("grid origin must be finite")

    @property
    def n_regions(self) -> int:
        return self.n_cols * self.n_rows

    def km_per_degree(self) -> tuple[float, float]:
        """(km per degree lon, km per degree lat) at the grid origin."""
        return (KM_PER_DEG_LON_EQUATOR * math.cos(math.radians(self.origin_lat)),
                KM_PER_DEG_LAT)

    def contains(self, region: Region) -> bool:
        x, y = region
        return 0 <= x < self.n_cols and 0 <= y < self.n_rows

    def region_index(self, region: Region) -> int:
        """Canonical row-major index: y * n_cols + x."""
        if not self.contains(region):
            raise GeoDataError(f"region {region} outside {self.n_cols}x{self.n_rows} grid")
        x, y = region
        return y * self.n_cols + x

    def regions(self) -> Iterator[Region]:
        """All region ids in canonical row-major order."""
        for y in range(self.n_rows):
            for x in range(self.n_cols):
                yield (x, y)

    def cell_center_lonlat(self, region: Region) -> tuple[float, float]:
        if not self.contains(region):
            raise GeoDataError(f"region {region} outside {self.n_cols}x{self.n_rows} grid")
        x, y = region
        km_lon, km_lat = self.km_per_degree()
        return (self.origin_lon + (x + 0.5) * self.cell_km / km_lon,
                self.origin_lat + (y + 0.5) * self.cell_km / km_lat)


def region_of(lon: float, lat: float, grid: GridSpec) -> Optional[Region]:
    """Map a lon/lat point to its region id, or None if outside the grid.

    The offset from the origin is converted to km with the per-axis factors and floored
    by the cell size, so boundary points land in the lower-left cell.
    """
    if not (math.isfinite(lon) and math.isfinite(lat)):
        raise GeoDataError(f"coordinates must be finite, got ({lon}, {lat})")
    km_lon, km_lat = grid.km_per_degree()
    x = math.floor((lon - grid.origin_lon) * km_lon / grid.cell_km)
    y = math.floor((lat - grid.origin_lat) * km_lat / grid.cell_km)
    if 0 <= x < grid.n_cols and 0 <= y < grid.n_rows:
        return (x, y)
    return None


@dataclass(frozen=True)
class LandCoverGrid:
    """Per-pixel land-cover class codes covering the grid at a fixed resolution."""

    grid: GridSpec
    pixels_per_cell: int
    classes: np.ndarray           # (n_rows*ppc, n_cols*ppc) int codes in [0, n_classes)
    n_classes: int = DEFAULT_N_LANDCOVER_CLASSES

    def __post_init__(self) -> None:
        expect = (self.grid.n_rows * self.pixels_per_cell,
                  self.grid.n_cols * self.pixels_per_cell)
        if self.classes.shape != expect:
            raise GeoDataError(
                f"class grid shape {self.classes.shape} does not match grid {expect}")
        if self.classes.size and (self.classes.min() < 0
                                  or self.classes.max() >= self.n_classes):
            raise GeoDataError("class code out of range")
        self.classes.setflags(write=False)

    def region_pixels(self, region: Region) -> np.ndarray:
        """View of the pixel block covering one region."""
        x, y = region
        p = self.pixels_per_cell
        return self.classes[y * p:(y + 1) * p, x * p:(x + 1) * p]


@dataclass(frozen=True)
class PoiRecord:
    """A point of interest: lon/lat coordinates and a societal category index."""

    x: float
    y: float
    c: int


@dataclass(frozen=True)
class LabelSet:
    """Sparse ground-truth indicator values keyed by region id."""

    entries: tuple[tuple[Region, float], ...]
    indicator_name: str = "indicator"

    def __post_init__(self) -> None:
        seen = set()
        for region, value in self.entries:
            if region in seen:
                raise GeoDataError(f"duplicate region {region} in label set")
            seen.add(region)
            if not math.isfinite(value):
                raise GeoDataError(f"non-finite label value for region {region}")

    def __len__(self) -> int:
        return len(self.entries)

    def as_dict(self) -> dict[Region, float]:
        return dict(self.entries)

    def regions(self) -> list[Region]:
        return [region for region, _ in self.entries]


# ---------------------------------------------------------------------------
# loaders / writers
# ---------------------------------------------------------------------------

def load_gridspec(path: str) -> GridSpec:
    values: dict[str, str] = {}
    for raw in _data_lines(path):
        if "=" in raw:
            key, _, val = raw.partition("=")
        else:
            parts = raw.split(None, 1)
            if len(parts) != 2:
                raise GeoDataError(f"{path}: cannot parse grid spec line {raw!r}")
            key, val = parts
        values[key.strip()] = val.strip()
    try:
        return GridSpec(origin_lon=float(values["origin_lon"]),
                        origin_lat=float(values["origin_lat"]),
                        n_cols=int(values["n_cols"]),
                        n_rows=int(values["n_rows"]),
                        cell_km=float(values.get("cell_km", "1.0")))
    except KeyError as exc:
        raise GeoDataError(f"{path}: missing grid spec key {exc}") from exc
    except ValueError as exc:
        raise GeoDataError(f"{path}: bad grid spec value ({exc})") from exc


def save_gridspec(grid: GridSpec, path: str,
                  header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write(f"origin_lon = {grid.origin_lon!r}\n")
        fh.write(f"origin_lat = {grid.origin_lat!r}\n")
        fh.write(f"n_cols = {grid.n_cols}\n")
        fh.write(f"n_rows = {grid.n_rows}\n")
        fh.write(f"cell_km = {grid.cell_km!r}\n")


def load_landcover(path: str, grid: GridSpec) -> LandCoverGrid:
    """Parse a land-cover class grid and validate it against the region grid."""
    with open(path, "r", encoding="utf-8") as fh:
        header_line = ""
        while True:
            header_line = fh.readline()
            if not header_line or not header_line.lstrip().startswith("#"):
                break
        header = header_line.split()
        if len(header) != 4 or header[0] != "LANDCOVER":
            raise GeoDataError(f"{path}: expected header 'LANDCOVER rows cols classes'")
        try:
            pixel_rows, pixel_cols, n_classes = (int(v) for v in header[1:])
        except ValueError as exc:
            raise GeoDataError(f"{path}: non-integer header field ({exc})") from exc
        rows = []
        for i, line in enumerate(fh):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                row = np.array(line.split(), dtype=np.int64)
            except ValueError as exc:
                raise GeoDataError(f"{path}: bad pixel row {i}: {exc}") from exc
            if row.size != pixel_cols:
                raise GeoDataError(
                    f"{path}: pixel row {i} has {row.size} codes, expected {pixel_cols}")
            rows.append(row)
    if len(rows) != pixel_rows:
        raise GeoDataError(f"{path}: found {len(rows)} pixel rows, header says {pixel_rows}")
    classes = np.vstack(rows) if rows else np.zeros((0, pixel_cols), dtype=np.int64)
    if classes.size and (classes.min() < 0 or classes.max() >= n_classes):
        raise GeoDataError(f"{path}: class code out of range [0, {n_classes})")
    if pixel_rows % grid.n_rows or pixel_cols % grid.n_cols:
        raise GeoDataError(
            f"{path}: pixel grid {pixel_rows}x{pixel_cols} does not tile "
            f"{grid.n_rows}x{grid.n_cols} regions")
    ppc_y = pixel_rows // grid.n_rows
    ppc_x = pixel_cols // grid.n_cols
    if ppc_y != ppc_x:
        raise GeoDataError(f"{path}: pixels per cell differ by axis ({ppc_x} vs {ppc_y})")
    return LandCoverGrid(grid=grid, pixels_per_cell=ppc_x, classes=classes,
                         n_classes=n_classes)


def save_landcover(lc: LandCoverGrid, path: str,
                   header_comments: Sequence[str] = ()) -> None:
    rows, cols = lc.classes.shape
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write(f"LANDCOVER {rows} {cols} {lc.n_classes}\n")
        for row in lc.classes:
            fh.write(" ".join(str(int(v)) for v in row))
            fh.write("\n")


def load_categories(path: str) -> list[str]:
    """Category manifest: one name per line, line number = category index."""
    names = [line for line in _data_lines(path)]
    if len(set(names)) != len(names):
        raise GeoDataError(f"{path}: duplicate category names")
    return names


def load_pois(path: str, categories: Optional[Sequence[str]] = None,
              n_categories: Optional[int] = None) -> list[PoiRecord]:
    """Parse a POI CSV. Categories may be integer indices or manifest names."""
    if categories is not None:
        index = {name: i for i, name in enumerate(categories)}
        if n_categories is None:
            n_categories = len(categories)
    else:
        index = {}
    records: list[PoiRecord] = []
    for i, parts in _csv_rows(path, 3, "lon,lat,category"):
        try:
            lon, lat = float(parts[0]), float(parts[1])
        except ValueError as exc:
            raise GeoDataError(f"{path}: row {i}: non-numeric coordinate ({exc})") from exc
        if not (math.isfinite(lon) and math.isfinite(lat)):
            raise GeoDataError(f"{path}: row {i}: non-finite coordinate")
        raw_cat = parts[2].strip()
        if raw_cat in index:
            cat = index[raw_cat]
        else:
            try:
                cat = int(raw_cat)
            except ValueError:
                raise GeoDataError(f"{path}: row {i}: unknown category {raw_cat!r}") from None
        if cat < 0 or (n_categories is not None and cat >= n_categories):
            raise GeoDataError(f"{path}: row {i}: category index {cat} out of range")
        records.append(PoiRecord(x=lon, y=lat, c=cat))
    return records


def save_pois(pois: Sequence[PoiRecord], path: str,
              header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("lon,lat,category\n")
        for p in pois:
            fh.write(f"{p.x!r},{p.y!r},{p.c}\n")


def load_labels(path: str, grid: GridSpec, indicator_name: str = "indicator") -> LabelSet:
    entries: list[tuple[Region, float]] = []
    seen: set[Region] = set()
    for i, parts in _csv_rows(path, 3, "x_r,y_r,value"):
        try:
            region = (int(parts[0]), int(parts[1]))
            value = float(parts[2])
        except ValueError as exc:
            raise GeoDataError(f"{path}: row {i}: {exc}") from exc
        if not grid.contains(region):
            raise GeoDataError(f"{path}: row {i}: region {region} outside grid")
        if region in seen:
            raise GeoDataError(f"{path}: row {i}: duplicate region {region}")
        if not math.isfinite(value):
            raise GeoDataError(f"{path}: row {i}: non-finite value")
        seen.add(region)
        entries.append((region, value))
    return LabelSet(entries=tuple(entries), indicator_name=indicator_name)


def save_labels(labels: LabelSet, path: str,
                header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("x_r,y_r,value\n")
        for (x, y), value in labels.entries:
            fh.write(f"{x},{y},{value!r}\n")


def _data_lines(path: str) -> Iterator[str]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                yield line


def _csv_rows(path: str, n_fields: int, header: str) -> Iterator[tuple[int, list[str]]]:
    """Yield (row_number, fields) for a simple headed CSV, skipping blank
    lines and '#' comments (including any before the header)."""
    with open(path, "r", encoding="utf-8") as fh:
        saw_header = False
        for i, line in enumerate(fh):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not saw_header:
                saw_header = True
                continue
            parts = line.split(",")
            if len(parts) != n_fields:
                raise GeoDataError(
                    f"{path}: row {i}: expected {n_fields} fields ({header}), got {len(parts)}")
            yield i, parts
        if not saw_header:
            raise GeoDataError(f"{path}: empty file, expected header '{header}'")
