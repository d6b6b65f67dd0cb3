"""Seeded synthetic geospace generator.

Builds a small world on a rectangular grid: archetype patches laid out by a
Voronoi partition (e.g. water / green / residential / commercial), a per-pixel
land-cover raster sampled from each archetype's class mixture, POIs drawn from
per-archetype Poisson rates, and a full-coverage indicator field

    y(r) = w . e_env(r) + v . e_soc(r) + smooth(r) + jump * side(r) + noise(r)

where e_env / e_soc are the *realized* region features recomputed from the
emitted raster and POI table, smooth is a low-frequency sinusoidal field, and
side flags which side of a barrier polyline (a "river") the cell center lies
on. Every per-region component is recorded in a ledger so tests can rebuild y
exactly and attribute any prediction error to a known source.

Generation is a pure function of the config (seed included): the rng is
consumed in a fixed documented order (patch seeds, archetypes, pixels, POI
counts, POI positions, smooth field, noise).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geodata import (GeoDataError, GridSpec, LabelSet, LandCoverGrid, PoiRecord)
from .features import featurize_all


def _default_class_mix(n_archetypes: int, n_classes: int) -> np.ndarray:
    """One mixture row per archetype, peaked on a distinct pair of classes."""
    mix = np.full((n_archetypes, n_classes), 0.4)
    for a in range(n_archetypes):
        mix[a, (2 * a) % n_classes] += 6.0
        mix[a, (2 * a + 1) % n_classes] += 2.0
    return mix / mix.sum(axis=1, keepdims=True)


def _default_poi_rates(n_archetypes: int, n_categories: int) -> np.ndarray:
    """Mean POIs per cell per category; archetype 0 is near-empty ("water")."""
    rates = np.zeros((n_archetypes, n_categories))
    for a in range(1, n_archetypes):
        for k in range(n_categories):
            shift = (k - a * n_categories / n_archetypes) % n_categories
            rates[a, k] = 3.0 * math.exp(-shift / 1.2)
    rates[0, :] = 0.02
    return rates


def _default_weights(n: int, scale: float) -> np.ndarray:
    return scale * np.cos(1.0 + np.arange(n, dtype=np.float64))


@dataclass(frozen=True)
class SynthConfig:
    n_cols: int = 16
    n_rows: int = 16
    pixels_per_cell: int = 4
    n_classes: int = 11
    n_categories: int = 6
    n_archetypes: int = 4
    n_patches: int = 24                      # Voronoi seed count
    class_mix: Optional[np.ndarray] = None   # (A, J) rows sum to 1
    poi_rates: Optional[np.ndarray] = None   # (A, K) Poisson means per cell
    env_weights: Optional[np.ndarray] = None  # (J,)
    soc_weights: Optional[np.ndarray] = None  # (K,)
    smooth_amplitude: float = 0.5
    smooth_waves: int = 3
    jump: float = 2.0
    barrier: Optional[tuple[tuple[float, float], ...]] = None  # (x, y) grid units
    noise_sigma: float = 0.1
    origin_lon: float = 0.0
    origin_lat: float = 0.0
    cell_km: float = 1.0
    indicator_name: str = "indicator"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_cols < 2 or self.n_rows < 2:
            raise GeoDataError("synthetic grid must be at least 2x2")
        if self.noise_sigma < 0:
            raise GeoDataError("noise sigma must be >= 0")
        if self.n_archetypes < 1 or self.n_patches < 1:
            raise GeoDataError("need at least one archetype and one patch")

    def resolved(self) -> "_Resolved":
        a, j, k = self.n_archetypes, self.n_classes, self.n_categories
        mix = self.class_mix if self.class_mix is not None else _default_class_mix(a, j)
        rates = self.poi_rates if self.poi_rates is not None else _default_poi_rates(a, k)
        w = self.env_weights if self.env_weights is not None else _default_weights(j, 2.0)
        v = self.soc_weights if self.soc_weights is not None else _default_weights(k, 0.6)
        mix = np.asarray(mix, dtype=np.float64)
        rates = np.asarray(rates, dtype=np.float64)
        w = np.asarray(w, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if mix.shape != (a, j) or np.any(mix < 0) or \
                not np.allclose(mix.sum(axis=1), 1.0, atol=1e-9):
            raise GeoDataError("class_mix must be (A, J) rows of proportions")
        if rates.shape != (a, k) or np.any(rates < 0):
            raise GeoDataError("poi_rates must be (A, K) non-negative")
        if w.shape != (j,) or v.shape != (k,):
            raise GeoDataError("weight vector shapes must match class/category counts")
        barrier = self.barrier
        if barrier is None:
            # Wavy near-vertical line through the middle of the grid.
            mid = self.n_cols / 2.0
            ys = np.linspace(0.0, float(self.n_rows), 9)
            barrier = tuple((mid + 1.5 * math.sin(2.0 * math.pi * y / self.n_rows), y)
                            for y in ys)
        if len(barrier) < 2:
            raise GeoDataError("barrier polyline needs at least 2 points")
        return _Resolved(mix, rates, w, v, tuple(barrier))


@dataclass(frozen=True)
class _Resolved:
    class_mix: np.ndarray
    poi_rates: np.ndarray
    env_weights: np.ndarray
    soc_weights: np.ndarray
    barrier: tuple[tuple[float, float], ...]


def poisson_sample(rng: np.random.Generator, lam: float) -> int:
    """Poisson draw by inversion (sequential search), exact and reproducible."""
    if lam < 0:
        raise GeoDataError("Poisson rate must be >= 0")
    if lam == 0.0:
        return 0
    u = rng.random()
    p = math.exp(-lam)
    cum = p
    k = 0
    while u > cum:
        k += 1
        p *= lam / k
        cum += p
        if k > 10_000_000:  # pragma: no cover - guards pathological rates
            raise GeoDataError(f"Poisson sampling did not terminate for rate {lam}")
    return k


def barrier_side(x: float, y: float,
                 barrier: Sequence[tuple[float, float]]) -> int:
    """1 when (x, y) lies east of the polyline at height y, else 0.

    The polyline is given as (x, y) vertices ordered by y; x is interpolated
    piecewise-linearly, clamping y outside the covered span.
    """
    pts = sorted(barrier, key=lambda p: p[1])
    ys = [p[1] for p in pts]
    xs = [p[0] for p in pts]
    bx = float(np.interp(y, ys, xs))
    return 1 if x > bx else 0


def _smooth_field(rng: np.random.Generator, centers: np.ndarray,
                  amplitude: float, n_waves: int, span: float) -> np.ndarray:
    """Sum of random low-frequency plane waves, scaled to the given amplitude."""
    if amplitude == 0.0 or n_waves == 0:
        return np.zeros(len(centers))
    total = np.zeros(len(centers))
    for _ in range(n_waves):
        angle = rng.random() * 2.0 * math.pi
        wavelength = span * (0.3 + 0.5 * rng.random())
        phase = rng.random() * 2.0 * math.pi
        k = 2.0 * math.pi / wavelength
        proj = centers[:, 0] * math.cos(angle) + centers[:, 1] * math.sin(angle)
        total += np.sin(k * proj + phase)
    return amplitude * total / math.sqrt(n_waves)


def generate(config: SynthConfig) -> tuple[LandCoverGrid, list[PoiRecord],
                                           LabelSet, dict]:
    """Generate (land cover, POIs, full-coverage labels, ground-truth ledger)."""
    res = config.resolved()
    rng = np.random.default_rng(config.seed)
    grid = GridSpec(origin_lon=config.origin_lon, origin_lat=config.origin_lat,
                    n_cols=config.n_cols, n_rows=config.n_rows,
                    cell_km=config.cell_km)
    n = grid.n_regions

    # 1) Voronoi patches -> archetype per region (seeded in cell-center units).
    patch_xy = rng.random((config.n_patches, 2)) * [config.n_cols, config.n_rows]
    patch_arch = rng.integers(0, config.n_archetypes, size=config.n_patches)
    centers = np.array([(x + 0.5, y + 0.5) for x, y in grid.regions()])
    d2 = ((centers[:, None, :] - patch_xy[None, :, :]) ** 2).sum(axis=2)
    archetype = patch_arch[np.argmin(d2, axis=1)]

    # 2) Land-cover pixels per region from the archetype's class mixture.
    p = config.pixels_per_cell
    classes = np.zeros((grid.n_rows * p, grid.n_cols * p), dtype=np.int64)
    for idx, (x, y) in enumerate(grid.regions()):
        block = rng.choice(config.n_classes, size=(p, p),
                           p=res.class_mix[archetype[idx]])
        classes[y * p:(y + 1) * p, x * p:(x + 1) * p] = block
    lc = LandCoverGrid(grid=grid, pixels_per_cell=p, classes=classes,
                       n_classes=config.n_classes)

    # 3) POIs: per-cell per-category Poisson counts, uniform placement in-cell.
    km_lon, km_lat = grid.km_per_degree()
    pois: list[PoiRecord] = []
    for idx, (x, y) in enumerate(grid.regions()):
        for k in range(config.n_categories):
            count = poisson_sample(rng, res.poi_rates[archetype[idx], k])
            for _ in range(count):
                u, w_ = rng.random(), rng.random()
                lon = config.origin_lon + (x + u) * config.cell_km / km_lon
                lat = config.origin_lat + (y + w_) * config.cell_km / km_lat
                pois.append(PoiRecord(x=lon, y=lat, c=k))

    # 4) Realized features close the loop: y is linear in what models can see.
    feats = featurize_all(grid, lc, pois, n_categories=config.n_categories,
                          warn=False)
    env_term = np.array([float(res.env_weights @ f.e_env) for f in feats])
    soc_term = np.array([float(res.soc_weights @ f.e_soc) for f in feats])

    # 5) Smooth field, barrier jump, noise.
    span = float(max(config.n_cols, config.n_rows))
    smooth = _smooth_field(rng, centers, config.smooth_amplitude,
                           config.smooth_waves, span)
    side = np.array([barrier_side(cx, cy, res.barrier) for cx, cy in centers],
                    dtype=np.int64)
    jump_term = config.jump * side.astype(np.float64)
    noise = (rng.standard_normal(n) * config.noise_sigma
             if config.noise_sigma > 0 else np.zeros(n))

    y = env_term + soc_term + smooth + jump_term + noise
    entries = tuple((region, float(y[grid.region_index(region)]))
                    for region in grid.regions())
    labels = LabelSet(entries=entries, indicator_name=config.indicator_name)

    ledger = {
        "seed": config.seed,
        "grid": {"n_cols": config.n_cols, "n_rows": config.n_rows,
                 "cell_km": config.cell_km, "origin_lon": config.origin_lon,
                 "origin_lat": config.origin_lat},
        "n_classes": config.n_classes,
        "n_categories": config.n_categories,
        "pixels_per_cell": config.pixels_per_cell,
        "env_weights": res.env_weights.tolist(),
        "soc_weights": res.soc_weights.tolist(),
        "jump": config.jump,
        "noise_sigma": config.noise_sigma,
        "barrier": [list(pt) for pt in res.barrier],
        "archetype_of_region": archetype.tolist(),
        "patch_centers": patch_xy.tolist(),
        "patch_archetypes": patch_arch.tolist(),
        "poi_count_total": len(pois),
        "components": {
            "env_term": env_term.tolist(),
            "soc_term": soc_term.tolist(),
            "smooth": smooth.tolist(),
            "jump_term": jump_term.tolist(),
            "noise": noise.tolist(),
        },
        "barrier_side": side.tolist(),
        "labels": [float(v) for v in y],
    }
    return lc, pois, labels, ledger
