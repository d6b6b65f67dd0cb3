"""Masked-ratio experiment protocol: splits, metrics, runners, report files.

The protocol masks a fraction M of the labeled regions as the test set and
splits the remaining labels 80/20 into train and validation. Models fit on
train (validating on validation), baselines fit on all available samples, and
every reported metric is computed on the masked set only.

Reports and prediction files are written with ``repr`` floats and no
timestamps, so a rerun with the same seed produces byte-identical artifacts.
Runtime is tracked on the in-memory report but deliberately kept out of the
files for that reason.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .geodata import (GeoDataError, GridSpec, LabelSet, LandCoverGrid,
                      PoiRecord, Region)
from .features import featurize_all
from .hetgraph import build_graph
from . import baselines
from .model import (HgnnConfig, SslConfig, LogRow, backbone_checksum,
                    finetune_head, predict_all, predict_from_embeddings,
                    pretrain_contrastive, train_end_to_end)

METHODS = ("geohg", "geohg-ssl", "idw", "uk")


@dataclass(frozen=True)
class EvalSplit:
    """Disjoint partition of the labeled regions for one experiment."""

    masked: tuple[Region, ...]
    train: tuple[Region, ...]
    validation: tuple[Region, ...]
    masked_ratio: float
    seed: int

    def __post_init__(self) -> None:
        groups = (set(self.masked), set(self.train), set(self.validation))
        total = sum(len(g) for g in groups)
        if len(set().union(*groups)) != total:
            raise ValueError("split groups overlap")

    def available(self) -> tuple[Region, ...]:
        return self.train + self.validation


def make_split(labels: LabelSet, masked_ratio: float, seed: int) -> EvalSplit:
    """Uniform random mask of round(M*N) regions; available split 80/20."""
    if not 0.0 < masked_ratio < 1.0:
        raise ValueError(f"masked ratio must be in (0, 1), got {masked_ratio}")
    n = len(labels)
    n_masked = round(masked_ratio * n)
    n_avail = n - n_masked
    n_train = round(0.8 * n_avail)
    n_val = n_avail - n_train
    if n_masked < 1:
        raise ValueError(f"masked set empty ({n} labels at ratio {masked_ratio})")
    if n_train < 1 or n_val < 1:
        raise ValueError(
            f"too few labels: {n} at ratio {masked_ratio} leaves "
            f"{n_train} train / {n_val} validation")
    regions = labels.regions()
    perm = np.random.default_rng(seed).permutation(n)
    picked = [regions[i] for i in perm]
    return EvalSplit(masked=tuple(picked[:n_masked]),
                     train=tuple(picked[n_masked:n_masked + n_train]),
                     validation=tuple(picked[n_masked + n_train:]),
                     masked_ratio=masked_ratio, seed=seed)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _check_pair(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[np.ndarray,
                                                                 np.ndarray]:
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size == 0:
        raise ValueError(f"metric inputs must be equal-length non-empty "
                         f"vectors, got {y_true.shape} and {y_pred.shape}")
    return y_true, y_pred


def mae(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.abs(y_pred - y_true).mean())


def rmse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    y_true, y_pred = _check_pair(y_true, y_pred)
    return float(np.sqrt(((y_pred - y_true) ** 2).mean()))


def r2(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """1 - SS_res/SS_tot with the mean of y_true as baseline.

    Constant y_true makes the formula divide by zero; returns NaN then (the
    caller flags it) rather than pretending a 0 or 1.
    """
    y_true, y_pred = _check_pair(y_true, y_pred)
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        warnings.warn("R^2 undefined on constant ground truth", stacklevel=2)
        return float("nan")
    ss_res = float(((y_pred - y_true) ** 2).sum())
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    r2: float
    n_eval: int
    runtime: float
    notes: tuple[tuple[str, str], ...] = ()


def score(y_true: np.ndarray, y_pred: np.ndarray, runtime: float,
          notes: tuple[tuple[str, str], ...] = ()) -> MetricReport:
    r2_value = r2(y_true, y_pred)
    flag = (("r2_defined", "false" if np.isnan(r2_value) else "true"),)
    return MetricReport(mae=mae(y_true, y_pred), rmse=rmse(y_true, y_pred),
                        r2=r2_value, n_eval=int(len(y_true)), runtime=runtime,
                        notes=flag + notes)


# ---------------------------------------------------------------------------
# experiment runner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentInputs:
    grid: GridSpec
    lc: Optional[LandCoverGrid]       # baselines run without raster/POI views
    pois: Sequence[PoiRecord]
    labels: LabelSet
    n_categories: Optional[int] = None


@dataclass(frozen=True)
class RunSettings:
    theta_env: float = 0.6
    theta_soc: float = 0.9
    hgnn: HgnnConfig = HgnnConfig()
    ssl: SslConfig = SslConfig()
    idw_power: float = baselines.IDW_POWER
    idw_k: int = baselines.IDW_K
    uk_k: int = baselines.UK_K


PredictionRow = tuple[Region, float, float, bool]   # (region, true, pred, masked)


@dataclass(frozen=True)
class ExperimentResult:
    method: str
    report: MetricReport
    predictions: tuple[PredictionRow, ...]
    split: EvalSplit
    log: tuple[LogRow, ...] = ()


def run_experiment(inputs: ExperimentInputs, method: str, masked_ratio: float,
                   seed: int,
                   settings: RunSettings = RunSettings()) -> ExperimentResult:
    """Featurize, split, fit by the chosen method, and score masked regions.

    Every random choice (split, parameter init, batch order) derives from the
    single seed, so identical calls are bit-reproducible.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r} (expected one of {METHODS})")
    split = make_split(inputs.labels, masked_ratio, seed)
    label_of = inputs.labels.as_dict()
    t0 = time.perf_counter()
    notes: tuple[tuple[str, str], ...] = ()
    log: tuple[LogRow, ...] = ()

    if method in ("geohg", "geohg-ssl"):
        if inputs.lc is None:
            raise ValueError(f"method {method!r} needs land-cover and POI inputs")
        features = featurize_all(inputs.grid, inputs.lc, inputs.pois,
                                 n_categories=inputs.n_categories)
        pos = {f.region: i for i, f in enumerate(features)}
        graph = build_graph(inputs.grid, features, settings.theta_env,
                            settings.theta_soc)
        cfg = replace(settings.hgnn, seed=seed)
        if method == "geohg":
            state, rows = train_end_to_end(graph, features, inputs.labels,
                                           split, cfg)
            log = tuple(rows)
            y_all = predict_all(state, graph, features)
        else:
            ssl_cfg = replace(settings.ssl, seed=seed)
            state, embeddings, _ = pretrain_contrastive(graph, features,
                                                        ssl_cfg, cfg)
            checksum = backbone_checksum(state)
            head, rows = finetune_head(embeddings, inputs.labels, split, cfg,
                                       [f.region for f in features])
            if backbone_checksum(state) != checksum:   # pragma: no cover
                raise RuntimeError("backbone changed during head fine-tuning")
            log = tuple(rows)
            y_all = predict_from_embeddings(head, embeddings)
        pred_of = {region: float(y_all[pos[region]]) for region in label_of}
    else:
        available = set(split.available())
        samples = [(region, value) for region, value in inputs.labels.entries
                   if region in available]
        if method == "idw":
            pred_of = {region: baselines.idw_predict(samples, region,
                                                     settings.idw_power,
                                                     settings.idw_k)
                       for region in label_of}
        else:
            model = baselines.fit_variogram(samples)
            fallbacks: list[Region] = []
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                pred_of = {region: baselines.uk_predict(
                               samples, region, model, settings.uk_k,
                               on_fallback=fallbacks.append)
                           for region in label_of}
            notes += (("uk_idw_fallbacks", str(len(fallbacks))),)

    runtime = time.perf_counter() - t0
    masked_set = set(split.masked)
    rows_out = tuple(
        (region, label_of[region], pred_of[region], region in masked_set)
        for region in sorted(label_of, key=lambda r: (r[1], r[0])))
    y_true = np.array([label_of[r] for r in split.masked])
    y_pred = np.array([pred_of[r] for r in split.masked])
    report = score(y_true, y_pred, runtime, notes)
    return ExperimentResult(method=method, report=report,
                            predictions=rows_out, split=split, log=log)


def masked_ratio_sweep(inputs: ExperimentInputs, method: str,
                       ratios: Sequence[float], seeds: Sequence[int],
                       settings: RunSettings = RunSettings()
                       ) -> list[tuple[float, int, MetricReport]]:
    """Cross product of masked ratios and seeds, one report per run."""
    out = []
    for ratio in ratios:
        for seed in seeds:
            result = run_experiment(inputs, method, ratio, seed, settings)
            out.append((ratio, seed, result.report))
    return out


def similarity_map(e_pretrain: np.ndarray, anchor_row: int) -> np.ndarray:
    """Cosine similarity of every embedding row against the anchor row.

    Zero-norm rows get similarity 0 (flagged with a warning); the anchor's
    own entry is exactly 1 unless its norm is zero.
    """
    e = np.asarray(e_pretrain, dtype=np.float64)
    if not 0 <= anchor_row < e.shape[0]:
        raise ValueError(f"anchor row {anchor_row} out of range")
    norms = np.sqrt((e ** 2).sum(axis=1))
    anchor_norm = norms[anchor_row]
    if np.any(norms == 0.0):
        warnings.warn("zero-norm embedding rows; their similarity is set to 0",
                      stacklevel=2)
    if anchor_norm == 0.0:
        return np.zeros(e.shape[0])
    sims = e @ e[anchor_row]
    safe = np.where(norms == 0.0, 1.0, norms)
    out = np.where(norms == 0.0, 0.0, sims / (safe * anchor_norm))
    out[anchor_row] = 1.0 if anchor_norm > 0 else 0.0
    return out


# ---------------------------------------------------------------------------
# artifact writers (deterministic: repr floats, no timestamps)
# ---------------------------------------------------------------------------

def write_predictions(rows: Sequence[PredictionRow], path: str,
                      header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("x_r,y_r,y_true,y_pred,is_masked\n")
        for (x, y), y_true, y_pred, masked in rows:
            fh.write(f"{x},{y},{y_true!r},{y_pred!r},{int(masked)}\n")


def write_report(report: MetricReport, path: str,
                 header_comments: Sequence[str] = ()) -> None:
    """Key-value report; runtime stays off disk to keep reruns byte-identical."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write(f"mae = {report.mae!r}\n")
        fh.write(f"rmse = {report.rmse!r}\n")
        fh.write(f"r2 = {report.r2!r}\n")
        fh.write(f"n_eval = {report.n_eval}\n")
        for key, value in report.notes:
            fh.write(f"{key} = {value}\n")


def write_similarity(regions: Sequence[Region], sims: np.ndarray, path: str,
                     header_comments: Sequence[str] = ()) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in header_comments:
            fh.write(f"# {line}\n")
        fh.write("x_r,y_r,similarity\n")
        for (x, y), s in zip(regions, sims):
            fh.write(f"{x},{y},{float(s)!r}\n")


def load_report(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    if not out:
        raise GeoDataError(f"{path}: empty report")
    return out
