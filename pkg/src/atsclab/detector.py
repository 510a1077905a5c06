"""Prediction-error attack detection.

Builds lookback windows from an attack-free feature log, trains the recurrent
predictor of the next-second EB vehicle count, fixes an integer error threshold
(ceiling of the maximum absolute validation error), and streams verdicts: a
single strict exceedance flags.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataError
from .msgplane import FeatureSample
from .neuralnet import LstmRegressor, NormalizationSpec, TrainingConfig, train

TRAIN_FRACTION = 0.7


class FeatureMode(Enum):
    BASELINE = "baseline"    # EB count + EB average waiting time
    UPSTREAM = "upstream"    # baseline + upstream feeder counts and waiting sums

    @property
    def dimension(self) -> int:
        return 2 if self is FeatureMode.BASELINE else 8


def feature_vector(sample: FeatureSample, mode: FeatureMode) -> np.ndarray:
    base = [float(sample.eb_count), sample.eb_aawt]
    if mode is FeatureMode.BASELINE:
        return np.array(base)
    if len(sample.upstream_counts) != 3:
        raise DataError("upstream mode needs 3 feeder streams in the feature log")
    return np.array(base + [float(c) for c in sample.upstream_counts]
                    + list(sample.upstream_awt))


@dataclass
class WindowDataset:
    X_train: np.ndarray     # (N, L, F), normalized
    y_train: np.ndarray     # (N,), normalized
    X_val: np.ndarray
    y_val: np.ndarray
    y_val_raw: np.ndarray   # vehicles
    norm: NormalizationSpec


def build_dataset(samples: list[FeatureSample], mode: FeatureMode,
                  lookback: int, split: float = TRAIN_FRACTION) -> WindowDataset:
    """Chronological 70/30 split; windows of `lookback` seconds predict the
    next-second EB count. Normalization is fitted on the training portion only.
    """
    n = len(samples)
    if n < lookback + 2:
        raise DataError(f"feature log of {n} rows is too short for lookback {lookback}")
    feats = np.stack([feature_vector(s, mode) for s in samples])
    counts = np.array([float(s.eb_count) for s in samples])

    boundary = int(round(n * split))
    norm = NormalizationSpec.fit(feats[:boundary], counts[lookback:boundary])
    feats_n = norm.transform(feats)

    def windows(end_lo: int, end_hi: int):
        X = np.stack([feats_n[e - lookback:e] for e in range(end_lo, end_hi)])
        y_raw = counts[end_lo:end_hi]
        return X, norm.transform_target(y_raw), y_raw

    X_tr, y_tr, _ = windows(lookback, boundary)
    X_va, y_va, y_va_raw = windows(boundary, n)
    return WindowDataset(X_train=X_tr, y_train=y_tr, X_val=X_va, y_val=y_va,
                         y_val_raw=y_va_raw, norm=norm)


@dataclass
class DetectionThreshold:
    raw: float          # max absolute validation error, vehicles
    effective: int      # ceiling of raw

    @classmethod
    def from_raw(cls, raw: float) -> "DetectionThreshold":
        return cls(raw=raw, effective=int(math.ceil(raw)))


@dataclass
class DetectorSpec:
    mode: FeatureMode
    model: LstmRegressor
    norm: NormalizationSpec
    threshold: DetectionThreshold
    lookback: int


def compute_threshold(model: LstmRegressor, norm: NormalizationSpec,
                      X_val: np.ndarray, y_val_raw: np.ndarray) -> DetectionThreshold:
    if len(X_val) == 0:
        raise DataError("cannot fix a threshold from an empty validation set")
    pred = norm.inverse_target(model.forward(X_val))
    raw = float(np.max(np.abs(pred - y_val_raw)))
    return DetectionThreshold.from_raw(raw)


def train_detector(samples: list[FeatureSample], mode: FeatureMode,
                   cfg: TrainingConfig, hidden1: int = 128, hidden2: int = 8):
    """Full offline pipeline on an attack-free log. Returns (spec, dataset, curves)."""
    ds = build_dataset(samples, mode, cfg.lookback)
    model = LstmRegressor(mode.dimension, hidden1, hidden2, seed=cfg.seed)
    curves = train(model, ds.X_train, ds.y_train, cfg, ds.X_val, ds.y_val)
    threshold = compute_threshold(model, ds.norm, ds.X_val, ds.y_val_raw)
    spec = DetectorSpec(mode=mode, model=model, norm=ds.norm,
                        threshold=threshold, lookback=cfg.lookback)
    return spec, ds, curves


@dataclass(frozen=True)
class DetectionVerdict:
    t: float
    observed: float
    predicted: float
    abs_error: float
    flagged: bool
    valid: bool = True      # False for seconds lost to a stream gap


def detect(spec: DetectorSpec, samples: list[FeatureSample],
           dt: float = 1.0) -> list[DetectionVerdict]:
    """Streaming verdicts: predict each second's EB count from the trailing
    window and flag iff |observed - predicted| strictly exceeds the threshold.
    """
    L = spec.lookback
    verdicts: list[DetectionVerdict] = []
    history: list[np.ndarray] = []
    prev_t: float | None = None
    for s in samples:
        gap = prev_t is not None and abs(s.t - prev_t - dt) > 1e-9
        prev_t = s.t
        if gap:
            history.clear()   # a missing second invalidates the trailing window
        if len(history) >= L:
            window = np.stack(history[-L:])
            pred = float(spec.norm.inverse_target(spec.model.predict_one(window)))
            err = abs(s.eb_count - pred)
            verdicts.append(DetectionVerdict(
                t=s.t, observed=float(s.eb_count), predicted=pred,
                abs_error=err, flagged=err > spec.threshold.effective))
        elif gap:
            verdicts.append(DetectionVerdict(t=s.t, observed=float(s.eb_count),
                                             predicted=float("nan"),
                                             abs_error=float("nan"),
                                             flagged=False, valid=False))
        history.append(spec.norm.transform(feature_vector(s, spec.mode)))
    return verdicts


@dataclass
class DetectionReport:
    first_flag: float | None
    latency: float | None           # first flag - attack start; None if undetected
    false_positives: int            # flags strictly before attack start
    flag_times: list[float]
    surges: list[tuple[float, float]]
    surges_flagged: list[bool]

    @property
    def detected(self) -> bool:
        return self.first_flag is not None


def injection_surges(inject_times: list[float], max_gap: float = 30.0,
                     min_span: float = 60.0) -> list[tuple[float, float]]:
    """Cluster injection events into sustained surges.

    Consecutive injections separated by at most `max_gap` seconds form one
    cluster; clusters spanning at least `min_span` seconds are surges.
    """
    if not inject_times:
        return []
    ts = sorted(inject_times)
    clusters = [[ts[0], ts[0]]]
    for t in ts[1:]:
        if t - clusters[-1][1] <= max_gap:
            clusters[-1][1] = t
        else:
            clusters.append([t, t])
    return [(a, b) for a, b in clusters if b - a >= min_span]


def detection_report(verdicts: list[DetectionVerdict], inject_times: list[float],
                     attack_start: float | None,
                     surge_slack: float = 30.0) -> DetectionReport:
    flags = [v.t for v in verdicts if v.valid and v.flagged]
    surges = injection_surges(inject_times)
    surges_flagged = [any(a <= t <= b + surge_slack for t in flags)
                      for a, b in surges]
    if attack_start is None:
        return DetectionReport(first_flag=flags[0] if flags else None, latency=None,
                               false_positives=len(flags), flag_times=flags,
                               surges=surges, surges_flagged=surges_flagged)
    post = [t for t in flags if t >= attack_start]
    first = post[0] if post else None
    return DetectionReport(
        first_flag=first,
        latency=(first - attack_start) if first is not None else None,
        false_positives=sum(1 for t in flags if t < attack_start),
        flag_times=flags, surges=surges, surges_flagged=surges_flagged)


# -- persistence -------------------------------------------------------------

CHECKPOINT_VERSION = 1


def save_detector(spec: DetectorSpec, path) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "mode": spec.mode.value,
        "input_dim": spec.model.input_dim,
        "hidden1": spec.model.hidden1,
        "hidden2": spec.model.hidden2,
        "lookback": spec.lookback,
        "threshold_raw": spec.threshold.raw,
        "threshold_effective": spec.threshold.effective,
        "target_min": spec.norm.target_min,
        "target_max": spec.norm.target_max,
    }
    np.savez(path, meta=json.dumps(meta, sort_keys=True),
             feat_min=spec.norm.feat_min, feat_max=spec.norm.feat_max,
             **spec.model.state_arrays())


def load_detector(path) -> DetectorSpec:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise DataError(f"unsupported checkpoint version {meta.get('version')}")
        model = LstmRegressor.from_state(meta["input_dim"], meta["hidden1"],
                                         meta["hidden2"],
                                         {k: data[k] for k in data.files
                                          if k not in ("meta", "feat_min", "feat_max")})
        norm = NormalizationSpec(feat_min=data["feat_min"], feat_max=data["feat_max"],
                                 target_min=meta["target_min"],
                                 target_max=meta["target_max"])
    return DetectorSpec(mode=FeatureMode(meta["mode"]), model=model, norm=norm,
                        threshold=DetectionThreshold(raw=meta["threshold_raw"],
                                                     effective=meta["threshold_effective"]),
                        lookback=meta["lookback"])
