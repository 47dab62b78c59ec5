"""Seeded toy datasets: 1-D regression targets, circles and moons."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import _io

DEFAULT_RANGE_DEG = (-45.0, 45.0)
# Every coherence order is even, so the kernel has period pi in each coordinate.
# Data in [-pi/4, pi/4] keeps pairwise differences within one half period.
DEFAULT_HALFWIDTH = np.pi / 4


@dataclass
class LabeledSet:
    points: np.ndarray          # (N, D)
    targets: np.ndarray         # (N,) real targets or +-1 labels
    name: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.points.shape[0] != self.targets.shape[0]:
            raise ValueError("points and targets must have equal length")

    def __len__(self):
        return self.targets.shape[0]

    def meta(self) -> dict:
        return {"generator": self.name, **self.params, "seed": self.seed}

    def to_csv(self, path) -> None:
        dims = self.points.shape[1]
        cols = [f"x{j + 1}" for j in range(dims)] + ["y"]
        _io.write_csv(path, self.meta(), cols, np.column_stack([self.points, self.targets]))

    @classmethod
    def from_csv(cls, path) -> "LabeledSet":
        meta, cols, data = _io.read_csv(path)
        if cols[-1] != "y" or not all(c.startswith("x") for c in cols[:-1]):
            raise ValueError(f"{path}: expected columns x1[,x2,...],y, got {cols}")
        name = meta.pop("generator", "file")
        seed = meta.pop("seed", "none")
        return cls(points=data[:, :-1], targets=data[:, -1], name=name, params=meta,
                   seed=None if seed == "none" else int(seed))


def regression_target(task: str, x_deg) -> np.ndarray:
    """sin(2 pi x / 50) or its sinc variant, with x in degrees; sinc(0) = 1."""
    x = np.asarray(x_deg, dtype=np.float64)
    u = 2 * np.pi * x / 50.0
    if task == "sin":
        return np.sin(u)
    if task == "sinc":
        safe = np.where(u == 0.0, 1.0, u)
        return np.where(u == 0.0, 1.0, np.sin(safe) / safe)
    raise ValueError(f"unknown regression task {task!r}")


def regression_1d(task: str = "sin", count: int = 40, range_deg=DEFAULT_RANGE_DEG, seed: int = 0) -> LabeledSet:
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    lo, hi = map(float, range_deg)
    if not hi > lo:
        raise ValueError(f"empty range {range_deg}")
    rng = np.random.default_rng(seed)
    x = rng.uniform(lo, hi, size=count)
    return LabeledSet(points=x[:, None], targets=regression_target(task, x), name=f"regression_1d_{task}",
                      params={"count": count, "range_deg": [lo, hi]}, seed=seed)


def eval_grid_1d(count: int = 64, range_deg=DEFAULT_RANGE_DEG) -> np.ndarray:
    """``count`` evenly spaced points spanning the range, endpoints included; shape (count, 1)."""
    if count < 2:
        raise ValueError(f"grid needs at least 2 points, got {count}")
    lo, hi = map(float, range_deg)
    return np.linspace(lo, hi, count)[:, None]


def make_circles(count: int = 100, noise_sd: float = 0.08, factor: float = 0.5, seed: int = 0) -> LabeledSet:
    """Two concentric circles: outer (radius 1) labelled -1, inner (radius ``factor``) labelled +1."""
    if not 0.0 < factor < 1.0:
        raise ValueError(f"factor must lie in (0, 1), got {factor}")
    if count < 2:
        raise ValueError(f"count must be >= 2, got {count}")
    n_out = count // 2
    n_in = count - n_out
    t_out = np.linspace(0, 2 * np.pi, n_out, endpoint=False)
    t_in = np.linspace(0, 2 * np.pi, n_in, endpoint=False)
    pts = np.vstack([
        np.column_stack([np.cos(t_out), np.sin(t_out)]),
        factor * np.column_stack([np.cos(t_in), np.sin(t_in)]),
    ])
    labels = np.concatenate([-np.ones(n_out), np.ones(n_in)])
    if noise_sd > 0:
        pts = pts + np.random.default_rng(seed).normal(scale=noise_sd, size=pts.shape)
    return LabeledSet(points=pts, targets=labels, name="circles",
                      params={"count": count, "noise_sd": noise_sd, "factor": factor}, seed=seed)


def make_moons(count: int = 100, noise_sd: float = 0.08, seed: int = 0) -> LabeledSet:
    """Two interleaved half circles: upper labelled -1, lower labelled +1."""
    if count < 2:
        raise ValueError(f"count must be >= 2, got {count}")
    n_up = count // 2
    n_low = count - n_up
    t_up = np.linspace(0, np.pi, n_up)
    t_low = np.linspace(0, np.pi, n_low)
    pts = np.vstack([
        np.column_stack([np.cos(t_up), np.sin(t_up)]),
        np.column_stack([1 - np.cos(t_low), 0.5 - np.sin(t_low)]),
    ])
    labels = np.concatenate([-np.ones(n_up), np.ones(n_low)])
    if noise_sd > 0:
        pts = pts + np.random.default_rng(seed).normal(scale=noise_sd, size=pts.shape)
    return LabeledSet(points=pts, targets=labels, name="moons",
                      params={"count": count, "noise_sd": noise_sd}, seed=seed)


@dataclass(frozen=True)
class FeatureScaler:
    """Per-coordinate affine map sending [lo, hi] onto [-halfwidth, halfwidth]."""

    lo: np.ndarray
    hi: np.ndarray
    halfwidth: float

    def transform(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64)
        center = 0.5 * (self.lo + self.hi)
        span = 0.5 * (self.hi - self.lo)
        safe = np.where(span > 0, span, 1.0)
        return np.where(span > 0, (p - center) / safe * self.halfwidth, 0.0)

    def inverse(self, scaled) -> np.ndarray:
        s = np.asarray(scaled, dtype=np.float64)
        center = 0.5 * (self.lo + self.hi)
        span = 0.5 * (self.hi - self.lo)
        return center + s / self.halfwidth * span


def fit_scaler(points, halfwidth: float = DEFAULT_HALFWIDTH) -> FeatureScaler:
    p = np.asarray(points, dtype=np.float64)
    return FeatureScaler(lo=p.min(axis=0), hi=p.max(axis=0), halfwidth=float(halfwidth))


def scale_features(data: LabeledSet, target_halfwidth_rad: float = DEFAULT_HALFWIDTH) -> LabeledSet:
    """Rescale every coordinate's data range to [-halfwidth, +halfwidth]; constant columns map to 0."""
    scaler = fit_scaler(data.points, target_halfwidth_rad)
    return replace(data, points=scaler.transform(data.points),
                   params={**data.params, "scaled_halfwidth": float(target_halfwidth_rad)})
