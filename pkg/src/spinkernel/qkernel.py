"""Quantum kernels built on the spin encoding.

Two kernels are provided:

* the pure-state kernel ``|<0|U^dagger(x_j) U(x_i)|0>|^2``, cheap enough for 12+ spins;
* the ensemble (trace) kernel ``Tr(A(x_i) A(x_j)) / Tr(I_z^2)`` with
  ``A(x) = U(x) I_z U^dagger(x)``, which costs 2**n evolutions and is meant
  as a small-n reference.

Both equal 1 on the diagonal.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _io
from .spinsim import (
    EncodingParams,
    SpinSystem,
    encode,
    encode_adjoint,
    encode_batch,
    ground_state,
    iz_eigenvalues,
)

TRACE_KERNEL_MAX_SPINS = 12
MQ_DEFAULT_SAMPLES = 256


def _point(x, params: EncodingParams) -> np.ndarray:
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (params.feature_dim,):
        raise ValueError(f"data point has shape {x.shape}, expected ({params.feature_dim},)")
    return x


def _points(points, params: EncodingParams) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None] if params.feature_dim == 1 else pts[None, :]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty sequence of data points")
    if pts.shape[1] != params.feature_dim:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {params.feature_dim}")
    return pts


def kernel(system: SpinSystem, params: EncodingParams, xi, xj, method: str = "overlap") -> float:
    """Pure-state kernel |<0|U^dagger(xj) U(xi)|0>|^2.

    ``method="overlap"`` encodes both points and takes the inner product;
    ``method="uncompute"`` runs U(xi) then U^dagger(xj) on one buffer and reads
    the reference amplitude.
    """
    xi, xj = _point(xi, params), _point(xj, params)
    if method == "overlap":
        amp = np.vdot(encode(system, xj, params), encode(system, xi, params))
    elif method == "uncompute":
        amp = encode_adjoint(system, xj, params, encode(system, xi, params))[0]
    else:
        raise ValueError(f"unknown kernel method {method!r}")
    return float(amp.real * amp.real + amp.imag * amp.imag)


def trace_kernel(system: SpinSystem, params: EncodingParams, xi, xj,
                 max_spins: int = TRACE_KERNEL_MAX_SPINS) -> float:
    """Normalized ensemble kernel Tr(A(xi) A(xj)) / Tr(I_z^2)."""
    if system.n > max_spins:
        raise ValueError(f"trace kernel limited to {max_spins} spins (cost 2**n evolutions), got {system.n}")
    xi, xj = _point(xi, params), _point(xj, params)
    lam = iz_eigenvalues(system.n)
    # column z holds U^dagger(xi) U(xj) |z>
    phi = encode_adjoint(system, xi, params, encode(system, xj, params, state=np.eye(system.dim, dtype=np.complex128)))
    expect = lam @ (np.abs(phi) ** 2)
    return float(np.dot(lam, expect) / np.dot(lam, lam))


@dataclass
class GramMatrix:
    """Symmetric kernel matrix over ``points`` plus provenance metadata."""

    entries: np.ndarray
    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return self.entries.shape[0]

    def to_csv(self, path) -> None:
        n_rows = self.entries.shape[0]
        _io.write_csv(path, self.meta, [f"k{j}" for j in range(n_rows)], self.entries)

    def to_json(self, path) -> None:
        payload = {
            "format": "gram",
            "meta": self.meta,
            "points": self.points.tolist(),
            "entries": self.entries.tolist(),
        }
        Path(path).write_text(json.dumps(payload, indent=1) + "\n")

    @classmethod
    def from_csv(cls, path, points=None) -> "GramMatrix":
        meta, _, data = _io.read_csv(path)
        pts = np.empty((data.shape[0], 0)) if points is None else np.asarray(points, dtype=np.float64)
        return cls(entries=data, points=pts, meta=meta)

    @classmethod
    def from_json(cls, path) -> "GramMatrix":
        payload = json.loads(Path(path).read_text())
        if payload.get("format") != "gram":
            raise ValueError(f"{path} is not a gram JSON envelope")
        return cls(entries=np.array(payload["entries"], dtype=np.float64),
                   points=np.array(payload["points"], dtype=np.float64),
                   meta=payload["meta"])


def gram_meta(system: SpinSystem, params: EncodingParams, kind: str = "pure") -> dict:
    return {
        "n": system.n,
        "tau": params.tau,
        "substeps": params.substeps,
        "feature_dim": params.feature_dim,
        "seed": system.seed,
        "couplings_sha256": system.fingerprint(),
        "kernel": kind,
    }


def profile_from_base(system: SpinSystem, params: EncodingParams, deltas) -> np.ndarray:
    """k(delta) for single-segment encodings, from one evolution of the reference state.

    For D = 1, U(x)|0> equals exp(-i x I_z) U(0)|0> up to a global phase, so
    k(delta) = |sum_z p_z exp(i delta lambda_z)|^2 with p_z the populations of U(0)|0>.
    """
    if params.feature_dim != 1:
        raise ValueError("the shift-invariant fast path needs feature_dim == 1")
    pops = np.abs(encode(system, [0.0], params)) ** 2
    lam = iz_eigenvalues(system.n)
    # group populations by I_z eigenvalue; only 2n+1 distinct values
    levels = np.arange(-system.n, system.n + 1, 2) / 2.0
    weight = np.zeros(len(levels))
    np.add.at(weight, (lam * 2 + system.n).astype(int) // 2, pops)
    # measure phases from the top level (a global phase): an unevolved state then gives exactly 1
    shifted = levels - levels[-1]
    amp = np.exp(1j * np.multiply.outer(np.asarray(deltas, dtype=np.float64), shifted)) @ weight
    return amp.real ** 2 + amp.imag ** 2


def gram(system: SpinSystem, params: EncodingParams, points, kind: str = "pure",
         fast_1d: bool = False, workers: int = 1) -> GramMatrix:
    """Kernel matrix over ``points``; only the upper triangle is evaluated, diagonal is exactly 1."""
    pts = _points(points, params)
    n_pts = pts.shape[0]
    K = np.eye(n_pts)
    iu = np.triu_indices(n_pts, k=1)
    if n_pts > 1:
        if kind == "pure" and fast_1d:
            diffs = pts[iu[0], 0] - pts[iu[1], 0]
            K[iu] = profile_from_base(system, params, diffs)
        elif kind == "pure":
            states = encode_batch(system, pts, params, workers=workers)
            for i in range(n_pts - 1):
                ov = states[:, i].conj() @ states[:, i + 1:]
                K[i, i + 1:] = ov.real ** 2 + ov.imag ** 2
        elif kind == "trace":
            K[iu] = [trace_kernel(system, params, pts[i], pts[j]) for i, j in zip(*iu)]
        else:
            raise ValueError(f"unknown kernel kind {kind!r}")
        K[(iu[1], iu[0])] = K[iu]
    return GramMatrix(entries=K, points=pts, meta=gram_meta(system, params, kind))


def cross_kernel(system: SpinSystem, params: EncodingParams, train_points, query_points,
                 kind: str = "pure", fast_1d: bool = False, workers: int = 1) -> np.ndarray:
    """Matrix with row q equal to the kernel vector of ``query_points[q]`` against the training set."""
    train = _points(train_points, params)
    query = _points(query_points, params)
    if kind == "pure" and fast_1d:
        return profile_from_base(system, params, train[None, :, 0] - query[:, 0, None])
    if kind == "pure":
        a = encode_batch(system, train, params, workers=workers)
        b = encode_batch(system, query, params, workers=workers)
        ov = b.conj().T @ a
        return ov.real ** 2 + ov.imag ** 2
    if kind == "trace":
        return np.array([[trace_kernel(system, params, t, q) for t in train] for q in query])
    raise ValueError(f"unknown kernel kind {kind!r}")


def kernel_vector(system: SpinSystem, params: EncodingParams, points, x, kind: str = "pure") -> np.ndarray:
    """Element i is k(points[i], x)."""
    pts = _points(points, params)
    x = _point(x, params)
    if kind == "trace":
        return np.array([trace_kernel(system, params, p, x) for p in pts])
    psi = encode(system, x, params)
    ov = psi.conj() @ encode_batch(system, pts, params)
    return ov.real ** 2 + ov.imag ** 2


def kernel_profile_1d(system: SpinSystem, params: EncodingParams, deltas, fast: bool = True) -> np.ndarray:
    """k(delta) = kernel(delta, 0) over ``deltas``; returns an (N, 2) array of (delta, k).

    ``fast`` uses the shift structure of single-segment encodings and needs one
    evolution in total; otherwise every delta is encoded directly.
    """
    if params.feature_dim != 1:
        raise ValueError("kernel profiles are defined for one-dimensional inputs")
    deltas = np.asarray(deltas, dtype=np.float64).reshape(-1)
    if fast:
        k = profile_from_base(system, params, deltas)
    else:
        ref = encode(system, [0.0], params)
        ov = ref.conj() @ encode_batch(system, deltas[:, None], params)
        k = ov.real ** 2 + ov.imag ** 2
    return np.column_stack([deltas, k])


def profile_fwhm(deltas, values) -> float:
    """Full width of the central peak at half height between the profile's maximum and minimum.

    The crossing on each side of the peak is located by linear interpolation.
    A flat profile has no peak and returns ``inf``.
    """
    d = np.asarray(deltas, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(d)
    d, v = d[order], v[order]
    top, bottom = v.max(), v.min()
    if top - bottom <= 0:
        return float("inf")
    half = 0.5 * (top + bottom)
    peak = int(np.argmax(v))

    def crossing(indices) -> float:
        prev = peak
        for i in indices:
            if v[i] < half:
                t = (v[prev] - half) / (v[prev] - v[i])
                return d[prev] + t * (d[i] - d[prev])
            prev = i
        return d[prev]

    right = crossing(range(peak + 1, len(v)))
    left = crossing(range(peak - 1, -1, -1))
    return float(right - left)


@dataclass
class MqSpectrum:
    orders: np.ndarray
    intensities: np.ndarray

    def as_dict(self) -> dict[int, float]:
        return {int(m): float(i) for m, i in zip(self.orders, self.intensities)}


def mq_spectrum(deltas, values, max_order: int, imag_tol: float = 1e-9) -> MqSpectrum:
    """Multiple-quantum spectrum: Fourier coefficients of a kernel profile.

    ``deltas`` must be the uniform grid ``2*pi*k/N`` for k = 0..N-1 with
    N >= 2*max_order + 1. The intensity of coherence order m is the coefficient
    of exp(i m delta) in the profile.
    """
    d = np.asarray(deltas, dtype=np.float64).reshape(-1)
    v = np.asarray(values, dtype=np.float64).reshape(-1)
    n_samples = d.shape[0]
    if v.shape != d.shape:
        raise ValueError("deltas and values must have equal length")
    if n_samples < 2 * max_order + 1:
        raise ValueError(f"need at least {2 * max_order + 1} samples for orders up to {max_order}, got {n_samples}")
    expected = 2 * np.pi * np.arange(n_samples) / n_samples
    if not np.allclose(d, expected, rtol=0, atol=1e-9):
        raise ValueError("profile must be sampled on the uniform grid 2*pi*k/N over [0, 2*pi)")
    coeffs = np.fft.fft(v) / n_samples
    orders = np.arange(-max_order, max_order + 1)
    # coeffs[k] is the coefficient of exp(+i k delta)
    picked = coeffs[orders % n_samples]
    if np.max(np.abs(picked.imag)) >= imag_tol:
        raise ValueError(f"spectrum has imaginary residue {np.max(np.abs(picked.imag)):.3g}; profile is not even in delta")
    return MqSpectrum(orders=orders, intensities=picked.real.copy())


def mq_grid(samples: int = MQ_DEFAULT_SAMPLES) -> np.ndarray:
    return 2 * np.pi * np.arange(samples) / samples
