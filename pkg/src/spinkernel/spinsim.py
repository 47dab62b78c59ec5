"""Dense state-vector simulation of n spin-1/2 particles under the
phase-rotated double-quantum encoding.

Basis convention: spin ``mu`` lives on bit ``n - 1 - mu`` of the basis index
(spin 0 is the most significant bit, matching ``np.kron`` ordering). A 0 bit is
the +1/2 eigenstate of that spin's ``I_z``, so index 0 is the all-up reference
state.

States are complex128 arrays of shape ``(2**n,)`` or, for batched work,
``(2**n, batch)`` with one state per column. Public functions never mutate
their inputs; they return fresh arrays.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numba
import numpy as np

DEFAULT_DT = 1e-3


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Spin count plus the symmetric, zero-diagonal coupling matrix."""

    couplings: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        d = np.array(self.couplings, dtype=np.float64)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ValueError(f"couplings must be a non-empty square matrix, got shape {d.shape}")
        if not np.array_equal(d, d.T):
            raise ValueError("couplings must be symmetric")
        if np.any(np.diag(d) != 0.0):
            raise ValueError("couplings must have zero diagonal")
        d.setflags(write=False)
        object.__setattr__(self, "couplings", d)

    @property
    def n(self) -> int:
        return self.couplings.shape[0]

    @property
    def dim(self) -> int:
        return 1 << self.n

    def pairs(self) -> list[tuple[int, int, float]]:
        """(mu, nu, d_mu_nu) for mu < nu in lexicographic order."""
        n = self.n
        return [(mu, nu, float(self.couplings[mu, nu])) for mu in range(n) for nu in range(mu + 1, n)]

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256(self.couplings.tobytes()).hexdigest()
        return h[:16]


@dataclass(frozen=True)
class EncodingParams:
    """Segment time ``tau``, Trotter substeps per segment and input dimension."""

    tau: float
    substeps: int = 1
    feature_dim: int = 1

    def __post_init__(self):
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"tau must be finite and >= 0, got {self.tau}")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError(f"substeps must be an integer >= 1, got {self.substeps}")
        if int(self.feature_dim) != self.feature_dim or self.feature_dim < 1:
            raise ValueError(f"feature_dim must be an integer >= 1, got {self.feature_dim}")

    @classmethod
    def from_dt(cls, tau: float, dt: float = DEFAULT_DT, feature_dim: int = 1) -> "EncodingParams":
        """Pick the substep count so that tau / substeps is as close to ``dt`` as possible."""
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        return cls(tau=float(tau), substeps=max(1, int(round(tau / dt))), feature_dim=feature_dim)

    @property
    def dt(self) -> float:
        return self.tau / self.substeps


def draw_couplings(n: int, seed: int) -> SpinSystem:
    """Couplings d_mu_nu i.i.d. uniform on [-1, 1] for mu < nu, mirrored."""
    if n < 1:
        raise ValueError(f"spin count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, k=1)
    d = np.zeros((n, n))
    d[iu] = rng.uniform(-1.0, 1.0, size=len(iu[0]))
    d = d + d.T
    return SpinSystem(d, seed=seed)


def ground_state(n: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"spin count must be >= 1, got {n}")
    psi = np.zeros(1 << n, dtype=np.complex128)
    psi[0] = 1.0
    return psi


@lru_cache(maxsize=None)
def iz_eigenvalues(n: int) -> np.ndarray:
    """Collective I_z eigenvalue of every basis index: (zeros - ones) / 2."""
    z = np.arange(1 << n, dtype=np.int64)
    ones = np.zeros_like(z)
    for b in range(n):
        ones += (z >> b) & 1
    lam = (n - 2 * ones) / 2.0
    lam.setflags(write=False)
    return lam


def _n_from_dim(dim: int) -> int:
    n = dim.bit_length() - 1
    if n < 1 or (1 << n) != dim:
        raise ValueError(f"state length {dim} is not 2**n with n >= 1")
    return n


def _as_work(state) -> tuple[np.ndarray, bool]:
    """Fresh C-contiguous (dim, batch) complex copy and whether the input was 1-D."""
    a = np.array(state, dtype=np.complex128, copy=True, order="C")
    if a.ndim == 1:
        return a.reshape(-1, 1), True
    if a.ndim != 2:
        raise ValueError(f"state must be 1-D or 2-D, got ndim={a.ndim}")
    return a, False


def _restore(work: np.ndarray, was_1d: bool) -> np.ndarray:
    return work.reshape(-1) if was_1d else work


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True, nogil=True)
def _dq_rotate(psi, lo, hi, c, s):
    # |..0..0..> -> c|..0..0..> + i s|..1..1..>, and symmetrically; lo < hi are bit positions
    dim, batch = psi.shape
    both = (1 << lo) | (1 << hi)
    lo_mask = (1 << lo) - 1
    hi_mask = (1 << hi) - 1
    for k in range(dim >> 2):
        z = ((k >> lo) << (lo + 1)) | (k & lo_mask)
        z = ((z >> hi) << (hi + 1)) | (z & hi_mask)
        w = z | both
        for b in range(batch):
            a0 = psi[z, b]
            a1 = psi[w, b]
            psi[z, b] = complex(c * a0.real - s * a1.imag, c * a0.imag + s * a1.real)
            psi[w, b] = complex(c * a1.real - s * a0.imag, c * a1.imag + s * a0.real)


@numba.njit(cache=True, nogil=True)
def _gate_stream(psi, los, his, cs, ss, reps):
    for _ in range(reps):
        for p in range(los.shape[0]):
            _dq_rotate(psi, los[p], his[p], cs[p], ss[p])


def _bit_positions(n: int, mu: int, nu: int) -> tuple[int, int]:
    a, b = n - 1 - mu, n - 1 - nu
    return (a, b) if a < b else (b, a)


@lru_cache(maxsize=64)
def _gate_table_cached(key: bytes, n: int, step: float, reverse: bool):
    d = np.frombuffer(key, dtype=np.float64).reshape(n, n)
    rows = [(mu, nu, d[mu, nu]) for mu in range(n) for nu in range(mu + 1, n)]
    if reverse:
        rows = rows[::-1]
    los = np.empty(len(rows), dtype=np.int64)
    his = np.empty(len(rows), dtype=np.int64)
    cs = np.empty(len(rows))
    ss = np.empty(len(rows))
    for p, (mu, nu, dmn) in enumerate(rows):
        los[p], his[p] = _bit_positions(n, mu, nu)
        theta = step * dmn
        cs[p] = np.cos(theta / 2.0)
        ss[p] = np.sin(theta / 2.0)
    if reverse:
        ss = -ss
    for arr in (los, his, cs, ss):
        arr.setflags(write=False)
    return los, his, cs, ss


def _gate_table(system: SpinSystem, step: float, reverse: bool = False):
    """Per-pair (bit lo, bit hi, cos, sin) arrays for one Trotter substep of length ``step``.

    ``reverse`` yields the inverse substep: pairs in reverse order with negated angles.
    """
    return _gate_table_cached(system.couplings.tobytes(), system.n, float(step), bool(reverse))


# ---------------------------------------------------------------------------
# in-place helpers on (dim, batch) work arrays


def _collective_z_inplace(work: np.ndarray, angle, n: int) -> None:
    lam = iz_eigenvalues(n)
    angle = np.asarray(angle, dtype=np.float64)
    if angle.ndim == 0:
        if angle == 0.0:
            return
        work *= np.exp(-1j * float(angle) * lam)[:, None]
    else:
        if np.all(angle == 0.0):
            return
        work *= np.exp(-1j * np.multiply.outer(lam, angle))


def _segment_inplace(work, system: SpinSystem, x, params: EncodingParams, adjoint: bool = False) -> None:
    n = system.n
    if params.tau == 0.0 or not system.couplings.any():
        # H = 0: the two z rotations cancel analytically; skip them to stay exact
        return
    step = params.tau / params.substeps
    # e^{-ix Iz} [gates]^M e^{+ix Iz}; the rightmost factor acts first
    _collective_z_inplace(work, -np.asarray(x), n)
    los, his, cs, ss = _gate_table(system, step, reverse=adjoint)
    _gate_stream(work, los, his, cs, ss, params.substeps)
    _collective_z_inplace(work, x, n)


def _check_dims(work: np.ndarray, system: SpinSystem) -> None:
    if work.shape[0] != system.dim:
        raise ValueError(f"state has length {work.shape[0]}, system of {system.n} spins needs {system.dim}")


def _coords(x, params: EncodingParams, batch: int | None) -> np.ndarray:
    """Coordinates as (D,) for a single point or (D, batch) for per-column points."""
    x = np.asarray(x, dtype=np.float64)
    if batch is None:
        x = np.atleast_1d(x)
        if x.ndim != 1 or x.shape[0] != params.feature_dim:
            raise ValueError(f"data point has shape {x.shape}, expected ({params.feature_dim},)")
    else:
        if x.ndim == 1 and params.feature_dim == 1 and x.shape[0] == batch:
            x = x[None, :]
        if x.shape != (params.feature_dim, batch):
            raise ValueError(f"points have shape {x.shape}, expected ({params.feature_dim}, {batch})")
    if not np.all(np.isfinite(x)):
        raise ValueError("data point coordinates must be finite")
    return x


# ---------------------------------------------------------------------------
# public operations


def apply_collective_z(state, angle: float) -> np.ndarray:
    """Multiply each basis amplitude by exp(-i * angle * lambda_z)."""
    work, was_1d = _as_work(state)
    _collective_z_inplace(work, float(angle), _n_from_dim(work.shape[0]))
    return _restore(work, was_1d)


def apply_dq_gate(state, mu: int, nu: int, theta: float) -> np.ndarray:
    """Exact exp(-i theta (I_y,mu I_y,nu - I_x,mu I_x,nu)) on a state."""
    work, was_1d = _as_work(state)
    n = _n_from_dim(work.shape[0])
    if mu == nu or not (0 <= mu < n and 0 <= nu < n):
        raise ValueError(f"invalid spin pair ({mu}, {nu}) for {n} spins")
    lo, hi = _bit_positions(n, mu, nu)
    _dq_rotate(work, lo, hi, np.cos(theta / 2.0), np.sin(theta / 2.0))
    return _restore(work, was_1d)


def evolve_segment(state, system: SpinSystem, x: float, params: EncodingParams) -> np.ndarray:
    """One Trotterized segment exp(-i H(x) tau).

    The Trotter product runs over pairs in lexicographic order, ``params.substeps`` times,
    sandwiched by the collective-z rotations that set the phase ``x``.
    """
    work, was_1d = _as_work(state)
    _check_dims(work, system)
    _segment_inplace(work, system, float(x), params)
    return _restore(work, was_1d)


def encode(system: SpinSystem, x, params: EncodingParams, state=None) -> np.ndarray:
    """U(x) applied to ``state`` (default: the reference state).

    Segments are applied for x_1 first and x_D last.
    """
    coords = _coords(x, params, None)
    work, was_1d = _as_work(ground_state(system.n) if state is None else state)
    _check_dims(work, system)
    for xj in coords:
        _segment_inplace(work, system, xj, params)
    return _restore(work, was_1d)


def encode_adjoint(system: SpinSystem, x, params: EncodingParams, state) -> np.ndarray:
    """U(x)^dagger applied to ``state``; exact inverse of :func:`encode` up to rounding."""
    coords = _coords(x, params, None)
    work, was_1d = _as_work(state)
    _check_dims(work, system)
    for xj in coords[::-1]:
        _segment_inplace(work, system, xj, params, adjoint=True)
    return _restore(work, was_1d)


def encode_batch(system: SpinSystem, points: Sequence, params: EncodingParams, workers: int = 1) -> np.ndarray:
    """Encode many points at once; returns a (2**n, N) array, column i = U(points[i])|0>.

    Columns are independent, so with ``workers > 1`` the batch is split into
    contiguous chunks evolved on separate threads (the compiled kernels release the GIL).
    Every column goes through the same arithmetic as :func:`encode`.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("points must be a non-empty (N, D) array")
    n_pts = pts.shape[0]
    coords = _coords(pts.T, params, n_pts)

    def run(lo: int, hi: int) -> np.ndarray:
        work = np.zeros((system.dim, hi - lo), dtype=np.complex128)
        work[0, :] = 1.0
        for xj in coords[:, lo:hi]:
            _segment_inplace(work, system, xj, params)
        return work

    workers = max(1, int(workers))
    if workers == 1 or n_pts == 1:
        return run(0, n_pts)
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, n_pts, min(workers, n_pts) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda ab: run(*ab), zip(bounds[:-1], bounds[1:])))
    return np.concatenate(parts, axis=1)
