"""Diagnostics on truncated operators: eigenphases, evolution, moments, spectral measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .errors import ConfigurationError, ValidationError, WrapError
from .fibered import ArcSet
from .lattice import NetworkOperator, StateVector, _centered
from .phases import TWO_PI, to_unit_interval

DENSE_LIMIT = 16384
RECONSTRUCTION_TOL = 1e-10
BURN_IN = 20
MIN_FIT_STEPS = 50


@dataclass(frozen=True)
class Diagonalization:
    phases: np.ndarray
    vectors: np.ndarray
    residual: float


def _dense(u) -> np.ndarray:
    return u.dense() if isinstance(u, NetworkOperator) else np.asarray(u, dtype=complex)


def diagonalize(u) -> Diagonalization:
    """Complex Schur form of a unitary; phases sorted in ``[0, 2 pi)``.

    For a normal matrix the Schur factor is diagonal, so ``Z`` is an
    orthonormal eigenbasis.
    """
    n = u.shape.dim if isinstance(u, NetworkOperator) else np.shape(u)[0]
    if n > DENSE_LIMIT:
        raise ConfigurationError(
            f"dimension {n} exceeds the dense limit {DENSE_LIMIT}; for homogeneous models use Symbol.grid_phases"
        )
    dense = _dense(u)
    t, z = la.schur(dense, output="complex")
    lam = np.diag(t)
    residual = float(np.linalg.norm(dense - (z * lam) @ z.conj().T, 2))
    if residual > RECONSTRUCTION_TOL:
        raise ValidationError(f"eigen-reconstruction residual {residual:.2e} exceeds {RECONSTRUCTION_TOL:g}")
    phases = to_unit_interval(np.angle(lam))
    order = np.argsort(phases, kind="stable")
    return Diagonalization(phases[order], z[:, order], residual)


# --- time evolution ------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Site marginals ``|psi_t(j)|^2`` (summed over the coin) for ``t = 0..T``."""

    probabilities: np.ndarray
    norms: np.ndarray
    offsets: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.probabilities.shape[0])

    def moment(self, k: int) -> np.ndarray:
        """``<|X|^k>`` per step, ``X`` measured from the start site (Euclidean length in d > 1)."""
        r = np.linalg.norm(self.offsets, axis=-1)
        return self.probabilities @ r**k

    def mean(self) -> np.ndarray:
        return self.probabilities @ self.offsets

    def second_moment(self) -> np.ndarray:
        return self.moment(2)

    def support_radius(self, atol=1e-14) -> np.ndarray:
        r = np.abs(self.offsets).sum(-1)
        return np.array([r[p > atol].max() if np.any(p > atol) else 0 for p in self.probabilities])


def evolve(u: NetworkOperator, psi0: StateVector, T: int, center=None) -> Trajectory:
    """Apply ``u`` ``T`` times; positions are representatives in ``(-L/2, L/2]`` around ``center``.

    ``center`` defaults to the most probable site of ``psi0``.
    """
    shape = u.shape
    reach = max(u.bandwidth, 1) * T
    if reach > shape.L // 2 - 2:
        raise WrapError(f"T={T} with bandwidth {u.bandwidth} reaches {reach} > L/2 - 2 = {shape.L // 2 - 2}")
    if psi0.shape != shape:
        raise ConfigurationError("state and operator live on different lattices")
    if center is None:
        center = shape.site_coords(int(np.argmax(psi0.site_probabilities())))
    offsets = _centered(shape.site_coords(np.arange(shape.n_sites)) - np.asarray(center), shape.L)
    vec = psi0.amplitudes.copy()
    probs = np.empty((T + 1, shape.n_sites))
    norms = np.empty(T + 1)
    mat = u.matrix
    for t in range(T + 1):
        amp2 = np.abs(vec.reshape(shape.coin_dim, shape.n_sites)) ** 2
        probs[t] = amp2.sum(0)
        norms[t] = np.sqrt(amp2.sum())
        if t < T:
            vec = mat @ vec
    return Trajectory(probs, norms, offsets)


def spreading_exponent(traj: Trajectory, burn_in=BURN_IN, min_steps=MIN_FIT_STEPS) -> float:
    """Least-squares slope of ``log <X^2>`` against ``log t`` for ``t >= burn_in``.

    Steps with ``<X^2> = 0`` carry no logarithm and are left out of the fit.
    """
    m2 = traj.second_moment()
    t = traj.times
    sel = t >= max(burn_in, 1)
    if sel.sum() < min_steps:
        raise ValidationError(f"need at least {min_steps} steps after a burn-in of {burn_in}, got {int(sel.sum())}")
    t, m2 = t[sel], m2[sel]
    ok = m2 > 0
    if ok.sum() < 2:
        raise ValidationError("degenerate trajectory: <X^2> vanishes after the burn-in")
    return float(np.polyfit(np.log(t[ok]), np.log(m2[ok]), 1)[0])


# --- spectral measures -------------------------------------------------------------


@dataclass(frozen=True)
class SpectralDensity:
    theta: np.ndarray
    density: np.ndarray
    autocorrelation: np.ndarray

    @property
    def mass(self) -> float:
        return float(np.mean(self.density) * TWO_PI)

    def mass_in(self, arcs: ArcSet) -> float:
        return float(np.mean(np.where(arcs.contains(self.theta), self.density, 0.0)) * TWO_PI)


def autocorrelation(u, psi, n: int) -> np.ndarray:
    """``c_k = <psi, u^k psi>`` for ``k = 0..n-1``."""
    mat = u.matrix if isinstance(u, NetworkOperator) else np.asarray(u, dtype=complex)
    psi = psi.amplitudes if isinstance(psi, StateVector) else np.asarray(psi, dtype=complex)
    out = np.empty(n, dtype=complex)
    vec = psi
    for k in range(n):
        out[k] = np.vdot(psi, vec)
        vec = mat @ vec
    return out


def spectral_measure_estimate(u, psi, n_max: int, n_grid=2048) -> SpectralDensity:
    """Fejer-smoothed spectral density of ``psi``.

    ``rho(theta) = (1/2pi) sum_{|k| < n_max} (1 - |k|/n_max) c_k e^{-i k theta}``,
    nonnegative with total mass ``c_0``. The kernel width is ``~ 2 pi / n_max``.
    """
    if isinstance(u, NetworkOperator) and max(u.bandwidth, 1) * n_max >= u.shape.L // 2:
        raise WrapError(f"n_max={n_max} reaches across the torus (L={u.shape.L})")
    if n_grid < 2 * n_max:
        raise ConfigurationError("n_grid must be at least 2 n_max")
    c = autocorrelation(u, psi, n_max)
    weights = 1 - np.arange(n_max) / n_max
    coeff = np.zeros(n_grid, dtype=complex)
    coeff[:n_max] = weights * c
    coeff[n_grid - n_max + 1:] = (weights[1:] * c[1:]).conj()[::-1]
    # sum_k a_k e^{-i k theta_j} with theta_j = 2 pi j / n_grid
    density = np.fft.fft(coeff).real / TWO_PI
    theta = TWO_PI * np.arange(n_grid) / n_grid
    return SpectralDensity(theta, density, c)


# --- counting ----------------------------------------------------------------------


@dataclass(frozen=True)
class ArcStatistics:
    arcs: tuple
    counts: tuple
    mean_gap: tuple
    min_gap: tuple
    max_gap: tuple

    @property
    def total(self) -> int:
        return int(sum(self.counts))


def arc_eigen_statistics(u, arcs: ArcSet, tol=1e-12) -> ArcStatistics:
    """Eigenphase counts per arc and nearest-neighbour gap statistics inside each arc."""
    phases = u if isinstance(u, np.ndarray) and u.ndim == 1 else diagonalize(u).phases
    counts, means, mins, maxs = [], [], [], []
    for lo, hi in arcs:
        sub = ArcSet(((lo, hi),))
        inside = np.sort((phases[sub.contains(phases, tol=tol)] - lo) % TWO_PI)
        counts.append(int(inside.size))
        gaps = np.diff(inside)
        means.append(float(gaps.mean()) if gaps.size else np.nan)
        mins.append(float(gaps.min()) if gaps.size else np.nan)
        maxs.append(float(gaps.max()) if gaps.size else np.nan)
    return ArcStatistics(tuple(arcs), tuple(counts), tuple(means), tuple(mins), tuple(maxs))
