"""Builders for the concrete unitary network models.

* symmetric quantum walks ``U = S C`` on ``C^{2d} (x) l^2((Z/LZ)^d)``
* BB matrices ``U_BB = D_o D_e`` built from 2x2 scattering matrices
* CMV matrices, two-sided (a special BB family) and one-sided (from moments)
* the Chalker-Coddington model, in its plaquette form on ``l^2((Z/LZ)^2)``
  and in its quantum-walk form on ``C^4 (x) l^2((Z/(L/2)Z)^2)``
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ValidationError
from .lattice import (
    CoinField,
    LatticeShape,
    NetworkOperator,
    UnitaryMatrix,
    build_coin_operator,
    build_shift,
    compose,
)

PARAM_TOL = 1e-12
SZEGO_CUTOFF = 1e-12

# Coin positions of the labels +1, -1, +2, -2 in C^4.
_P1, _M1, _P2, _M2 = 0, 1, 2, 3


def coin_from_params(alpha, beta, eta) -> UnitaryMatrix:
    """``e^{-i eta} [[alpha, -conj(beta)], [beta, conj(alpha)]]``."""
    alpha, beta = complex(alpha), complex(beta)
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-10:
        raise ValidationError(f"|alpha|^2 + |beta|^2 = {abs(alpha) ** 2 + abs(beta) ** 2} != 1")
    entries = np.exp(-1j * eta) * np.array([[alpha, -np.conj(beta)], [beta, np.conj(alpha)]])
    return UnitaryMatrix.from_parameters(entries)


def coin_parameters(coin):
    """Inverse of :func:`coin_from_params`, with ``eta`` in ``(-pi/2, pi/2]``."""
    coin = np.asarray(coin, dtype=complex)
    eta = -np.angle(np.linalg.det(coin)) / 2
    if eta <= -np.pi / 2:
        eta += np.pi
    scaled = np.exp(1j * eta) * coin
    return complex(scaled[0, 0]), complex(scaled[1, 0]), float(eta)


_SQ = 1 / np.sqrt(2)
NAMED_COINS = {
    # alpha = beta = 1/sqrt(2), eta = 0 in the (alpha, beta, eta) family
    "hadamard": np.array([[_SQ, -_SQ], [_SQ, _SQ]], dtype=complex),
    "identity": np.eye(2, dtype=complex),
    # |alpha| = 0, beta = 1, eta = 0
    "antidiagonal": np.array([[0, -1], [1, 0]], dtype=complex),
}


def named_coin(name: str, d: int = 1) -> np.ndarray:
    """A named 2x2 coin, repeated block-diagonally for ``d > 1``."""
    try:
        block = NAMED_COINS[name]
    except KeyError:
        raise ConfigurationError(f"unknown coin {name!r}; known: {sorted(NAMED_COINS)}") from None
    return np.kron(np.eye(d), block)


@dataclass(frozen=True)
class QwParams:
    d: int
    coin_field: CoinField

    def __post_init__(self):
        if self.coin_field.coin_dim != 2 * self.d:
            raise ConfigurationError(
                f"QW in d={self.d} needs {2 * self.d}x{2 * self.d} coins, got {self.coin_field.coin_dim}"
            )

    @classmethod
    def homogeneous(cls, coin, d: int, L: int) -> "QwParams":
        return cls(d, CoinField.homogeneous(coin, d, L))

    @classmethod
    def from_coin_params(cls, alpha, beta, eta) -> "QwParams":
        """One-dimensional walk with ``C(j) = e^{-i eta_j}[[alpha_j, -conj(beta_j)], [beta_j, conj(alpha_j)]]``."""
        alpha = np.asarray(alpha, dtype=complex)
        beta = np.asarray(beta, dtype=complex)
        eta = np.broadcast_to(np.asarray(eta, dtype=float), alpha.shape)
        norm = np.abs(alpha) ** 2 + np.abs(beta) ** 2
        bad = np.flatnonzero(np.abs(norm - 1) > 1e-10)
        if bad.size:
            raise ValidationError(f"|alpha_j|^2 + |beta_j|^2 != 1 at j={bad[0]}", where=int(bad[0]))
        phase = np.exp(-1j * eta)[:, None, None]
        blocks = phase * np.stack(
            [np.stack([alpha, -beta.conj()], -1), np.stack([beta, alpha.conj()], -1)], -2
        )
        return cls(1, CoinField(blocks, 1))

    @property
    def L(self) -> int:
        return self.coin_field.L

    def coin_parameters(self):
        """``(alpha, beta, eta)`` arrays of a one-dimensional walk."""
        if self.d != 1:
            raise ConfigurationError("coin parameters are defined for d = 1 only")
        params = [coin_parameters(c) for c in self.coin_field.flat_blocks()]
        alpha, beta, eta = (np.array(v) for v in zip(*params))
        return alpha, beta, eta


def build_qw(params: QwParams, shape: LatticeShape | None = None) -> NetworkOperator:
    """The walk ``U = S C``."""
    if shape is None:
        shape = LatticeShape(params.d, params.L, 2 * params.d)
    if shape.coin_dim != 2 * params.d:
        raise ConfigurationError(f"QW needs coin_dim = {2 * params.d}, lattice has {shape.coin_dim}")
    op = compose(build_shift(shape), build_coin_operator(params.coin_field, shape))
    return NetworkOperator(op.shape, op.matrix, 1)


# --- BB matrices -----------------------------------------------------------


def scattering_matrix(r, t, theta, nu, gamma) -> np.ndarray:
    """2x2 scattering matrix in the ordered basis ``{|k>, |k+1>}``; vectorized over leading axes."""
    r, t, theta, nu, gamma = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (r, t, theta, nu, gamma)))
    out = np.empty(r.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = r * np.exp(-1j * nu)
    out[..., 0, 1] = 1j * t * np.exp(1j * gamma)
    out[..., 1, 0] = 1j * t * np.exp(-1j * gamma)
    out[..., 1, 1] = r * np.exp(1j * nu)
    return np.exp(-1j * theta)[..., None, None] * out


@dataclass(frozen=True)
class BbParams:
    """Scattering parameters ``(r_k, t_k, theta_k, nu_k, gamma_k)``, ``k`` in ``Z/LZ``."""

    r: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    nu: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        arrays = np.broadcast_arrays(*(np.atleast_1d(np.asarray(getattr(self, f), dtype=float))
                                       for f in ("r", "t", "theta", "nu", "gamma")))
        for name, arr in zip(("r", "t", "theta", "nu", "gamma"), arrays):
            arr = np.array(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def validate(self, tol=PARAM_TOL):
        for name in ("r", "t"):
            arr = getattr(self, name)
            bad = np.flatnonzero((arr < -tol) | (arr > 1 + tol))
            if bad.size:
                raise ValidationError(f"{name}_{bad[0]} = {arr[bad[0]]} outside [0, 1]", where=int(bad[0]))
        defect = np.abs(self.r**2 + self.t**2 - 1)
        bad = np.flatnonzero(defect > tol)
        if bad.size:
            k = int(bad[0])
            raise ValidationError(
                f"r_{k}^2 + t_{k}^2 = {self.r[k] ** 2 + self.t[k] ** 2:.6g} != 1", where=k
            )

    @property
    def L(self) -> int:
        return self.r.size

    def matrices(self) -> np.ndarray:
        return scattering_matrix(self.r, self.t, self.theta, self.nu, self.gamma)

    def replace(self, **changes) -> "BbParams":
        fields = {f: getattr(self, f) for f in ("r", "t", "theta", "nu", "gamma")}
        fields.update(changes)
        return BbParams(**fields)

    @classmethod
    def from_matrices(cls, mats) -> "BbParams":
        """Parameters of arbitrary 2x2 unitaries, shape ``(L, 2, 2)``."""
        mats = np.asarray(mats, dtype=complex)
        theta = -np.angle(np.linalg.det(mats)) / 2
        scaled = np.exp(1j * theta)[:, None, None] * mats
        r = np.clip(np.abs(scaled[:, 0, 0]), 0.0, 1.0)
        t = np.sqrt(1 - r**2)
        nu = -np.angle(scaled[:, 0, 0])
        gamma = np.where(t > 0, -np.angle(scaled[:, 1, 0] / 1j), 0.0)
        return cls(r, t, theta, nu, gamma)

    @classmethod
    def random(cls, L: int, rng) -> "BbParams":
        r = rng.uniform(0, 1, L)
        return cls(r, np.sqrt(1 - r**2), *rng.uniform(0, 2 * np.pi, (3, L)))


def _pair_blocks(mats, L, offset):
    """Sparse direct sum of 2x2 blocks acting on pairs ``(2k+offset, 2k+offset+1) mod L``."""
    k = np.arange(L // 2)
    first = (2 * k + offset) % L
    second = (2 * k + offset + 1) % L
    rows = np.concatenate([first, first, second, second])
    cols = np.concatenate([first, second, first, second])
    vals = np.concatenate([mats[:, 0, 0], mats[:, 0, 1], mats[:, 1, 0], mats[:, 1, 1]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(L, L))


def bb_factors(mats):
    """``(D_e, D_o)`` as sparse matrices from scattering matrices ``S_k``, ``k`` mod ``L``."""
    mats = np.asarray(mats, dtype=complex)
    L = mats.shape[0]
    if L % 2:
        raise ConfigurationError(f"BB matrices need an even truncation, got L={L}")
    return _pair_blocks(mats[0::2], L, 0), _pair_blocks(mats[1::2], L, 1)


def bb_from_matrices(mats) -> NetworkOperator:
    d_e, d_o = bb_factors(mats)
    L = d_e.shape[0]
    return NetworkOperator(LatticeShape(1, L, 1), (d_o @ d_e).tocsr())


def build_bb(params: BbParams, shape: LatticeShape | None = None, tol=PARAM_TOL) -> NetworkOperator:
    """``U_BB = D_o D_e``; ``D_o`` wraps the pair ``(L-1, 0)``."""
    params.validate(tol)
    if shape is not None and (shape.d, shape.coin_dim, shape.L) != (1, 1, params.L):
        raise ConfigurationError(f"BB matrices live on d=1, coin_dim=1, L={params.L}; got {shape}")
    return bb_from_matrices(params.matrices())


def bb_pattern(L: int) -> np.ndarray:
    """Boolean mask of the 2x2-block five-diagonal pattern of a BB matrix."""
    mask = np.zeros((L, L), dtype=bool)
    for k in range(L // 2):
        cols = [2 * k, 2 * k + 1]
        rows = [(2 * k + s) % L for s in (-1, 0, 1, 2)]
        mask[np.ix_(rows, cols)] = True
    return mask


# --- CMV matrices ----------------------------------------------------------


@dataclass(frozen=True)
class VerblunskiSeq:
    """Verblunski coefficients.

    ``terminated`` marks a one-sided sequence whose last coefficient has unit
    modulus because the underlying measure has finite support.
    """

    coefficients: np.ndarray
    two_sided: bool = True
    terminated: bool = False

    def __post_init__(self):
        a = np.array(self.coefficients, dtype=complex).reshape(-1)
        a.setflags(write=False)
        object.__setattr__(self, "coefficients", a)

    def __len__(self):
        return self.coefficients.size

    def validate(self, tol=PARAM_TOL):
        mod = np.abs(self.coefficients)
        bad = np.flatnonzero(mod > 1 + tol)
        if bad.size:
            raise ValidationError(f"|a_{bad[0]}| = {mod[bad[0]]} > 1", where=int(bad[0]))


def cmv_scattering_matrices(a) -> np.ndarray:
    """``S_k = [[-|a_k| e^{i mu_k}, rho_k], [rho_k, |a_k| e^{-i mu_k}]]`` with ``a_k = |a_k| e^{i mu_k}``."""
    a = np.asarray(a, dtype=complex)
    rho = np.sqrt(np.clip(1 - np.abs(a) ** 2, 0.0, None))
    mats = np.empty(a.shape + (2, 2), dtype=complex)
    mats[..., 0, 0] = -a
    mats[..., 0, 1] = rho
    mats[..., 1, 0] = rho
    mats[..., 1, 1] = np.conj(a)
    return mats


def cmv_bb_params(a) -> BbParams:
    """BB parameters of a CMV matrix: ``theta = pi/2``, ``nu = pi/2 - mu``, ``r = |a|``, ``gamma = 0``."""
    a = np.asarray(a, dtype=complex)
    r = np.abs(a)
    zero = np.zeros_like(r)
    return BbParams(r, np.sqrt(np.clip(1 - r**2, 0, None)), zero + np.pi / 2, np.pi / 2 - np.angle(a), zero)


def build_cmv(seq: VerblunskiSeq, shape: LatticeShape | None = None) -> NetworkOperator:
    """Two-sided CMV matrix on ``l^2(Z/LZ)`` with coefficients indexed mod ``L``."""
    seq.validate()
    if not seq.two_sided:
        raise ConfigurationError("build_cmv needs a two-sided sequence; use one_sided_cmv")
    if shape is not None and (shape.d, shape.coin_dim, shape.L) != (1, 1, len(seq)):
        raise ConfigurationError(f"CMV matrix lives on d=1, coin_dim=1, L={len(seq)}; got {shape}")
    return bb_from_matrices(cmv_scattering_matrices(seq.coefficients))


def one_sided_cmv(seq: VerblunskiSeq) -> np.ndarray:
    """Dense ``n x n`` truncation of the one-sided CMV matrix ``D_o D_e`` with ``S_{-1} = 1``.

    Unitary when the last coefficient has unit modulus; otherwise the
    truncation is exact only for entries that do not touch the last row/column.
    """
    a = seq.coefficients
    n = a.size
    mats = cmv_scattering_matrices(a)
    d_e = np.zeros((n + 1, n + 1), dtype=complex)
    d_o = np.zeros((n + 1, n + 1), dtype=complex)
    d_o[0, 0] = 1.0
    for k in range(n):
        target = d_e if k % 2 == 0 else d_o
        target[k : k + 2, k : k + 2] = mats[k]
    return (d_o @ d_e)[:n, :n]


def measure_moments(atoms, weights, n: int) -> np.ndarray:
    """Trigonometric moments ``c_m = sum_i w_i z_i^{-m}``, ``m = 0..n``, of a discrete measure."""
    atoms = np.asarray(atoms, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    m = np.arange(n + 1)
    return (weights[None, :] * atoms[None, :] ** (-m[:, None])).sum(axis=1)


def verblunski_from_measure(moments, n_max: int) -> VerblunskiSeq:
    """Verblunski coefficients from trigonometric moments ``c_m = int z^{-m} dmu``.

    Szego recursion for the monic orthogonal polynomials,
    ``Phi_{k+1}(z) = z Phi_k(z) - conj(g_k) Phi_k^*(z)``, run on coefficient
    vectors with the Toeplitz Gram matrix ``<z^i, z^j> = c_{i-j}``.  The
    returned coefficient is ``a_k = Phi_{k+1}(0)``, the convention under which
    the one-sided CMV matrix of :func:`one_sided_cmv` has ``<e_0, U^n e_0> =
    int z^n dmu``.  The recursion stops early, with ``terminated=True``, when
    ``||Phi_{k+1}||^2`` falls below ``1e-12`` times ``c_0`` (finitely supported
    measure); the last coefficient is then normalized to unit modulus.
    """
    c = np.asarray(moments, dtype=complex)
    if c.size < n_max + 1:
        raise ConfigurationError(f"need moments c_0..c_{n_max}, got {c.size}")
    if c[0].real <= 0:
        raise ValidationError("c_0 must be positive")
    size = n_max + 1
    idx = np.arange(size)
    diff = idx[:, None] - idx[None, :]
    gram = np.where(diff >= 0, c[np.abs(diff)], np.conj(c[np.abs(diff)]))

    def inner(p, q):
        return np.conj(p) @ gram @ q

    phi = np.zeros(size, dtype=complex)
    phi[0] = 1.0
    norm2 = c[0].real
    coeffs = []
    terminated = False
    for k in range(n_max):
        z_phi = np.roll(phi, 1)
        phi_star = np.zeros(size, dtype=complex)
        phi_star[: k + 1] = np.conj(phi[: k + 1][::-1])
        one = np.zeros(size, dtype=complex)
        one[0] = 1.0
        g_bar = inner(one, z_phi) / norm2
        phi = z_phi - g_bar * phi_star
        a_k = phi[0]
        norm2 = norm2 * (1 - abs(a_k) ** 2)
        if norm2 <= SZEGO_CUTOFF * c[0].real or abs(a_k) >= 1:
            coeffs.append(a_k / abs(a_k) if abs(a_k) > 0 else 1.0)
            terminated = True
            break
        coeffs.append(a_k)
    return VerblunskiSeq(np.array(coeffs, dtype=complex), two_sided=False, terminated=terminated)


# --- Chalker-Coddington ----------------------------------------------------


@dataclass(frozen=True)
class CcParams:
    """Angle ``phi`` in ``[0, pi/2]`` and unit phases ``D`` on ``(Z/LZ)^2``."""

    phi: float
    d_phases: np.ndarray

    def __post_init__(self):
        if not (-1e-14 <= self.phi <= np.pi / 2 + 1e-14):
            raise ConfigurationError(f"phi = {self.phi} outside [0, pi/2]")
        phases = np.array(self.d_phases, dtype=complex)
        if phases.ndim != 2 or phases.shape[0] != phases.shape[1]:
            raise ConfigurationError(f"D must be an L x L array of phases, got {phases.shape}")
        if phases.shape[0] % 2:
            raise ConfigurationError(f"Chalker-Coddington truncation must be even, got L={phases.shape[0]}")
        bad = np.argwhere(np.abs(np.abs(phases) - 1) > PARAM_TOL)
        if bad.size:
            raise ValidationError(f"D{tuple(bad[0])} is not a unit phase", where=tuple(bad[0]))
        phases.setflags(write=False)
        object.__setattr__(self, "d_phases", phases)

    @classmethod
    def uniform(cls, phi: float, L: int) -> "CcParams":
        if L % 2:
            raise ConfigurationError(f"Chalker-Coddington truncation must be even, got L={L}")
        return cls(phi, np.ones((L, L), dtype=complex))

    @classmethod
    def random(cls, phi: float, L: int, rng) -> "CcParams":
        return cls(phi, np.exp(1j * rng.uniform(0, 2 * np.pi, (L, L))))

    @property
    def L(self) -> int:
        return self.d_phases.shape[0]


# Plaquette corners relative to 2j, listed in rotation order b0 -> b1 -> b2 -> b3 -> b0.
_ANTICLOCKWISE = np.array([(0, 0), (1, 0), (1, 1), (0, 1)])
_CLOCKWISE = np.array([(0, 0), (0, -1), (-1, -1), (-1, 0)])


def _plaquette_rotation(L: int, corners) -> sp.csr_matrix:
    half = L // 2
    j = np.stack(np.meshgrid(np.arange(half), np.arange(half), indexing="ij"), -1).reshape(-1, 2)
    rows, cols = [], []
    for b in range(4):
        src = np.mod(2 * j + corners[b], L)
        dst = np.mod(2 * j + corners[(b + 1) % 4], L)
        cols.append(np.ravel_multi_index(tuple(src.T), (L, L)))
        rows.append(np.ravel_multi_index(tuple(dst.T), (L, L)))
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size, dtype=complex), (rows, cols)), shape=(L * L, L * L))


def cc_rotations(L: int):
    """``(S_anticlockwise, S_clockwise)`` on ``l^2((Z/LZ)^2)``."""
    if L % 2:
        raise ConfigurationError(f"Chalker-Coddington truncation must be even, got L={L}")
    return _plaquette_rotation(L, _ANTICLOCKWISE), _plaquette_rotation(L, _CLOCKWISE)


def build_cc_original(params: CcParams) -> NetworkOperator:
    """``U(phi) = D (cos(phi) S_anticlockwise + i sin(phi) S_clockwise)``."""
    L = params.L
    s_acw, s_cw = cc_rotations(L)
    t = np.cos(params.phi) * s_acw + 1j * np.sin(params.phi) * s_cw
    d = sp.diags(params.d_phases.reshape(-1))
    return NetworkOperator(LatticeShape(2, L, 1), (d @ t).tocsr())


def cc_rotation_coin() -> np.ndarray:
    """``R |+-1> = |+-2>``, ``R |+-2> = |-+1>`` in coin positions ``(+1, -1, +2, -2)``."""
    r = np.zeros((4, 4), dtype=complex)
    r[_P2, _P1] = r[_M2, _M1] = r[_M1, _P2] = r[_P1, _M2] = 1.0
    return r


# Original site offset (from 2j) carried by each coin position under the intertwiner.
CC_CORNER_OF_COIN = {_M2: (0, 0), _P1: (1, 0), _P2: (1, 1), _M1: (0, 1)}


def cc_coin_phases(params: CcParams) -> np.ndarray:
    """Diagonal ``D(j)`` of the walk form, shape ``(L/2, L/2, 4)``."""
    half = params.L // 2
    out = np.empty((half, half, 4), dtype=complex)
    for pos, (dx, dy) in CC_CORNER_OF_COIN.items():
        out[..., pos] = params.d_phases[dx::2, dy::2]
    return out


def build_cc_qw(params: CcParams) -> NetworkOperator:
    """``D (cos(phi) R (x) 1 + i sin(phi) (R^{-1} (x) 1) S)`` on ``C^4 (x) l^2((Z/(L/2)Z)^2)``."""
    half = params.L // 2
    if half < 4 or half % 2:
        raise ConfigurationError(f"walk form needs L/2 even and >= 4, got L={params.L}")
    shape = LatticeShape(2, half, 4)
    r = cc_rotation_coin()
    eye_sites = sp.identity(shape.n_sites, dtype=complex, format="csr")
    shift = build_shift(shape).matrix
    t = np.cos(params.phi) * sp.kron(r, eye_sites) + 1j * np.sin(params.phi) * (sp.kron(r.conj().T, eye_sites) @ shift)
    phases = cc_coin_phases(params)
    d = sp.diags(np.moveaxis(phases, -1, 0).reshape(-1))
    return NetworkOperator(shape, (d @ t).tocsr(), 1)
