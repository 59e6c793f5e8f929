"""Intertwiners between the models, each with a numerical residual check."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, GaugeObstructionError, ValidationError
from .lattice import unitary_defect
from .models import (
    CC_CORNER_OF_COIN,
    BbParams,
    CcParams,
    QwParams,
    VerblunskiSeq,
    bb_factors,
    build_bb,
    build_cc_original,
    build_cc_qw,
    build_qw,
    one_sided_cmv,
    verblunski_from_measure,
)

DENSE_NORM_LIMIT = 4096
KRYLOV_RTOL = 1e-10
HOLONOMY_TOL = 1e-12


def residual_norm(diff):
    """``(norm, kind)``: operator 2-norm up to dimension 4096, Frobenius above."""
    if diff.shape[0] <= DENSE_NORM_LIMIT:
        dense = diff.toarray() if sp.issparse(diff) else np.asarray(diff)
        return float(np.linalg.norm(dense, 2)), "2"
    if sp.issparse(diff):
        return float(sp.linalg.norm(diff, "fro")), "fro"
    return float(np.linalg.norm(diff)), "fro"


def _conjugation_residual(i_map, u, target):
    return residual_norm(i_map @ u @ i_map.conj().T - target)


@dataclass(frozen=True)
class Verification:
    relation: str
    dimension: int
    residual: float
    norm_kind: str
    tol: float

    @property
    def passed(self) -> bool:
        return self.residual < self.tol

    def report(self) -> dict:
        return {
            "relation": self.relation,
            "dimension": self.dimension,
            "residual": self.residual,
            "norm_kind": self.norm_kind,
            "tolerance": self.tol,
            "pass": self.passed,
        }


# --- Chalker-Coddington ----------------------------------------------------


def cc_intertwiner(L: int) -> sp.csr_matrix:
    """Permutation ``l^2((Z/LZ)^2) -> C^4 (x) l^2((Z/(L/2)Z)^2)``.

    ``|2j> -> |-2> (x) |j>``, ``|2j+(1,0)> -> |+1> (x) |j>``,
    ``|2j+(1,1)> -> |+2> (x) |j>``, ``|2j+(0,1)> -> |-1> (x) |j>``.
    """
    if L % 2:
        raise ConfigurationError(f"the plaquette intertwiner needs even L, got {L}")
    half = L // 2
    j = np.stack(np.meshgrid(np.arange(half), np.arange(half), indexing="ij"), -1).reshape(-1, 2)
    j_index = np.arange(half * half)
    rows, cols = [], []
    for coin, corner in CC_CORNER_OF_COIN.items():
        site = 2 * j + np.array(corner)
        cols.append(np.ravel_multi_index(tuple(site.T), (L, L)))
        rows.append(coin * half * half + j_index)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(L * L, L * L))


def verify_cc(params: CcParams, tol=1e-12) -> Verification:
    """``|| I U(phi) I^{-1} - U~(phi) ||``."""
    i_map = cc_intertwiner(params.L)
    res, kind = _conjugation_residual(i_map, build_cc_original(params).matrix, build_cc_qw(params).matrix)
    return Verification("cc-qw", params.L**2, res, kind, tol)


# --- QW <-> BB ---------------------------------------------------------------


def qw_interleaving(L: int) -> sp.csr_matrix:
    """``|+1 (x) k> -> |2k>``, ``|-1 (x) k> -> |2k+1>``, from ``C^2 (x) l^2(Z/LZ)`` to ``l^2(Z/2LZ)``."""
    k = np.arange(L)
    rows = np.concatenate([2 * k, 2 * k + 1])
    cols = np.concatenate([k, L + k])
    return sp.csr_matrix((np.ones(2 * L), (rows, cols)), shape=(2 * L, 2 * L))


def qw_scattering_matrices(qw: QwParams) -> np.ndarray:
    """``S_{2j} = -i e^{-i eta_j} [[beta_j, conj(alpha_j)], [alpha_j, -conj(beta_j)]]``, ``S_{2j+1} = i sigma_x``."""
    alpha, beta, eta = qw.coin_parameters()
    phase = -1j * np.exp(-1j * eta)
    mats = np.empty((2 * qw.L, 2, 2), dtype=complex)
    mats[0::2, 0, 0] = phase * beta
    mats[0::2, 0, 1] = phase * np.conj(alpha)
    mats[0::2, 1, 0] = phase * alpha
    mats[0::2, 1, 1] = -phase * np.conj(beta)
    mats[1::2] = 1j * np.array([[0, 1], [1, 0]])
    return mats


def qw_to_bb(qw: QwParams) -> BbParams:
    """BB parameters of a one-dimensional walk in the interleaved basis."""
    if qw.d != 1:
        raise ConfigurationError("qw_to_bb needs a one-dimensional walk")
    return BbParams.from_matrices(qw_scattering_matrices(qw))


def verify_qw_bb(qw: QwParams, tol=1e-12) -> Verification:
    i_map = qw_interleaving(qw.L)
    res, kind = _conjugation_residual(i_map, build_qw(qw).matrix, build_bb(qw_to_bb(qw)).matrix)
    return Verification("qw-bb", 2 * qw.L, res, kind, tol)


def bb_square_root_walk(bb: BbParams) -> QwParams:
    """``alpha_k = i t_k e^{-i gamma_k}``, ``beta_k = (-1)^{k+1} r_k e^{-i nu_k}``, ``eta_k = theta_k``.

    Transmission feeds the diagonal of the coin, reflection the off-diagonal;
    with the coin ``e^{-i eta} [[alpha, -conj(beta)], [beta, conj(alpha)]]``
    this is the assignment for which the even block of ``U_QW^2`` is ``U_BB``.
    """
    k = np.arange(bb.L)
    alpha = 1j * bb.t * np.exp(-1j * bb.gamma)
    beta = -((-1.0) ** k) * bb.r * np.exp(-1j * bb.nu)
    return QwParams.from_coin_params(alpha, beta, bb.theta)


def parity_embeddings(L: int):
    """``(I_e^{-1}, I_o^{-1})`` as ``2L x L`` sparse isometries into ``C^2 (x) l^2(Z/LZ)``."""
    k = np.arange(L // 2)
    ones = np.ones(L)
    # I_e: |+1 (x) 2k> -> |2k>, |-1 (x) 2k> -> |2k+1>
    rows_e = np.concatenate([2 * k, L + 2 * k])
    cols_e = np.concatenate([2 * k, 2 * k + 1])
    # I_o: |+1 (x) 2k+1> -> |2k+1>, |-1 (x) 2k+1> -> |2k+2>
    rows_o = np.concatenate([2 * k + 1, L + 2 * k + 1])
    cols_o = np.concatenate([2 * k + 1, (2 * k + 2) % L])
    inv_e = sp.csr_matrix((ones, (rows_e, cols_e)), shape=(2 * L, L))
    inv_o = sp.csr_matrix((ones, (rows_o, cols_o)), shape=(2 * L, L))
    return inv_e, inv_o


def gauge_phases(gamma) -> np.ndarray:
    """``zeta_0 = 0``, ``zeta_k = -sum_{j<k} gamma_j``."""
    gamma = np.asarray(gamma, dtype=float)
    return -np.concatenate([[0.0], np.cumsum(gamma)[:-1]])


def holonomy(gamma) -> float:
    """``sum_k gamma_k`` reduced to ``(-pi, pi]``; zero iff the gauge closes on the torus."""
    total = float(np.sum(gamma))
    return float(np.angle(np.exp(1j * total)))


def gauge_operator(gamma) -> sp.csr_matrix:
    return sp.diags(np.exp(1j * gauge_phases(gamma))).tocsr()


@dataclass(frozen=True)
class SquareRootResult:
    qw: QwParams
    w: sp.csr_matrix
    residual: float
    norm_kind: str


def bb_to_qw_square(bb: BbParams) -> SquareRootResult:
    """Walk with ``U_QW^2 = W diag(U_BB, U_BB) W^{-1}``.

    ``W = I_e^{-1} (+) I_o^{-1} D_o^*(r, theta, nu, gamma + pi) V({pi})``, with
    the gauge factor ``V({pi})`` acting first on the second copy.
    """
    bb.validate()
    L = bb.L
    if L % 2 or L < 4:
        raise ConfigurationError(f"need an even truncation L >= 4, got {L}")
    qw = bb_square_root_walk(bb)
    inv_e, inv_o = parity_embeddings(L)
    _, d_o_shift = bb_factors(bb.replace(gamma=bb.gamma + np.pi).matrices())
    v_pi = gauge_operator(np.full(L, np.pi))
    w = sp.hstack([inv_e, inv_o @ d_o_shift.conj().T @ v_pi]).tocsr()
    u_bb = build_bb(bb).matrix
    u_qw = build_qw(qw).matrix
    doubled = sp.block_diag([u_bb, u_bb]).tocsr()
    res, kind = residual_norm(u_qw @ u_qw - w @ doubled @ w.conj().T)
    return SquareRootResult(qw, w, res, kind)


@dataclass(frozen=True)
class GaugeResult:
    v: sp.csr_matrix
    gauged: BbParams
    residual: float
    norm_kind: str


def gauge_transform(bb: BbParams, tol=HOLONOMY_TOL) -> GaugeResult:
    """Remove the ``gamma`` phases: ``V^{-1} U_BB(r, theta, nu, gamma) V = U_BB(r, theta, nu, 0)``.

    Raises :class:`GaugeObstructionError` carrying the holonomy when
    ``sum gamma_k`` is not a multiple of ``2 pi``.
    """
    hol = holonomy(bb.gamma)
    if abs(hol) > tol:
        raise GaugeObstructionError(
            f"sum of gamma_k is {hol:+.3e} mod 2pi; only wrap-consistent phases gauge away on the torus", hol
        )
    v = gauge_operator(bb.gamma)
    gauged = bb.replace(gamma=np.zeros(bb.L))
    res, kind = residual_norm(v.conj().T @ build_bb(bb).matrix @ v - build_bb(gauged).matrix)
    return GaugeResult(v, gauged, res, kind)


# --- cyclic operators -> CMV -----------------------------------------------


@dataclass(frozen=True)
class CmvRepresentation:
    seq: VerblunskiSeq
    moments: np.ndarray
    one_sided: np.ndarray
    two_sided: np.ndarray
    roundtrip_error: float


def krylov_rank_check(u, phi, rtol=KRYLOV_RTOL):
    """Raise unless ``phi`` is cyclic for ``u``; returns the singular-value ratio."""
    n = u.shape[0]
    krylov = np.empty((n, n), dtype=complex)
    vec = phi
    for k in range(n):
        krylov[:, k] = vec
        vec = u @ vec
    s = np.linalg.svd(krylov, compute_uv=False)
    ratio = s[-1] / s[0]
    if ratio <= rtol:
        defect = int(np.sum(s <= rtol * s[0]))
        raise ValidationError(
            f"vector is not cyclic: Krylov matrix has {defect} singular value(s) below {rtol:g} x largest",
            where=defect,
        )
    return ratio


def duplicate_cmv(one_sided: np.ndarray) -> np.ndarray:
    """``U^- (+) U^+`` on indices ``-n..-1, 0..n-1`` with ``<-(j+1)|U^-|-(k+1)> = <j|U^+|k>``."""
    n = one_sided.shape[0]
    out = np.zeros((2 * n, 2 * n), dtype=complex)
    rev = np.arange(n)[::-1]
    out[:n, :n] = one_sided[np.ix_(rev, rev)]
    out[n:, n:] = one_sided
    return out


def cyclic_to_cmv(u, phi, n_max=None) -> CmvRepresentation:
    """One-sided CMV model of a cyclic unitary ``u`` with cyclic vector ``phi``.

    Moments ``m_n = <phi, u^n phi> = int z^n dmu`` are passed to
    :func:`verblunski_from_measure` as ``conj(m_n) = int z^{-n} dmu``.
    """
    u = np.asarray(u, dtype=complex)
    phi = np.asarray(phi, dtype=complex)
    phi = phi / np.linalg.norm(phi)
    n = u.shape[0]
    if unitary_defect(u) > 1e-10:
        raise ValidationError("operator is not unitary")
    krylov_rank_check(u, phi)
    n_max = n if n_max is None else min(n_max, n)
    moments = np.empty(2 * n + 1, dtype=complex)
    vec = phi
    for k in range(2 * n + 1):
        moments[k] = np.vdot(phi, vec)
        vec = u @ vec
    seq = verblunski_from_measure(np.conj(moments), n_max)
    cmv = one_sided_cmv(seq)
    check = min(n_max, cmv.shape[0])
    power = np.eye(cmv.shape[0], dtype=complex)
    err = 0.0
    for k in range(check + 1):
        err = max(err, abs(power[0, 0] - moments[k]))
        power = cmv @ power
    return CmvRepresentation(seq, moments, cmv, duplicate_cmv(cmv), float(err))
