import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import unitary_group

from unitary_networks.equivalence import (
    Verification, bb_square_root_walk, bb_to_qw_square, cc_intertwiner, cyclic_to_cmv, duplicate_cmv,
    gauge_operator, gauge_phases, gauge_transform, holonomy, krylov_rank_check, parity_embeddings,
    qw_interleaving, qw_scattering_matrices, qw_to_bb, verify_cc, verify_qw_bb,
)
from unitary_networks.errors import GaugeObstructionError, ValidationError
from unitary_networks.models import BbParams, CcParams, QwParams, bb_pattern, build_bb, build_qw, named_coin
from unitary_networks.phases import eigenphases, multiset_deviation

INTERTWINER_TOL = 1e-13
RESIDUAL_TOL = 1e-12
SQUARE_TOL = 1e-11
PHASE_TOL = 1e-11
MOMENT_TOL = 1e-8
EXACT_TOL = 1e-15


def rng(seed=0):
    return np.random.default_rng(seed)


def random_qw(L, seed):
    g = rng(seed)
    alpha = g.normal(size=L) + 1j * g.normal(size=L)
    beta = g.normal(size=L) + 1j * g.normal(size=L)
    n = np.sqrt(np.abs(alpha) ** 2 + np.abs(beta) ** 2)
    return QwParams.from_coin_params(alpha / n, beta / n, g.uniform(0, 2 * np.pi, L))


def wrap_consistent(gamma):
    return gamma - gamma.sum() / gamma.size


# --- Chalker-Coddington -----------------------------------------------------------


def test_cc_intertwiner_is_permutation():
    i_map = cc_intertwiner(8).toarray()
    np.testing.assert_array_equal(i_map.conj().T @ i_map, np.eye(64))
    assert set(np.unique(i_map)) == {0, 1}


@pytest.mark.parametrize("phi,random_d", [(np.pi / 4, False), (np.pi / 3, True), (0.0, True), (np.pi / 2, True)])
def test_cc_equivalence(phi, random_d):
    params = CcParams.random(phi, 8, rng(1)) if random_d else CcParams.uniform(phi, 8)
    ver = verify_cc(params)
    assert ver.residual < INTERTWINER_TOL
    assert ver.norm_kind == "2"
    assert ver.passed


def test_cc_equivalence_larger_torus():
    assert verify_cc(CcParams.random(0.4, 16, rng(2))).residual < INTERTWINER_TOL


# --- QW -> BB ---------------------------------------------------------------------


def test_interleaving_is_permutation():
    i_map = qw_interleaving(8).toarray()
    np.testing.assert_array_equal(i_map @ i_map.T, np.eye(16))


def test_hadamard_walk_is_bb():
    qw = QwParams.homogeneous(named_coin("hadamard"), 1, 8)
    assert verify_qw_bb(qw).residual < INTERTWINER_TOL


def test_identity_coin_plug_in():
    qw = QwParams.homogeneous(np.eye(2), 1, 8)
    assert verify_qw_bb(qw).residual < EXACT_TOL
    mats = qw_scattering_matrices(qw)
    np.testing.assert_allclose(mats[0::2], np.broadcast_to(-1j * np.array([[0, 1], [1, 0]]), (8, 2, 2)),
                               atol=EXACT_TOL)


def test_scattering_matrices_formula():
    qw = random_qw(8, 3)
    alpha, beta, eta = qw.coin_parameters()
    mats = qw_scattering_matrices(qw)
    odd = 1j * np.array([[0, 1], [1, 0]])
    np.testing.assert_allclose(mats[1::2], np.broadcast_to(odd, (8, 2, 2)), atol=EXACT_TOL)
    even = -1j * np.exp(-1j * eta)[:, None, None] * np.stack(
        [np.stack([beta, alpha.conj()], -1), np.stack([alpha, -beta.conj()], -1)], -2)
    np.testing.assert_allclose(mats[0::2], even, atol=1e-14)


def test_qw_to_bb_pattern_and_residual():
    qw = random_qw(64, 4)
    bb = qw_to_bb(qw)
    u = build_bb(bb).dense()
    assert not np.any((np.abs(u) > 1e-15) & ~bb_pattern(128))
    assert verify_qw_bb(qw).residual < RESIDUAL_TOL


# --- square root --------------------------------------------------------------------


def test_square_root_random():
    res = bb_to_qw_square(BbParams.random(16, rng(5)))
    assert res.residual < RESIDUAL_TOL
    w = res.w.toarray()
    np.testing.assert_allclose(w.conj().T @ w, np.eye(w.shape[0]), atol=INTERTWINER_TOL)


def test_square_root_trivial_scattering():
    L = 8
    bb = BbParams(np.ones(L), np.zeros(L), np.zeros(L), np.zeros(L), np.zeros(L))
    assert bb_to_qw_square(bb).residual < EXACT_TOL


def test_square_root_parameters():
    # (alpha, beta, eta) are recovered only up to a common sign, so compare coins
    bb = BbParams.random(8, rng(6))
    k = np.arange(8)
    expected = QwParams.from_coin_params(1j * bb.t * np.exp(-1j * bb.gamma),
                                         (-1.0) ** (k + 1) * bb.r * np.exp(-1j * bb.nu), bb.theta)
    np.testing.assert_allclose(bb_square_root_walk(bb).coin_field.blocks, expected.coin_field.blocks, atol=1e-14)


def test_square_root_spectral_doubling():
    bb = BbParams.random(32, rng(7))
    u = build_qw(bb_square_root_walk(bb)).dense()
    phases_bb = eigenphases(build_bb(bb).dense())
    dev = multiset_deviation(eigenphases(u @ u), np.concatenate([phases_bb, phases_bb]))
    assert dev < PHASE_TOL


def test_parity_embeddings_cover_walk_space():
    inv_e, inv_o = parity_embeddings(8)
    w = np.hstack([inv_e.toarray(), inv_o.toarray()])
    np.testing.assert_array_equal(w.T @ w, np.eye(16))


# --- gauge ------------------------------------------------------------------------


def test_gauge_uniform_phases():
    L = 16
    gamma = np.full(L, 2 * np.pi / L)
    zeta = gauge_phases(gamma)
    np.testing.assert_allclose(zeta[:3], [0, -2 * np.pi / L, -4 * np.pi / L])
    bb = BbParams.random(L, rng(8)).replace(gamma=gamma)
    assert gauge_transform(bb).residual < INTERTWINER_TOL


def test_gauge_zero_is_identity():
    bb = BbParams.random(8, rng(9)).replace(gamma=np.zeros(8))
    res = gauge_transform(bb)
    np.testing.assert_array_equal(res.v.toarray(), np.eye(8))
    assert res.residual == 0


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_gauge_cocycle(seed):
    g = rng(seed)
    a = wrap_consistent(g.uniform(0, 2 * np.pi, 12))
    b = wrap_consistent(g.uniform(0, 2 * np.pi, 12))
    np.testing.assert_allclose(gauge_operator(a + b).toarray(), (gauge_operator(a) @ gauge_operator(b)).toarray(),
                               atol=1e-13)


def test_gauge_spectral_invariance():
    bb = BbParams.random(64, rng(10))
    bb = bb.replace(gamma=wrap_consistent(bb.gamma))
    res = gauge_transform(bb)
    assert res.residual < RESIDUAL_TOL
    dev = multiset_deviation(eigenphases(build_bb(bb).dense()), eigenphases(build_bb(res.gauged).dense()))
    assert dev < PHASE_TOL


def test_gauge_obstruction_reports_holonomy():
    bb = BbParams.random(8, rng(11)).replace(gamma=np.full(8, 0.1))
    with pytest.raises(GaugeObstructionError) as err:
        gauge_transform(bb)
    assert err.value.holonomy == pytest.approx(holonomy(np.full(8, 0.1)))
    assert err.value.holonomy == pytest.approx(0.8)


# --- cyclic operators -------------------------------------------------------------


def test_two_point_measure():
    rep = cyclic_to_cmv(np.diag([1.0, -1.0]), np.array([1, 1]) / np.sqrt(2))
    n = np.arange(4)
    np.testing.assert_allclose(rep.moments[:4], (1 + (-1.0) ** n) / 2, atol=1e-15)
    np.testing.assert_allclose(rep.seq.coefficients, [0, -1], atol=1e-14)


def test_one_dimensional_operator_terminates():
    rep = cyclic_to_cmv(np.array([[1.0]]), np.array([1.0]))
    assert rep.seq.terminated
    assert abs(abs(rep.seq.coefficients[0]) - 1) < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_random_roundtrip(seed):
    g = rng(seed)
    u = unitary_group.rvs(6, random_state=g)
    phi = g.normal(size=6) + 1j * g.normal(size=6)
    rep = cyclic_to_cmv(u, phi)
    assert rep.roundtrip_error < MOMENT_TOL
    np.testing.assert_allclose(rep.one_sided @ rep.one_sided.conj().T, np.eye(rep.one_sided.shape[0]), atol=1e-12)


def test_two_sided_duplication():
    rep = cyclic_to_cmv(unitary_group.rvs(4, random_state=3), np.ones(4))
    n = rep.one_sided.shape[0]
    two = duplicate_cmv(rep.one_sided)
    for j in range(n):
        for k in range(n):
            assert two[n - 1 - j, n - 1 - k] == rep.one_sided[j, k]
    np.testing.assert_array_equal(rep.two_sided, two)


def test_non_cyclic_vector_rejected():
    u = np.diag(np.exp(1j * np.array([0.1, 0.1, 2.0])))
    with pytest.raises(ValidationError) as err:
        cyclic_to_cmv(u, np.ones(3))
    assert "Krylov" in str(err.value)
    assert err.value.where == 1
    assert krylov_rank_check(np.diag([1, 1j, -1]), np.ones(3)) > 1e-10


def test_verification_report_schema():
    rep = Verification("cc-qw", 64, 1e-16, "2", 1e-12).report()
    assert set(rep) >= {"relation", "dimension", "residual", "norm_kind", "pass"}
    assert rep["pass"]
