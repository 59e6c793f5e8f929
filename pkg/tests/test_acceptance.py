"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` to see the lines; they are printed
with output capture disabled so they appear without ``-s``. Bundled configs
under ``unitary_networks/configs`` carry the same parameters (``acNN_*``).
"""

import time

import numpy as np
import pytest
from scipy.stats import unitary_group

from unitary_networks.dynamics import evolve, spreading_exponent
from unitary_networks.equivalence import bb_to_qw_square, cyclic_to_cmv, gauge_transform, verify_cc, verify_qw_bb
from unitary_networks.fibered import (
    arc, band_structure, cc_closed_form, coin_alpha_eta, qw1d_c_delta, qw1d_closed_form, symbol_cc, symbol_qw,
)
from unitary_networks.lattice import StateVector
from unitary_networks.models import (
    BbParams, CcParams, QwParams, build_bb, build_qw, named_coin, verblunski_from_measure,
)
from unitary_networks.mourre import (
    PerturbationProfile, build_conjugate, cut_rank, eigenvalue_stability, mourre_check, perturbation_field,
    perturbed_field,
)
from unitary_networks.phases import circular_distance, eigenphases, multiset_deviation

FOURIER_TOL = 1e-10
INTERTWINER_TOL = 1e-12
SQUARE_TOL = 1e-11
SPECTRAL_TOL = 1e-11
GAUGE_TOL = 1e-12
VERBLUNSKI_TOL = 1e-12
MOMENT_TOL = 1e-8
C_DELTA_REL = 0.05
KAPPA_BALLISTIC = (1.95, 2.0)
KAPPA_LOCALIZED = 0.1

HADAMARD = named_coin("hadamard")
HALF_PI = np.pi / 2
WINDOW = arc(HALF_PI - 0.3, HALF_PI + 0.3)
WINDOW_PRIME = arc(HALF_PI - 0.2, HALF_PI + 0.2)
SIZES = (128, 256, 512)


def report(capsys, n, ok, detail, elapsed, budget):
    within = elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    with capsys.disabled():
        print(f"\n[criterion {n:2d}] {status}  {detail}  ({elapsed:.1f} s, budget {budget:g} s)")
    assert ok, detail
    assert within, f"runtime {elapsed:.1f} s over budget {budget:g} s"


def set_distance(a, b):
    d = circular_distance(np.asarray(a)[:, None], np.asarray(b)[None, :])
    return float(max(d.min(1).max(), d.min(0).max()))


def random_walk_params(L, rng):
    a = rng.normal(size=L) + 1j * rng.normal(size=L)
    b = rng.normal(size=L) + 1j * rng.normal(size=L)
    n = np.sqrt(np.abs(a) ** 2 + np.abs(b) ** 2)
    return QwParams.from_coin_params(a / n, b / n, rng.uniform(0, 2 * np.pi, L))


def test_criterion_01_fourier_exactness(capsys):
    t0 = time.perf_counter()
    u = build_qw(QwParams.homogeneous(HADAMARD, 1, 256))
    dev = multiset_deviation(eigenphases(u.dense()), symbol_qw(HADAMARD, 1).grid_phases(256))
    report(capsys, 1, dev < FOURIER_TOL, f"Hadamard L=256 multiset deviation {dev:.2e} < {FOURIER_TOL:g}",
           time.perf_counter() - t0, 10)


def test_criterion_02_qw_bands(capsys):
    t0 = time.perf_counter()
    bs = band_structure(symbol_qw(HADAMARD, 1), 512)
    cf = qw1d_closed_form(*coin_alpha_eta(HADAMARD))
    expected = [[np.pi / 4, 3 * np.pi / 4], [5 * np.pi / 4, 7 * np.pi / 4]]
    closed_ok = np.allclose(cf.bands.to_list(), expected)
    hd = bs.bands.hausdorff(cf.bands)
    tau_dev = set_distance(bs.tau_M, np.pi / 4 * np.array([1, 3, 5, 7])) if bs.tau_M.size == 4 else np.inf
    anti = band_structure(symbol_qw(named_coin("antidiagonal"), 1), 512)
    pp_ok = anti.bands.measure < 1e-12 and set_distance(anti.bands.endpoints(), [HALF_PI, 3 * HALF_PI]) < 1e-12
    ok = closed_ok and hd <= bs.step and tau_dev <= 2 * bs.step and pp_ok
    report(capsys, 2, ok, f"Hausdorff {hd:.4f} <= {bs.step:.4f}, tau_M deviation {tau_dev:.1e}, "
                          f"|alpha|=0 gives {{+-i}}: {pp_ok}", time.perf_counter() - t0, 30)


def test_criterion_03_cc_bands(capsys):
    t0 = time.perf_counter()
    parts, ok = [], True
    for label, phi in (("pi/6", np.pi / 6), ("pi/4", np.pi / 4), ("pi/3", np.pi / 3)):
        bs = band_structure(symbol_cc(phi), 128)
        cf = cc_closed_form(phi)
        hd = bs.bands.hausdorff(cf.bands)
        tau_dev = set_distance(bs.tau_M, cf.tau_M) if bs.tau_M.size == cf.tau_M.size else np.inf
        good = hd <= 2 * bs.step and tau_dev <= 2 * bs.step
        ok &= good
        parts.append(f"{label}: H={hd / bs.step:.2f} steps, |tau_M|={bs.tau_M.size}")
    zero = band_structure(symbol_cc(0.0), 128)
    zero_ok = zero.bands.measure < 1e-12 and set_distance(zero.bands.endpoints(), np.arange(4) * HALF_PI) < 1e-12
    ok &= zero_ok
    report(capsys, 3, ok, "; ".join(parts) + f"; phi=0 gives {{+-1, +-i}}: {zero_ok}", time.perf_counter() - t0, 120)


def test_criterion_04_cc_equivalence(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst = max(verify_cc(CcParams.random(phi, 8, rng)).residual
                for phi in (0.0, np.pi / 6, np.pi / 4, HALF_PI) for _ in range(5))
    report(capsys, 4, worst < INTERTWINER_TOL, f"max ||I U I^-1 - U_walk||_2 = {worst:.2e} over 20 instances",
           time.perf_counter() - t0, 60)


def test_criterion_05_qw_bb(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = max(verify_qw_bb(random_walk_params(64, rng)).residual for _ in range(10))
    report(capsys, 5, worst < INTERTWINER_TOL, f"max ||I U_QW I^-1 - U_BB||_2 = {worst:.2e} over 10 fields",
           time.perf_counter() - t0, 60)


def test_criterion_06_square_root(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(6)
    res_worst = spec_worst = 0.0
    for _ in range(10):
        bb = BbParams.random(32, rng)
        res = bb_to_qw_square(bb)
        res_worst = max(res_worst, res.residual)
        w = build_qw(res.qw).dense()
        u2 = w @ w
        phases = eigenphases(build_bb(bb).dense())
        spec_worst = max(spec_worst, multiset_deviation(eigenphases(u2), np.concatenate([phases, phases])))
    ok = res_worst < SQUARE_TOL and spec_worst < SPECTRAL_TOL
    report(capsys, 6, ok, f"residual {res_worst:.2e}, doubled-multiset deviation {spec_worst:.2e}",
           time.perf_counter() - t0, 60)


def test_criterion_07_gauge(capsys):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    res_worst = spec_worst = 0.0
    for _ in range(10):
        bb = BbParams.random(64, rng)
        bb = bb.replace(gamma=bb.gamma - bb.gamma.mean())
        res = gauge_transform(bb)
        res_worst = max(res_worst, res.residual)
        spec_worst = max(spec_worst, multiset_deviation(eigenphases(build_bb(bb).dense()),
                                                        eigenphases(build_bb(res.gauged).dense())))
    ok = res_worst < GAUGE_TOL and spec_worst < SPECTRAL_TOL
    report(capsys, 7, ok, f"residual {res_worst:.2e}, spectral deviation {spec_worst:.2e}",
           time.perf_counter() - t0, 60)


def test_criterion_08_mourre_positivity(capsys):
    # literal check: smallest eigenvalue of the compressed commutator, nothing excluded
    t0 = time.perf_counter()
    sym = symbol_qw(HADAMARD, 1)
    oracle = qw1d_c_delta(*coin_alpha_eta(HADAMARD), WINDOW)
    literal, excluded = [], []
    for L in SIZES:
        u = build_qw(QwParams.homogeneous(HADAMARD, 1, L))
        a = build_conjugate(sym, WINDOW, L)
        literal.append((a, mourre_check(u, a, c_delta=oracle)))
        excluded.append(mourre_check(u, a, c_delta=oracle, exclude=cut_rank(u)))
    c_err = abs(literal[-1][0].c_delta - oracle) / oracle
    margins = [r.margin for _, r in literal]
    ok = all(r.passed for _, r in literal) and margins[-1] < margins[0] and c_err < C_DELTA_REL
    lams = ", ".join(f"{r.lambda_min:.3f}" for _, r in literal)
    cut_ok = all(r.passed for r in excluded)
    detail = (f"lambda_min [{lams}] vs c_Delta {oracle:.4f} - margin [{', '.join(f'{m:.4f}' for m in margins)}]; "
              f"c_Delta error {100 * c_err:.2f}%; with the {excluded[0].excluded} torus-cut states excluded: "
              f"{'pass' if cut_ok else 'fail'}")
    report(capsys, 8, ok, detail, time.perf_counter() - t0, 300)


def test_criterion_09_eigenvalue_count(capsys):
    t0 = time.perf_counter()

    def builder(L):
        pert = perturbation_field(PerturbationProfile("compact", 1.0, radius=0, seed=3), 1, L, 2)
        return build_qw(QwParams(1, perturbed_field(HADAMARD, pert)))

    res = eigenvalue_stability(builder, symbol_qw(HADAMARD, 1), WINDOW, WINDOW_PRIME, SIZES, N=1024)
    report(capsys, 9, res.stable, f"isolated counts {list(res.counts)} at L = {list(res.sizes)}",
           time.perf_counter() - t0, 300)


def test_criterion_10_spreading(capsys):
    t0 = time.perf_counter()
    kappa = {}
    for name in ("hadamard", "antidiagonal"):
        u = build_qw(QwParams.homogeneous(named_coin(name), 1, 1024))
        kappa[name] = spreading_exponent(evolve(u, StateVector.basis(u.shape, 1, [0]), 400))
    lo, hi = KAPPA_BALLISTIC
    ok = lo <= kappa["hadamard"] <= hi and kappa["antidiagonal"] < KAPPA_LOCALIZED
    report(capsys, 10, ok, f"kappa Hadamard {kappa['hadamard']:.4f} in [{lo}, {hi}], "
                           f"antidiagonal {kappa['antidiagonal']:.4f} < {KAPPA_LOCALIZED}",
           time.perf_counter() - t0, 120)


def test_criterion_11_cmv_roundtrip(capsys):
    t0 = time.perf_counter()
    uniform = np.zeros(17, dtype=complex)
    uniform[0] = 1
    a_max = float(np.max(np.abs(verblunski_from_measure(uniform, 16).coefficients)))
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(5):
        u = unitary_group.rvs(6, random_state=rng)
        phi = rng.normal(size=6) + 1j * rng.normal(size=6)
        worst = max(worst, cyclic_to_cmv(u, phi).roundtrip_error)
    ok = a_max < VERBLUNSKI_TOL and worst < MOMENT_TOL
    report(capsys, 11, ok, f"uniform measure max |a_k| = {a_max:.1e}; moment round trip {worst:.1e}",
           time.perf_counter() - t0, 10)


@pytest.mark.parametrize("name", ["ac02_hadamard_bands", "ac08_mourre_hadamard", "ac09_stability_defect",
                                  "ac10_hadamard_spreading"])
def test_bundled_configs_mirror_suite(name):
    from importlib.resources import files

    from unitary_networks import config as cfg

    doc = cfg.load(str(files("unitary_networks") / "configs" / f"{name}.json"))
    assert doc["model"]["coin"] == "hadamard"
    if name.startswith("ac08"):
        assert tuple(doc["mourre"]["L"]) == SIZES
        np.testing.assert_allclose(doc["mourre"]["delta"], WINDOW.to_list()[0])
    if name.startswith("ac09"):
        assert tuple(doc["stability"]["L"]) == SIZES
        np.testing.assert_allclose(doc["stability"]["delta_prime"], WINDOW_PRIME.to_list()[0])
    if name.startswith("ac10"):
        assert doc["model"]["L"] == 1024 and doc["evolve"]["T"] == 400
