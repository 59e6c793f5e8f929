"""Conjugate operators, regularity of coin fields and Mourre positivity on truncations.

Conventions. Momentum amplitudes are ``psi^(x_m) = L^{-d/2} sum_j psi_j e^{i j.x_m}``
so that ``i grad`` corresponds to ``-J`` (position). For a band
``lambda = e^{i theta}`` the vector field ``i lambda grad conj(lambda)``
equals ``grad theta``; with it the commutator ``M* A M - A`` comes out as
``-sum eta^2 |grad theta|^2 pi``. The sign of ``f`` is therefore flipped
(``f = -grad theta``), which makes the commutator positive on the bands.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la

from .errors import ConfigurationError, ValidationError
from .fibered import ArcSet, Symbol, band_structure, is_m_good, sampled_gradients
from .lattice import CoinField, LatticeShape, NetworkOperator, _centered
from .phases import TWO_PI, circular_distance, eigenphases, to_unit_interval

SYMMETRY_TOL = 1e-10
DENSE_LIMIT = 4096
TAIL_DISTANCE = 32
FD_REL_TOL = 1e-8  # accuracy of the centred-difference gradients behind c_delta


# --- perturbations and regularity ---------------------------------------------


@dataclass(frozen=True)
class PerturbationProfile:
    """Decay envelope of ``||C(j) - 1||`` around ``center``.

    kind ``"compact"``: ``c`` for ``|j| <= radius``, else 0.
    kind ``"power"``: ``c (1 + |j|)^{-1-eps}``.
    kind ``"custom"``: ``envelope(|j|)``.
    """

    kind: str = "compact"
    c: float = 0.5
    eps: float = 1.0
    radius: float = 0.0
    envelope: Callable | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("compact", "power", "custom"):
            raise ConfigurationError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "custom" and self.envelope is None:
            raise ConfigurationError("custom profile needs an envelope")

    def bound(self, r):
        r = np.asarray(r, dtype=float)
        if self.kind == "compact":
            return np.where(r <= self.radius, self.c, 0.0)
        if self.kind == "power":
            return self.c * (1 + r) ** (-1 - self.eps)
        return np.asarray(self.envelope(r), dtype=float)


def _random_hermitian_unit(rng, k):
    h = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
    h = (h + h.conj().T) / 2
    return h / np.linalg.norm(h, 2)


def perturbation_field(profile: PerturbationProfile, d: int, L: int, coin_dim: int, center=None) -> CoinField:
    """``C(j) = exp(i b(|j|) H_j)`` with ``||H_j|| = 1``, so ``||C(j) - 1|| <= b(|j|)``."""
    rng = np.random.default_rng(profile.seed)
    shape = LatticeShape(d, L, coin_dim)
    center = np.zeros(d, dtype=int) if center is None else np.asarray(center)
    radii = np.linalg.norm(shape.centered_coords(center), axis=-1)
    amp = profile.bound(radii)
    blocks = np.empty((shape.n_sites, coin_dim, coin_dim), dtype=complex)
    for s in range(shape.n_sites):
        if amp[s] == 0:
            blocks[s] = np.eye(coin_dim)
        else:
            blocks[s] = la.expm(1j * amp[s] * _random_hermitian_unit(rng, coin_dim))
    return CoinField(blocks.reshape((L,) * d + (coin_dim, coin_dim)), d)


def perturbed_field(background, perturbation: CoinField) -> CoinField:
    """Site-wise product ``C_inf C(j)``."""
    background = np.asarray(background, dtype=complex)
    return CoinField(background @ perturbation.blocks, perturbation.d)


@dataclass(frozen=True)
class RegularityResult:
    radii: np.ndarray
    integrand: np.ndarray
    partial_integrals: np.ndarray
    integral: float
    tail_exponent: float
    verdict: str
    note: str = ""


def regularity_integral(field: CoinField, a=1.0, b=2.0, r_max=None, background=None, center=None,
                        points_per_octave=8, exponent_bound=-1.05) -> RegularityResult:
    """Estimate ``int_1^{r_max} sup_{a r <= |j| <= b r} ||C(j) - 1|| dr``.

    ``background`` (a homogeneous coin) is divided out first when given. The
    verdict is ``"regular"`` when the sup vanishes on the tail or its fitted
    power law decays faster than ``r^exponent_bound``, else ``"inconclusive"``.
    """
    if not 0 < a < b:
        raise ConfigurationError(f"need 0 < a < b, got a={a}, b={b}")
    d, L = field.d, field.L
    blocks = field.flat_blocks()
    if background is not None:
        blocks = np.linalg.solve(np.asarray(background, dtype=complex), blocks)
    dev = np.linalg.norm(blocks - np.eye(field.coin_dim), ord=2, axis=(-2, -1))
    shape = LatticeShape(d, L, field.coin_dim)
    center = np.zeros(d, dtype=int) if center is None else np.asarray(center)
    radii_sites = np.linalg.norm(shape.centered_coords(center), axis=-1)
    reach = L / 2
    r_max = reach / b if r_max is None else r_max
    note = ""
    if b * r_max > reach:
        note = f"field known out to |j| = {reach:g} < b r_max = {b * r_max:g}"
        r_max = reach / b
    if r_max <= 2:
        return RegularityResult(np.empty(0), np.empty(0), np.empty(0), np.nan, np.nan, "inconclusive",
                                note or "support radius too small")
    n = max(int(np.ceil(np.log2(r_max) * points_per_octave)) + 1, 4)
    r = np.geomspace(1.0, r_max, n)
    order = np.argsort(radii_sites)
    rs, ds = radii_sites[order], dev[order]
    sup = np.empty(n)
    for i, ri in enumerate(r):
        lo, hi = np.searchsorted(rs, a * ri, "left"), np.searchsorted(rs, b * ri, "right")
        sup[i] = ds[lo:hi].max() if hi > lo else 0.0
    partial = np.concatenate([[0.0], np.cumsum(np.diff(r) * (sup[1:] + sup[:-1]) / 2)])
    tail = slice(n // 2, n)
    positive = sup[tail] > 0
    if not positive.any():
        return RegularityResult(r, sup, partial, float(partial[-1]), -np.inf, "regular", note)
    if positive.sum() < 3:
        return RegularityResult(r, sup, partial, float(partial[-1]), -np.inf, "regular",
                                note or "integrand vanishes on most of the tail")
    slope = np.polyfit(np.log(r[tail][positive]), np.log(sup[tail][positive]), 1)[0]
    verdict = "regular" if slope < exponent_bound else "inconclusive"
    return RegularityResult(r, sup, partial, float(partial[-1]), float(slope), verdict, note)


# --- conjugate operator ------------------------------------------------------


def smooth_step(t):
    """C-infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1 / np.where(t > 0, t, 1)), 0.0)
        b = np.where(t < 1, np.exp(-1 / np.where(t < 1, 1 - t, 1)), 0.0)
    return a / (a + b)


def arc_bump(delta: ArcSet, ramp: float, theta):
    """Smooth function of the phase: 1 on ``delta``, 0 beyond distance ``ramp``."""
    dist = delta.distance(theta)
    if ramp <= 0:
        return (dist <= 0).astype(float)
    return 1.0 - smooth_step(dist / ramp)


def inflate(delta: ArcSet, by: float) -> ArcSet:
    return ArcSet.from_intervals([(lo - by, hi + by) for lo, hi in delta])


def shrink(delta: ArcSet, by: float) -> ArcSet:
    return ArcSet.from_intervals([(lo + by, hi - by) for lo, hi in delta if hi - lo > 2 * by])


def momentum_transform(shape: LatticeShape) -> np.ndarray:
    """Dense unitary ``Phi`` on one coin component: ``Phi[m, j] = L^{-d/2} e^{i j.x_m}``."""
    eye = np.eye(shape.n_sites).reshape((shape.n_sites,) + shape.grid)
    axes = tuple(range(1, shape.d + 1))
    return np.fft.ifftn(eye, axes=axes, norm="ortho").reshape(shape.n_sites, shape.n_sites).T


def position_in_momentum(shape: LatticeShape, phi=None) -> list:
    """``i grad_a`` on the momentum grid, i.e. ``-Phi J_a Phi*`` with ``J`` centred on the origin."""
    phi = momentum_transform(shape) if phi is None else phi
    coords = shape.centered_coords()
    return [-(phi * coords[:, a]) @ phi.conj().T for a in range(shape.d)]


@dataclass(frozen=True)
class ConjugateOperator:
    shape: LatticeShape
    matrix: np.ndarray
    delta: ArcSet
    cutoffs: np.ndarray
    ramp: float
    c_delta: float
    asymmetry: float

    @property
    def symmetry_defect(self) -> float:
        return float(np.linalg.norm(self.matrix - self.matrix.conj().T))


def build_conjugate(sym: Symbol, delta: ArcSet, L: int, ramp=None) -> ConjugateOperator:
    """Dense ``A`` on ``C^{d'} (x) l^2((Z/LZ)^d)`` for the homogeneous symbol ``sym``.

    ``A = 1/2 sum_k eta_k pi_k (f_k . i grad + i grad . f_k) pi_k eta_k`` on the
    ``L``-grid with ``f_k = -grad theta_k`` and ``eta_k = bump(theta_k)``, a
    smooth function of the band phase equal to 1 on ``delta`` and vanishing
    ``ramp`` beyond it. The inflated arc must itself be certified M-good; by
    default ``ramp`` is 80% of the phase distance from ``delta`` to ``tau_M``.
    """
    shape = LatticeShape(sym.d, L, sym.dim)
    if shape.dim > DENSE_LIMIT:
        raise ConfigurationError(f"dense assembly limited to dimension {DENSE_LIMIT}, got {shape.dim}")
    bs = band_structure(sym, L, min_grid=4)
    cert = is_m_good(delta, bs)
    if not cert.passed:
        raise ValidationError(f"delta is not M-good: {cert.reason}", where=list(cert.offending))
    if ramp is None:
        room = float(np.min(delta.distance(bs.tau_M))) if bs.tau_M.size else np.pi / 4
        ramp = 0.8 * min(room, np.pi / 4)
    outer = inflate(delta, ramp)
    cert_outer = is_m_good(outer, bs)
    if not cert_outer.passed:
        raise ValidationError(f"delta inflated by ramp={ramp} is not M-good: {cert_outer.reason}",
                              where=list(cert_outer.offending))

    eta = arc_bump(delta, ramp, bs.phases)                       # (n_sites, dim)
    grads = sampled_gradients(sym, bs.points, bs.vectors, bs.phases)
    f = -grads                                                   # (n_sites, dim, d)
    proj = np.einsum("pak,pbk->pkab", bs.vectors, bs.vectors.conj())
    p_k = eta[:, :, None, None] * proj                           # (n_sites, dim, c, c)
    phi = momentum_transform(shape)
    grad_ops = position_in_momentum(shape, phi)
    n, dim = shape.n_sites, shape.coin_dim
    a_mom = np.zeros((n, dim, n, dim), dtype=complex)
    for ax, dmat in enumerate(grad_ops):
        b_k = f[:, :, ax, None, None] * p_k
        # [B D P]_{(m,a),(m',c)} = D[m, m'] sum_k (B_k(m) P_k(m'))_{ac}
        a_mom += np.einsum("mkab,nkbc->manc", b_k, p_k, optimize=True) * dmat[:, None, :, None]
    a_mom = a_mom.transpose(1, 0, 3, 2).reshape(dim * n, dim * n)
    a_mom = (a_mom + a_mom.conj().T) / 2
    big_phi = np.kron(np.eye(dim), phi)
    a_pos = big_phi.conj().T @ a_mom @ big_phi
    asym = float(np.linalg.norm(a_pos - a_pos.conj().T))
    a_pos = (a_pos + a_pos.conj().T) / 2
    c_delta = float(np.min(np.sum(grads**2, axis=-1)[delta.contains(bs.phases)]))
    return ConjugateOperator(shape, a_pos, delta, eta, ramp, c_delta, asym)


# --- positivity check --------------------------------------------------------


@dataclass(frozen=True)
class MourreResult:
    lambda_min: float
    c_delta: float
    margin: float
    passed: bool
    n_states: int
    excluded: int
    spectrum: np.ndarray
    tail_norm: float

    def report(self) -> dict:
        return {
            "c_delta": self.c_delta,
            "lambda_min": self.lambda_min,
            "margin": self.margin,
            "pass": self.passed,
            "n_states": self.n_states,
            "excluded": self.excluded,
            "tail_norm": self.tail_norm,
        }


def commutator(u: NetworkOperator, a: ConjugateOperator) -> np.ndarray:
    """``U* A U - A`` (dense)."""
    ud = u.dense()
    return ud.conj().T @ a.matrix @ ud - a.matrix


def _site_coords_full(shape: LatticeShape) -> np.ndarray:
    return np.tile(shape.centered_coords(), (shape.coin_dim, 1))


def tail_norm(b: np.ndarray, shape: LatticeShape, distance=TAIL_DISTANCE, bulk=0.5) -> float:
    """Spectral norm of the part of ``b`` coupling sites farther apart than ``distance``.

    Only sites with ``|j|_inf < bulk L / 2`` enter, which keeps the position
    cut of the torus (at ``|j|_inf = L/2``) out of the measurement.
    """
    sites = _site_coords_full(shape)
    keep = np.abs(sites).max(-1) < bulk * shape.L / 2
    x = sites[keep]
    sep = np.abs(_centered(x[:, None, :] - x[None, :, :], shape.L)).sum(-1)
    far = np.where(sep > distance, b[np.ix_(keep, keep)], 0.0)
    return float(np.linalg.norm(far, 2)) if np.any(far) else 0.0


def cut_rank(u: NetworkOperator, tol=1e-12) -> int:
    """Rank of the hops of ``u`` that cross the position cut of the torus.

    ``J`` jumps by ``L`` there, so ``U* J U - J`` carries a correction of this
    rank and size ``O(L)``; it is the finite-volume stand-in for the compact
    term of the Mourre estimate.
    """
    coo = u.matrix.tocoo()
    sites = _site_coords_full(u.shape)
    jump = np.abs(sites[coo.row] - sites[coo.col]).max(-1) > u.shape.L / 2
    if not jump.any():
        return 0
    rows, cols = np.unique(coo.row[jump]), np.unique(coo.col[jump])
    part = np.zeros((rows.size, cols.size), dtype=complex)
    part[np.searchsorted(rows, coo.row[jump]), np.searchsorted(cols, coo.col[jump])] = coo.data[jump]
    return int(np.linalg.matrix_rank(part, tol=tol))


def mourre_check(u: NetworkOperator, a: ConjugateOperator, delta: ArcSet | None = None, c_delta=None,
                 margin=None, exclude=0) -> MourreResult:
    """Smallest eigenvalue of ``E_delta (U* A U - A) E_delta`` on ``range(E_delta)``.

    ``E_delta`` is the sharp spectral projection of ``u``. ``exclude`` drops
    that many lowest eigenvalues before reading off ``lambda_min`` (pass
    :func:`cut_rank` to discount the torus cut). ``margin`` defaults to the
    bulk commutator tail beyond distance 32 plus ten times the gap between
    the grid ``c_delta`` of ``a`` and the reference ``c_delta``, floored at
    the relative accuracy of the sampled gradients.
    """
    delta = a.delta if delta is None else delta
    c_ref = a.c_delta if c_delta is None else c_delta
    b = commutator(u, a)
    t, z = la.schur(u.dense(), output="complex")
    inside = delta.contains(to_unit_interval(np.angle(np.diag(t))))
    if not inside.any():
        raise ValidationError("no spectrum in delta at this truncation")
    basis = z[:, inside]
    compressed = basis.conj().T @ b @ basis
    spectrum = la.eigvalsh((compressed + compressed.conj().T) / 2)
    if exclude >= spectrum.size:
        raise ValidationError(f"cannot exclude {exclude} of {spectrum.size} eigenvalues")
    tail = tail_norm(b, a.shape)
    if margin is None:
        margin = tail + 10 * abs(a.c_delta - c_ref) + FD_REL_TOL * abs(c_ref)
    lam = float(spectrum[exclude])
    return MourreResult(lam, float(c_ref), float(margin), bool(lam >= c_ref - margin), int(basis.shape[1]),
                        int(exclude), spectrum, tail)


# --- discrete eigenvalues ------------------------------------------------------


@dataclass(frozen=True)
class StabilityResult:
    sizes: tuple
    counts: tuple
    isolated: tuple
    stable: bool

    def report(self) -> dict:
        return {
            "L": list(self.sizes),
            "counts": list(self.counts),
            "isolated_phases": [list(map(float, p)) for p in self.isolated],
            "stable": self.stable,
        }


def isolated_phases(phases, grid_phases, window: ArcSet, factor=3.0) -> np.ndarray:
    """Phases in ``window`` farther than ``factor`` grid spacings from the symbol grid.

    The spacing is the largest of the eight grid gaps around the nearest grid
    phase, leaving out the single widest one (a band gap, when the phase sits
    in one). Taking the largest absorbs degenerate grid pairs.
    """
    g = np.sort(to_unit_interval(grid_phases))
    gaps = np.diff(np.concatenate([g, g[:1] + TWO_PI]))
    out = []
    for p in np.asarray(phases)[window.contains(phases)]:
        dist = circular_distance(p, g)
        i = int(np.argmin(dist))
        near = np.sort(gaps[np.arange(i - 4, i + 4) % gaps.size])
        spacing = near[-2] if g.size > 8 else TWO_PI
        if dist[i] > factor * spacing:
            out.append(p)
    return np.array(out)


def eigenvalue_stability(builder: Callable[[int], NetworkOperator], sym: Symbol, delta: ArcSet,
                         delta_prime: ArcSet, sizes, N=1024, factor=3.0) -> StabilityResult:
    """Count isolated eigenphases of ``builder(L)`` in ``delta_prime`` for each ``L``.

    ``delta`` must be certified M-good for ``sym`` and contain ``delta_prime``
    with room to spare.
    """
    bs = band_structure(sym, N)
    cert = is_m_good(delta, bs)
    if not cert.passed:
        raise ValidationError(f"delta is not M-good: {cert.reason}", where=list(cert.offending))
    near = [t for t in bs.tau_M if delta_prime.distance(t) <= bs.resolution]
    if near:
        raise ValidationError("delta_prime touches tau_M", where=near)
    if not delta_prime.is_subset(delta) or any(delta_prime.distance(e) <= 0 for e in delta.endpoints()):
        raise ValidationError("delta_prime must lie strictly inside delta")
    counts, found = [], []
    for L in sizes:
        u = builder(L)
        iso = isolated_phases(eigenphases(u.dense()), sym.grid_phases(L), delta_prime, factor)
        counts.append(int(iso.size))
        found.append(tuple(iso))
    return StabilityResult(tuple(sizes), tuple(counts), tuple(found), len(set(counts)) == 1)
