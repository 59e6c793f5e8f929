"""Symbols of translation-invariant models and their band structure.

A homogeneous operator on the torus acts on plane waves ``e^{i j.x}`` as the
matrix ``M(x) = sum_delta A_delta e^{i delta.x}`` with
``(A_delta)_{t', t} = <t', delta | U | t, 0>``. On a truncation of side ``L``
its spectrum is exactly the union of ``sigma(M(2 pi m / L))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage
from scipy.optimize import linear_sum_assignment

from .errors import ConfigurationError
from .lattice import NetworkOperator, _centered
from .models import cc_rotation_coin, coin_parameters
from .phases import TWO_PI, circular_distance, cluster, to_unit_interval, wrap

GAP_TOL = 1e-6
GRAD_TOL = 1e-4
OVERLAP_TIE_TOL = 1e-6
SAFETY_CELLS = 2


# --- arcs on the circle ------------------------------------------------------


@dataclass(frozen=True)
class ArcSet:
    """Closed arcs ``[lo, lo + length]`` with ``lo`` in ``[0, 2 pi)``, disjoint and sorted.

    Build through :meth:`from_intervals`, which merges overlaps across the cut.
    A full circle is the single arc ``(0, 2 pi)``.
    """

    arcs: tuple = ()

    @classmethod
    def from_intervals(cls, intervals, join=0.0) -> "ArcSet":
        """Union of ``(lo, hi)`` pairs; arcs closer than ``join`` are merged."""
        spans = []
        for lo, hi in intervals:
            length = float(hi) - float(lo)
            if length < 0:
                raise ValueError(f"arc ({lo}, {hi}) has negative length")
            if length >= TWO_PI:
                return cls.full()
            spans.append((float(to_unit_interval(lo)), length))
        if not spans:
            return cls(())
        spans.sort()
        merged = [list(spans[0])]
        for lo, length in spans[1:]:
            last = merged[-1]
            if lo <= last[0] + last[1] + join:
                last[1] = max(last[1], lo + length - last[0])
            else:
                merged.append([lo, length])
        while len(merged) > 1 and merged[-1][0] + merged[-1][1] + join >= merged[0][0] + TWO_PI:
            first = merged.pop(0)
            last = merged[-1]
            last[1] = max(last[1], first[0] + TWO_PI + first[1] - last[0])
        if any(length >= TWO_PI for _, length in merged):
            return cls.full()
        return cls(tuple((lo, lo + length) for lo, length in sorted(map(tuple, merged))))

    @classmethod
    def full(cls) -> "ArcSet":
        return cls(((0.0, TWO_PI),))

    @classmethod
    def from_points(cls, phases, pad=0.0, join=0.0) -> "ArcSet":
        """Arcs covering the sampled ``phases``; neighbours closer than ``join`` are bridged."""
        phases = np.asarray(phases, dtype=float).ravel()
        return cls.from_intervals([(p - pad, p + pad) for p in phases], join=join)

    def __iter__(self):
        return iter(self.arcs)

    def __len__(self):
        return len(self.arcs)

    @property
    def is_full(self) -> bool:
        return len(self.arcs) == 1 and self.arcs[0][1] - self.arcs[0][0] >= TWO_PI

    @property
    def measure(self) -> float:
        return float(sum(hi - lo for lo, hi in self.arcs))

    def endpoints(self) -> np.ndarray:
        if self.is_full:
            return np.empty(0)
        return to_unit_interval(np.array([p for arc in self.arcs for p in arc]))

    def contains(self, theta, tol=0.0):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape, dtype=bool)
        for lo, hi in self.arcs:
            out |= (theta - lo) % TWO_PI <= hi - lo + tol
            out |= circular_distance(theta, lo) <= tol
        return out

    def distance(self, theta):
        """Circular distance from each phase to the set (``inf`` for the empty set)."""
        theta = np.asarray(theta, dtype=float)
        if not self.arcs:
            return np.full(theta.shape, np.inf)
        best = np.full(theta.shape, np.inf)
        for lo, hi in self.arcs:
            inside = (theta - lo) % TWO_PI <= hi - lo
            edge = np.minimum(circular_distance(theta, lo), circular_distance(theta, hi))
            best = np.minimum(best, np.where(inside, 0.0, edge))
        return best

    def _gap_midpoints(self) -> np.ndarray:
        if not self.arcs or self.is_full:
            return np.empty(0)
        his = np.array([hi for _, hi in self.arcs])
        los = np.roll(np.array([lo for lo, _ in self.arcs]), -1)
        gap = (los - his) % TWO_PI
        return to_unit_interval(his + gap / 2)

    def _sup_distance_from(self, other: "ArcSet") -> float:
        """``sup_{a in self} dist(a, other)``; attained at endpoints or at gap midpoints of ``other``."""
        if self.is_full:
            cands = np.concatenate([[0.0], other._gap_midpoints(), other.endpoints()])
        else:
            mids = other._gap_midpoints()
            cands = np.concatenate([self.endpoints(), mids[self.contains(mids)]])
        if cands.size == 0:
            return 0.0
        return float(np.max(other.distance(cands)))

    def hausdorff(self, other: "ArcSet") -> float:
        if not self.arcs and not other.arcs:
            return 0.0
        if not self.arcs or not other.arcs:
            return np.inf
        return max(self._sup_distance_from(other), other._sup_distance_from(self))

    def is_subset(self, other: "ArcSet", tol=0.0) -> bool:
        if not self.arcs:
            return True
        if self.is_full:
            return other.is_full or (tol > 0 and other.hausdorff(self) <= tol)
        probes = [self.endpoints()]
        for lo, hi in self.arcs:
            probes.append(np.linspace(lo, hi, 65))
        probes = np.concatenate(probes)
        if not np.all(other.distance(probes) <= tol):
            return False
        # no gap of ``other`` may hide strictly inside an arc of ``self``
        mids = other._gap_midpoints()
        return not np.any(self.contains(mids) & (other.distance(mids) > tol))

    def doubled(self) -> "ArcSet":
        """Image under ``z -> z^2``."""
        return ArcSet.from_intervals([(2 * lo, 2 * lo + 2 * (hi - lo)) for lo, hi in self.arcs])

    def to_list(self) -> list:
        return [[float(lo), float(hi)] for lo, hi in self.arcs]


def arc(lo, hi) -> ArcSet:
    return ArcSet.from_intervals([(lo, hi)])


# --- symbols -----------------------------------------------------------------


@dataclass(frozen=True)
class Symbol:
    """Exact sampler ``x -> M(x)``; ``x`` has shape ``(..., d)``, samples ``(..., dim, dim)``."""

    d: int
    dim: int
    sampler: Callable
    name: str = ""

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.d:
            raise ConfigurationError(f"symbol is defined on T^{self.d}, got points of dimension {x.shape[-1]}")
        return self.sampler(x)

    def grid_points(self, N: int) -> np.ndarray:
        """``2 pi m / N`` for ``m`` in ``{0..N-1}^d``, C order; shape ``(N^d, d)``."""
        axes = np.meshgrid(*([TWO_PI * np.arange(N) / N] * self.d), indexing="ij")
        return np.stack([a.ravel() for a in axes], axis=-1)

    def grid_phases(self, N: int) -> np.ndarray:
        """Multiset of eigenphases over the ``N^d`` grid (the Fourier spectrum of the truncation)."""
        mats = self(self.grid_points(N))
        return np.sort(to_unit_interval(np.angle(np.linalg.eigvals(mats))).ravel())

    def power(self, n: int) -> "Symbol":
        base = self.sampler
        return Symbol(self.d, self.dim, lambda x: np.linalg.matrix_power(base(x), n), f"{self.name}^{n}")


def _shift_phases(x: np.ndarray) -> np.ndarray:
    """``diag(e^{i x_1}, e^{-i x_1}, ..., e^{i x_d}, e^{-i x_d})`` entries, shape ``(..., 2d)``."""
    return np.exp(1j * np.stack([s * x[..., a] for a in range(x.shape[-1]) for s in (1, -1)], axis=-1))


def symbol_qw(coin, d: int) -> Symbol:
    """``M(x) = diag(e^{i x_1}, e^{-i x_1}, ...) C_inf``."""
    coin = np.array(coin, dtype=complex)
    if coin.shape != (2 * d, 2 * d):
        raise ConfigurationError(f"d={d} walk needs a {2 * d}x{2 * d} coin, got {coin.shape}")
    return Symbol(d, 2 * d, lambda x: _shift_phases(x)[..., :, None] * coin, "qw")


def symbol_cc(phi: float) -> Symbol:
    """Symbol of the Chalker-Coddington walk form with ``D = 1``, coin order ``(+1, -1, +2, -2)``."""
    r = cc_rotation_coin()
    c, s = np.cos(phi), np.sin(phi)

    def sampler(x):
        return c * r + 1j * s * (r.conj().T * _shift_phases(x)[..., None, :])

    return Symbol(2, 4, sampler, "cc")


def symbol_from_operator(op: NetworkOperator) -> Symbol:
    """Symbol of a translation-invariant operator, read from the columns at site 0."""
    shape = op.shape
    n = shape.n_sites
    cols = [shape.index(c, [0] * shape.d) for c in range(shape.coin_dim)]
    block = op.matrix[:, cols].tocoo()
    coin_out, site = np.divmod(block.row, n)
    delta = _centered(shape.site_coords(site), shape.L).reshape(-1, shape.d)
    vals, coin_in = block.data, block.col
    dim = shape.coin_dim

    def sampler(x):
        out = np.zeros(x.shape[:-1] + (dim, dim), dtype=complex)
        phase = np.exp(1j * np.tensordot(x, delta.T, axes=1))
        for k in range(vals.size):
            out[..., coin_out[k], coin_in[k]] += vals[k] * phase[..., k]
        return out

    return Symbol(shape.d, dim, sampler, "operator")


# --- band structure ----------------------------------------------------------


@dataclass(frozen=True)
class Crossing:
    point: int
    x: tuple
    pair: tuple
    phase: float


@dataclass(frozen=True)
class CriticalPoint:
    point: int
    x: tuple
    curve: int
    phase: float


@dataclass
class BandStructure:
    """Sampled eigen-decomposition of a symbol on an ``N^d`` grid.

    ``phases[p, k]``, ``vectors[p, :, k]`` and ``gradients[p, k, :]`` use
    continuity-tracked curve labels ``k``.
    """

    symbol: Symbol
    N: int
    points: np.ndarray
    phases: np.ndarray
    vectors: np.ndarray
    gradients: np.ndarray
    crossings: list
    criticals: list
    tau_M: np.ndarray
    bands: ArcSet
    resolution: float
    gap_tol: float = GAP_TOL
    grad_tol: float = GRAD_TOL
    ambiguous: list = field(default_factory=list)

    @property
    def step(self) -> float:
        return TWO_PI / self.N

    @property
    def grad_norms(self) -> np.ndarray:
        return np.linalg.norm(self.gradients, axis=-1)

    def grid_shape(self) -> tuple:
        return (self.N,) * self.symbol.d


def _eig_batch(mats):
    vals, vecs = np.linalg.eig(mats)
    vecs = vecs / np.linalg.norm(vecs, axis=-2, keepdims=True)
    return to_unit_interval(np.angle(vals)), vecs


def _match(ref_vecs, vecs):
    """Permutations ``perm[p, k]``: eigenvector of ``vecs`` continuing column ``k`` of ``ref_vecs``.

    Also returns a mask of ties (best overlap within ``OVERLAP_TIE_TOL`` of a rival).
    """
    overlap = np.abs(np.einsum("pak,pal->pkl", ref_vecs.conj(), vecs))
    perm = np.argmax(overlap, axis=-1)
    dim = overlap.shape[-1]
    bad = np.flatnonzero(np.any(np.sort(perm, axis=-1) != np.arange(dim), axis=-1))
    for p in bad:
        _, cols = linear_sum_assignment(-overlap[p])
        perm[p] = cols
    chosen = np.take_along_axis(overlap, perm[..., None], -1)[..., 0]
    rival = np.where(np.arange(dim) == perm[..., None], -np.inf, overlap).max(-1) if dim > 1 else chosen * 0 - np.inf
    ties = chosen - rival < OVERLAP_TIE_TOL
    return perm, ties


def _neighbour(grid_shape, axis, step):
    """Flat index of the neighbour along ``axis`` (periodic) for every grid point."""
    idx = np.arange(int(np.prod(grid_shape))).reshape(grid_shape)
    return np.roll(idx, -step, axis=axis).ravel()


def band_structure(sym: Symbol, N: int, gap_tol=GAP_TOL, grad_tol=GRAD_TOL, min_grid=16) -> BandStructure:
    """Eigenphase curves of ``sym`` on an ``N^d`` grid with crossings, critical points and ``tau_M``."""
    if N < min_grid:
        raise ConfigurationError(f"grid N={N} too coarse; need N >= {min_grid}")
    d, dim = sym.d, sym.dim
    gshape = (N,) * d
    h = TWO_PI / N
    points = sym.grid_points(N)
    n_pts = points.shape[0]
    phases, vecs = _eig_batch(sym(points))

    # local matching to the +/- neighbours along each axis
    plus = [_neighbour(gshape, a, 1) for a in range(d)]
    minus = [_neighbour(gshape, a, -1) for a in range(d)]
    perm_plus, ties_plus, perm_minus = [], [], []
    for a in range(d):
        pp, tp = _match(vecs, vecs[plus[a]])
        pm, _ = _match(vecs, vecs[minus[a]])
        perm_plus.append(pp)
        ties_plus.append(tp)
        perm_minus.append(pm)

    grads = np.empty((n_pts, dim, d))
    steps = []
    for a in range(d):
        fwd = wrap(phases[plus[a][:, None], perm_plus[a]] - phases)
        bwd = wrap(phases - phases[minus[a][:, None], perm_minus[a]])
        grads[:, :, a] = (fwd + bwd) / (2 * h)
        steps.append(np.abs(fwd))
    resolution = float(max(np.max(s) for s in steps)) if dim else 0.0

    crossings = _find_crossings(points, phases, perm_plus, ties_plus, plus, gap_tol)
    criticals = _find_criticals(points, phases, grads, perm_plus, plus, minus, perm_minus, grad_tol)

    # global labels: each point inherits from an earlier neighbour (C order)
    labels = np.empty((n_pts, dim), dtype=int)
    labels[0] = np.arange(dim)
    multi = np.array(np.unravel_index(np.arange(n_pts), gshape)).T
    for p in range(1, n_pts):
        a = int(np.flatnonzero(multi[p])[-1])
        q = minus[a][p]
        # perm_plus[a][q, k] continues eigen k of q into point p
        labels[p] = perm_plus[a][q][labels[q]]
    phases_l = np.take_along_axis(phases, labels, -1)
    vecs_l = np.take_along_axis(vecs, labels[:, None, :], -1)
    grads_l = np.take_along_axis(grads, labels[:, :, None], 1)
    inv = np.argsort(labels, axis=-1)
    crossings = [
        Crossing(c.point, c.x, tuple(sorted(int(inv[c.point, k]) for k in c.pair)), c.phase) for c in crossings
    ]
    criticals = [CriticalPoint(c.point, c.x, int(inv[c.point, c.curve]), c.phase) for c in criticals]

    special = [c.phase for c in crossings] + [c.phase for c in criticals]
    radius = 2 * max(resolution, h * 1e-3)
    tau = cluster(np.array(special), radius) if special else np.empty(0)
    join = resolution * (1 + 1e-9) + 1e-12
    bands = ArcSet.from_points(phases.ravel(), pad=resolution / 2, join=join)
    return BandStructure(sym, N, points, phases_l, vecs_l, grads_l, crossings, criticals, tau, bands, resolution, gap_tol, grad_tol)


def _find_crossings(points, phases, perm_plus, ties_plus, plus, gap_tol):
    n_pts, dim = phases.shape
    found = {}

    def add(p, i, j):
        key = (p, min(i, j), max(i, j))
        if key not in found:
            mean = phases[p, i] + wrap(phases[p, j] - phases[p, i]) / 2
            found[key] = Crossing(p, tuple(points[p]), (key[1], key[2]), float(to_unit_interval(mean)))

    for i in range(dim):
        for j in range(i + 1, dim):
            gap = circular_distance(phases[:, i], phases[:, j])
            for p in np.flatnonzero(gap < gap_tol):
                add(int(p), i, j)
            for a, nb in enumerate(plus):
                pi, pj = perm_plus[a][:, i], perm_plus[a][:, j]
                d0 = wrap(phases[:, i] - phases[:, j])
                d1 = wrap(phases[nb, pi] - phases[nb, pj])
                flip = (d0 * d1 < 0) & (np.abs(d0) < np.pi / 2) & (np.abs(d1) < np.pi / 2)
                for p in np.flatnonzero(flip):
                    if abs(d0[p]) <= abs(d1[p]):
                        add(int(p), i, j)
                    else:
                        add(int(nb[p]), int(pi[p]), int(pj[p]))
    # tracking ties escalate to crossings with the strongest rival
    for a, ties in enumerate(ties_plus):
        for p, k in zip(*np.nonzero(ties)):
            gaps = circular_distance(phases[p], phases[p, k])
            gaps[k] = np.inf
            add(int(p), int(k), int(np.argmin(gaps)))
    return sorted(found.values(), key=lambda c: (c.point, c.pair))


def _find_criticals(points, phases, grads, perm_plus, plus, minus, perm_minus, grad_tol):
    n_pts, dim, d = grads.shape
    flat = np.ones((n_pts, dim), dtype=bool)
    for a in range(d):
        g = grads[:, :, a]
        g_next = np.take_along_axis(grads[plus[a], :, a], perm_plus[a], -1)
        g_prev = np.take_along_axis(grads[minus[a], :, a], perm_minus[a], -1)
        small = np.abs(g) < grad_tol
        # a sign change is attributed to the endpoint with the smaller |g|
        turn_next = (g * g_next < 0) & (np.abs(g) <= np.abs(g_next))
        turn_prev = (g * g_prev < 0) & (np.abs(g) < np.abs(g_prev))
        flat &= small | turn_next | turn_prev
    return [
        CriticalPoint(int(p), tuple(points[p]), int(k), float(phases[p, k])) for p, k in zip(*np.nonzero(flat))
    ]


def essential_spectrum(bs: BandStructure) -> ArcSet:
    """Union of sampled eigenphases, bridged and padded by the phase resolution of the grid."""
    return bs.bands


# --- M-good certification --------------------------------------------------


@dataclass(frozen=True)
class MGoodCertificate:
    passed: bool
    c_delta: float
    boxes: tuple
    reason: str
    offending: tuple = ()

    def report(self) -> dict:
        return {
            "pass": self.passed,
            "c_delta": self.c_delta,
            "reason": self.reason,
            "offending": [float(v) for v in self.offending],
            "boxes": [{"curve": b[0], "lo": list(b[1]), "hi": list(b[2])} for b in self.boxes],
        }


def _dilate(mask, gshape, cells):
    grid = mask.reshape(gshape)
    out = grid.copy()
    for a in range(len(gshape)):
        acc = out.copy()
        for s in range(1, cells + 1):
            acc |= np.roll(out, s, axis=a) | np.roll(out, -s, axis=a)
        out = acc
    return out.ravel()


def preimage_mask(delta: ArcSet, bs: BandStructure) -> np.ndarray:
    """``(n_points, dim)`` mask of sampled eigenphases inside ``delta``."""
    return delta.contains(bs.phases)


def is_m_good(delta: ArcSet, bs: BandStructure, cells=SAFETY_CELLS) -> MGoodCertificate:
    """Certify ``delta`` against crossings and critical points of the sampled bands."""
    tol = max(bs.resolution, 1e-12)
    if not delta.arcs or not delta.is_subset(bs.bands, tol=tol):
        return MGoodCertificate(False, 0.0, (), "outside essential spectrum")
    near = tuple(t for t in bs.tau_M if delta.distance(t) <= tol)
    if near:
        return MGoodCertificate(False, 0.0, (), "intersects tau_M", near)

    gshape = bs.grid_shape()
    pre = preimage_mask(delta, bs)
    dim = bs.phases.shape[1]
    bad = np.zeros_like(pre)
    for c in bs.crossings:
        bad[c.point, list(c.pair)] = True
    for c in bs.criticals:
        bad[c.point, c.curve] = True
    offending = []
    for k in range(dim):
        close = _dilate(bad[:, k], gshape, cells) & pre[:, k]
        offending.extend(bs.phases[close, k].tolist())
    if offending:
        return MGoodCertificate(False, 0.0, (), "preimage within safety margin of a crossing or critical point",
                                tuple(cluster(np.array(offending), 2 * tol)))
    if not pre.any():
        return MGoodCertificate(False, 0.0, (), "no sampled preimage")

    c_delta = float(np.min(bs.grad_norms[pre] ** 2))
    if c_delta <= 0:
        return MGoodCertificate(False, c_delta, (), "vanishing gradient on the preimage")
    boxes = []
    h = bs.step
    for k in range(dim):
        lab, _ = ndimage.label(pre[:, k].reshape(gshape))
        for sl in ndimage.find_objects(lab):
            lo = tuple(float((s.start - cells) * h) for s in sl)
            hi = tuple(float((s.stop - 1 + cells) * h) for s in sl)
            boxes.append((k, lo, hi))
    return MGoodCertificate(True, c_delta, tuple(boxes), "ok")


# --- closed forms --------------------------------------------------------------


@dataclass(frozen=True)
class ClosedForm:
    bands: ArcSet
    tau_M: np.ndarray


def _unique_phases(phases, tol=1e-12):
    return cluster(np.asarray(phases, dtype=float), tol)


def qw1d_closed_form(alpha, eta=0.0) -> ClosedForm:
    """Bands ``e^{-i eta}(p +- i sqrt(1 - p^2))``, ``|p| <= |alpha|``, and the band-edge ``tau_M``."""
    a = abs(complex(alpha))
    if a > 1 + 1e-12:
        raise ConfigurationError(f"|alpha| = {a} > 1")
    a0 = float(np.arccos(min(a, 1.0)))
    bands = ArcSet.from_intervals([(-eta + a0, -eta + np.pi - a0), (-eta + np.pi + a0, -eta + TWO_PI - a0)])
    tau = _unique_phases(-eta + np.array([a0, np.pi - a0, np.pi + a0, TWO_PI - a0]))
    return ClosedForm(bands, tau)


def cc_half_width(phi: float) -> float:
    """Half-width of each CC band: ``arcsin(sin 2 phi) / 2 = min(phi, pi/2 - phi)``."""
    return float(np.arcsin(np.clip(np.sin(2 * phi), -1, 1)) / 2)


def cc_closed_form(phi: float) -> ClosedForm:
    """Four arcs centred on ``{0, pi/2, pi, 3 pi/2}`` and the centres plus edges as ``tau_M``."""
    if not 0 <= phi <= np.pi / 2 + 1e-15:
        raise ConfigurationError(f"phi must lie in [0, pi/2], got {phi}")
    w = cc_half_width(phi)
    centres = np.arange(4) * np.pi / 2
    bands = ArcSet.from_intervals([(c - w, c + w) for c in centres])
    tau = _unique_phases(np.concatenate([centres, centres - w, centres + w]))
    return ClosedForm(bands, tau)


def bb_closed_form_via_square(alpha, eta=0.0) -> ClosedForm:
    """Angle-doubled image of :func:`qw1d_closed_form`."""
    qw = qw1d_closed_form(alpha, eta)
    return ClosedForm(qw.bands.doubled(), _unique_phases(2 * qw.tau_M))


def qw1d_gradient_squared(alpha, eta, theta):
    """``|grad lambda|^2 = (|alpha|^2 - p^2) / (1 - p^2)`` at quasienergy ``theta``, ``p = cos(theta + eta)``."""
    a2 = abs(complex(alpha)) ** 2
    p2 = np.cos(np.asarray(theta) + eta) ** 2
    return (a2 - p2) / (1 - p2)


def qw1d_c_delta(alpha, eta, delta: ArcSet, samples=4097) -> float:
    """Closed-form ``min |grad lambda|^2`` over the closure of ``delta``."""
    theta = np.concatenate([np.linspace(lo, hi, samples) for lo, hi in delta])
    return float(np.min(qw1d_gradient_squared(alpha, eta, theta)))


def coin_alpha_eta(coin):
    """``(alpha, eta)`` of a 2x2 coin, for the one-dimensional closed forms."""
    alpha, _, eta = coin_parameters(coin)
    return alpha, eta


def sampled_gradients(sym: Symbol, points, vecs, phases, delta=1e-6) -> np.ndarray:
    """Centered differences of eigenphases at ``points`` with a small off-grid step.

    Eigenpairs at ``x +- delta e_a`` are matched by overlap to the columns of
    ``vecs``; returns ``(n_points, dim, d)``.
    """
    points = np.asarray(points, dtype=float)
    out = np.empty(phases.shape + (sym.d,))
    for a in range(sym.d):
        e = np.zeros(sym.d)
        e[a] = delta
        ph_p, v_p = _eig_batch(sym(points + e))
        ph_m, v_m = _eig_batch(sym(points - e))
        perm_p, _ = _match(vecs, v_p)
        perm_m, _ = _match(vecs, v_m)
        fwd = wrap(np.take_along_axis(ph_p, perm_p, -1) - phases)
        bwd = wrap(phases - np.take_along_axis(ph_m, perm_m, -1))
        out[..., a] = (fwd + bwd) / (2 * delta)
    return out
