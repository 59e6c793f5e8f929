"""Vectors and sparse banded unitary operators on the periodic lattice.

The Hilbert space is ``C^{d'} (x) l^2((Z/LZ)^d)``.  Linear indices are
coin-major: ``index = coin * L**d + site`` where ``site`` is the C-order
(lexicographic) ravel of the site coordinates.  For quantum walks the coin
positions ``0, 1, 2, 3, ...`` carry the labels ``+1, -1, +2, -2, ...``; label
``+k`` moves a particle by ``+f_k`` under the shift.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, ValidationError, WrapError

__all__ = [
    "LatticeShape",
    "UnitaryMatrix",
    "CoinField",
    "NetworkOperator",
    "StateVector",
    "coin_position",
    "coin_label",
    "displacement",
    "unitary_defect",
    "build_shift",
    "build_coin_operator",
    "compose",
    "apply",
    "check_locality",
    "identity",
]

UNITARY_TOL = 1e-12
REORTHONORMALIZE_TOL = 1e-10
COUPLING_ATOL = 1e-13


@dataclass(frozen=True)
class LatticeShape:
    d: int
    L: int
    coin_dim: int

    def __post_init__(self):
        if self.d < 1 or self.coin_dim < 1:
            raise ConfigurationError(f"invalid lattice shape {self}")
        if self.L < 4 or self.L % 2:
            raise ConfigurationError(f"truncation L must be even and >= 4, got {self.L}")

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def dim(self) -> int:
        return self.coin_dim * self.n_sites

    @property
    def grid(self) -> tuple:
        return (self.L,) * self.d

    def site_index(self, site: Sequence[int]) -> int:
        site = np.mod(np.atleast_1d(site), self.L)
        return int(np.ravel_multi_index(tuple(site), self.grid))

    def site_coords(self, site_index) -> np.ndarray:
        """Coordinates in ``{0..L-1}^d``; shape ``(..., d)``."""
        return np.stack(np.unravel_index(site_index, self.grid), axis=-1)

    def index(self, coin: int, site: Sequence[int]) -> int:
        return coin * self.n_sites + self.site_index(site)

    def centered_coords(self, center=None) -> np.ndarray:
        """Site coordinates as representatives in ``(-L/2, L/2]`` around ``center``.

        Returns an ``(n_sites, d)`` integer array.
        """
        coords = self.site_coords(np.arange(self.n_sites))
        if center is not None:
            coords = coords - np.asarray(center)
        return _centered(coords, self.L)


def _centered(delta, L):
    """Map integer offsets to the representative in ``(-L/2, L/2]``."""
    delta = np.mod(delta, L)
    return np.where(delta > L // 2, delta - L, delta)


def torus_distance(a, b, L) -> np.ndarray:
    """Graph (L1) distance on ``(Z/LZ)^d`` between coordinate arrays ``a`` and ``b``."""
    delta = np.abs(_centered(np.asarray(a) - np.asarray(b), L))
    return delta.sum(axis=-1)


def coin_position(tau: int) -> int:
    """Position of the label ``tau`` in ``{1, -1, ..., d, -d}``."""
    if tau == 0:
        raise ConfigurationError("coin label 0 does not exist")
    return 2 * (abs(tau) - 1) + (0 if tau > 0 else 1)


def coin_label(position: int) -> int:
    k = position // 2 + 1
    return k if position % 2 == 0 else -k


def displacement(tau: int, d: int) -> np.ndarray:
    """Lattice step ``sign(tau) f_|tau|`` of the coin label ``tau``."""
    if abs(tau) > d:
        raise ConfigurationError(f"coin label {tau} exceeds dimension {d}")
    step = np.zeros(d, dtype=int)
    step[abs(tau) - 1] = 1 if tau > 0 else -1
    return step


def unitary_defect(m) -> float:
    """Frobenius norm of ``M* M - I`` for a dense or sparse square matrix."""
    if sp.issparse(m):
        gram = (m.conj().T @ m) - sp.identity(m.shape[0], format="csr")
        return float(sp.linalg.norm(gram, "fro")) if gram.nnz else 0.0
    m = np.asarray(m)
    return float(np.linalg.norm(m.conj().T @ m - np.eye(m.shape[0])))


@dataclass(frozen=True)
class UnitaryMatrix:
    """A small dense matrix certified unitary within ``tol``.

    Use :meth:`from_parameters` for matrices computed from parameter formulas:
    those are re-orthonormalized (polar factor) if their unitarity drift
    exceeds ``1e-10`` and the fact is recorded in ``reorthonormalized``.
    """

    entries: np.ndarray
    tol: float = UNITARY_TOL
    reorthonormalized: bool = False

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"expected a square matrix, got shape {entries.shape}")
        defect = unitary_defect(entries)
        if defect > self.tol:
            raise ValidationError(f"matrix is not unitary: ||M*M - I||_F = {defect:.3e}")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_parameters(cls, entries, tol=UNITARY_TOL):
        entries = np.asarray(entries, dtype=complex)
        if unitary_defect(entries) > REORTHONORMALIZE_TOL:
            u, _, vh = np.linalg.svd(entries)
            return cls(u @ vh, tol=tol, reorthonormalized=True)
        return cls(entries, tol=tol)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


@dataclass(frozen=True)
class CoinField:
    """Unitary ``d' x d'`` blocks ``C(j)`` for every site of ``(Z/LZ)^d``.

    ``blocks`` has shape ``(L,)*d + (d', d')``; ``blocks[j]`` is ``C(j)`` for the
    site with coordinates ``j`` in ``{0..L-1}^d``.
    """

    blocks: np.ndarray
    d: int

    def __post_init__(self):
        blocks = np.array(self.blocks, dtype=complex)
        if blocks.ndim != self.d + 2 or blocks.shape[-1] != blocks.shape[-2]:
            raise ConfigurationError(f"coin field has shape {blocks.shape}, expected (L,)*{self.d} + (k, k)")
        if len(set(blocks.shape[: self.d])) != 1:
            raise ConfigurationError(f"coin field does not cover a cubic truncation: {blocks.shape}")
        blocks.setflags(write=False)
        object.__setattr__(self, "blocks", blocks)

    @classmethod
    def homogeneous(cls, matrix, d: int, L: int) -> "CoinField":
        matrix = np.asarray(matrix, dtype=complex)
        return cls(np.broadcast_to(matrix, (L,) * d + matrix.shape), d)

    @property
    def L(self) -> int:
        return self.blocks.shape[0]

    @property
    def coin_dim(self) -> int:
        return self.blocks.shape[-1]

    def flat_blocks(self) -> np.ndarray:
        """Blocks in site-index order, shape ``(L**d, d', d')``."""
        return self.blocks.reshape(-1, self.coin_dim, self.coin_dim)

    def validate(self, tol=UNITARY_TOL):
        flat = self.flat_blocks()
        gram = np.einsum("sji,sjk->sik", flat.conj(), flat) - np.eye(self.coin_dim)
        defects = np.linalg.norm(gram, axis=(1, 2))
        bad = np.flatnonzero(defects > tol)
        if bad.size:
            site = tuple(int(c) for c in np.unravel_index(bad[0], (self.L,) * self.d))
            raise ValidationError(
                f"coin at site {site} is not unitary (defect {defects[bad[0]]:.3e})", where=site
            )

    def deviation_norms(self) -> np.ndarray:
        """Spectral norm ``||C(j) - 1||`` per site, shape ``(L,)*d``."""
        diff = self.flat_blocks() - np.eye(self.coin_dim)
        norms = np.linalg.norm(diff, ord=2, axis=(1, 2))
        return norms.reshape((self.L,) * self.d)


def _site_coords_of(indices, shape: LatticeShape) -> np.ndarray:
    return shape.site_coords(np.asarray(indices) % shape.n_sites)


def _bandwidth(matrix: sp.csr_matrix, shape: LatticeShape, atol=0.0) -> int:
    coo = matrix.tocoo()
    keep = np.abs(coo.data) > atol
    if not np.any(keep):
        return 0
    rows = _site_coords_of(coo.row[keep], shape)
    cols = _site_coords_of(coo.col[keep], shape)
    return int(torus_distance(rows, cols, shape.L).max())


@dataclass(frozen=True)
class NetworkOperator:
    """Sparse operator on ``C^{d'} (x) l^2((Z/LZ)^d)``.

    Immutable: the CSR arrays are flagged read-only after construction.
    ``bandwidth`` is the largest torus distance between coupled sites.
    """

    shape: LatticeShape
    matrix: sp.csr_matrix
    bandwidth: int = field(default=-1)

    def __post_init__(self):
        matrix = sp.csr_matrix(self.matrix, dtype=complex, copy=True)
        if matrix.shape != (self.shape.dim, self.shape.dim):
            raise ConfigurationError(
                f"matrix shape {matrix.shape} does not match lattice dimension {self.shape.dim}"
            )
        matrix.eliminate_zeros()
        matrix.sort_indices()
        for arr in (matrix.data, matrix.indices, matrix.indptr):
            arr.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        if self.bandwidth < 0:
            object.__setattr__(self, "bandwidth", _bandwidth(matrix, self.shape))

    @classmethod
    def from_dense(cls, shape: LatticeShape, dense) -> "NetworkOperator":
        return cls(shape, sp.csr_matrix(np.asarray(dense, dtype=complex)))

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def adjoint(self) -> "NetworkOperator":
        return NetworkOperator(self.shape, self.matrix.conj().T.tocsr(), self.bandwidth)

    def unitarity_defect(self) -> float:
        return unitary_defect(self.matrix)

    def check_unitary(self, tol=UNITARY_TOL) -> float:
        defect = self.unitarity_defect()
        if defect > tol:
            raise ValidationError(f"operator is not unitary: ||U*U - I||_F = {defect:.3e}")
        return defect

    def nonzeros(self):
        """List of ``(row, col, value)`` triples in row-major order."""
        coo = self.matrix.tocoo()
        return list(zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist()))

    def to_csv(self, path):
        """Write the coordinate list with a ``#``-prefixed shape header."""
        coo = self.matrix.tocoo()
        with open(path, "w", newline="") as fh:
            fh.write(
                f"# d={self.shape.d} L={self.shape.L} coin_dim={self.shape.coin_dim} "
                f"bandwidth={self.bandwidth} nnz={coo.nnz}\n"
            )
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["row", "col", "re", "im"])
            for r, c, v in zip(coo.row, coo.col, coo.data):
                writer.writerow([int(r), int(c), repr(float(v.real)), repr(float(v.imag))])

    @classmethod
    def from_csv(cls, path) -> "NetworkOperator":
        with open(path, newline="") as fh:
            header = fh.readline().lstrip("#").split()
            meta = dict(item.split("=") for item in header)
            reader = csv.DictReader(fh)
            rows, cols, vals = [], [], []
            for rec in reader:
                rows.append(int(rec["row"]))
                cols.append(int(rec["col"]))
                vals.append(complex(float(rec["re"]), float(rec["im"])))
        shape = LatticeShape(int(meta["d"]), int(meta["L"]), int(meta["coin_dim"]))
        matrix = sp.csr_matrix((vals, (rows, cols)), shape=(shape.dim, shape.dim))
        return cls(shape, matrix, int(meta["bandwidth"]))


@dataclass(frozen=True)
class StateVector:
    shape: LatticeShape
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if amps.size != self.shape.dim:
            raise ConfigurationError(f"state has {amps.size} amplitudes, lattice needs {self.shape.dim}")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, shape: LatticeShape, tau: int, site: Sequence[int]) -> "StateVector":
        """The basis vector ``|tau (x) site>`` (``tau`` is a coin label, e.g. ``+1``)."""
        amps = np.zeros(shape.dim, dtype=complex)
        amps[shape.index(coin_position(tau), site)] = 1.0
        return cls(shape, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def by_coin(self) -> np.ndarray:
        """Amplitudes reshaped to ``(coin_dim, L, ..., L)``."""
        return self.amplitudes.reshape((self.shape.coin_dim,) + self.shape.grid)

    def site_probabilities(self) -> np.ndarray:
        """``|psi(j)|^2`` summed over the coin, flat in site-index order."""
        return (np.abs(self.amplitudes.reshape(self.shape.coin_dim, -1)) ** 2).sum(axis=0)


def identity(shape: LatticeShape) -> NetworkOperator:
    return NetworkOperator(shape, sp.identity(shape.dim, dtype=complex, format="csr"), 0)


def build_shift(shape: LatticeShape) -> NetworkOperator:
    """Symmetric shift ``S |tau (x) j> = |tau (x) j + tau>`` with periodic wrap."""
    if shape.coin_dim != 2 * shape.d:
        raise ConfigurationError(
            f"symmetric shift needs coin_dim = 2d = {2 * shape.d}, got {shape.coin_dim}"
        )
    coords = shape.site_coords(np.arange(shape.n_sites))
    rows, cols = [], []
    for pos in range(shape.coin_dim):
        target = np.mod(coords + displacement(coin_label(pos), shape.d), shape.L)
        target_idx = np.ravel_multi_index(tuple(target.T), shape.grid)
        rows.append(pos * shape.n_sites + target_idx)
        cols.append(pos * shape.n_sites + np.arange(shape.n_sites))
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    matrix = sp.csr_matrix((np.ones(rows.size, dtype=complex), (rows, cols)), shape=(shape.dim,) * 2)
    return NetworkOperator(shape, matrix, 1)


def build_coin_operator(field: CoinField, shape: LatticeShape | None = None, tol=UNITARY_TOL) -> NetworkOperator:
    """Block-diagonal ``C = sum_j C(j) (x) |j><j|``."""
    if shape is None:
        shape = LatticeShape(field.d, field.L, field.coin_dim)
    if field.d != shape.d or field.L != shape.L:
        raise ConfigurationError(
            f"coin field covers (Z/{field.L}Z)^{field.d}, lattice is (Z/{shape.L}Z)^{shape.d}"
        )
    if field.coin_dim != shape.coin_dim:
        raise ConfigurationError(f"coin blocks are {field.coin_dim}x{field.coin_dim}, lattice needs {shape.coin_dim}")
    field.validate(tol)
    k, n = shape.coin_dim, shape.n_sites
    flat = field.flat_blocks()
    out_c, in_c = np.meshgrid(np.arange(k), np.arange(k), indexing="ij")
    sites = np.arange(n)
    rows = (out_c[..., None] * n + sites).reshape(-1)
    cols = (in_c[..., None] * n + sites).reshape(-1)
    vals = np.moveaxis(flat, 0, -1).reshape(-1)
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(shape.dim,) * 2)
    return NetworkOperator(shape, matrix, 0)


def compose(a: NetworkOperator, b: NetworkOperator) -> NetworkOperator:
    """The product ``a @ b`` (``b`` acts first)."""
    if a.shape != b.shape:
        raise ConfigurationError(f"cannot compose operators on {a.shape} and {b.shape}")
    return NetworkOperator(a.shape, (a.matrix @ b.matrix).tocsr())


def apply(op: NetworkOperator, v: StateVector) -> StateVector:
    if op.shape != v.shape:
        raise ConfigurationError(f"operator on {op.shape} applied to state on {v.shape}")
    return StateVector(op.shape, op.matrix @ v.amplitudes)


def check_locality(op: NetworkOperator, n: int, atol=COUPLING_ATOL) -> int:
    """Largest torus distance between sites coupled by ``op**n``.

    Entries with modulus at most ``atol`` count as uncoupled.
    """
    if n < 1:
        raise ConfigurationError("power must be >= 1")
    if 2 * n >= op.shape.L:
        raise WrapError(f"power {n} >= L/2 = {op.shape.L // 2}: couplings would wrap around the torus")
    power = op.matrix
    for _ in range(n - 1):
        power = power @ op.matrix
    return _bandwidth(power.tocsr(), op.shape, atol)


def operator_power(op: NetworkOperator, n: int) -> NetworkOperator:
    power = identity(op.shape).matrix
    for _ in range(n):
        power = op.matrix @ power
    return NetworkOperator(op.shape, power.tocsr())
