"""Exact linear operators on spatiotemporal covariance matrices.

A covariance over p spatial coordinates and T time frames is a pT x pT
matrix, space-fastest / time-slowest, i.e. a T x T grid of p x p blocks
where block (i, j) couples frame i to frame j.  Everything here is built
on two index permutations:

* rearrangement: map the block grid to a T^2 x p^2 matrix whose row
  (j*T + i) is the column-major vectorization of block (i, j).  Under
  this map a Kronecker product A (x) B becomes the rank-1 outer product
  vec(A) vec(B)^T.
* diagonal compression: collapse the T^2 rows onto the 2T-1 block
  diagonals with sqrt(T - |offset|) weights, so that block Toeplitz
  structure (block (i, j) depending only on j - i) becomes an
  unconstrained (2T-1) x p^2 matrix.

All operations are pure; array payloads are marked read-only after
construction so values can be shared freely across threads.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SYMMETRY_RTOL = 1e-12


def _frozen_array(a, dtype=float) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpaceTimeDims:
    """Grid sizes: p spatial variables per frame, T frames per window."""

    p: int
    T: int

    def __post_init__(self):
        if self.p < 1 or self.T < 1:
            raise ValueError(f"grid sizes must be >= 1, got p={self.p}, T={self.T}")

    @property
    def pt(self) -> int:
        return self.p * self.T


@dataclass(frozen=True)
class DenseCovariance:
    """A pT x pT symmetric matrix in space-fastest, time-slowest order.

    Construction rejects asymmetric input (beyond 1e-12 relative) instead
    of symmetrizing it, so pipeline bugs surface where they happen.
    """

    dims: SpaceTimeDims
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen_array(self.entries)
        n = self.dims.pt
        if entries.shape != (n, n):
            raise ValueError(
                f"covariance shape {entries.shape} does not match dims "
                f"(p={self.dims.p}, T={self.dims.T}, pT={n})"
            )
        scale = np.abs(entries).max() if entries.size else 0.0
        asym = np.abs(entries - entries.T).max()
        if asym > SYMMETRY_RTOL * max(scale, 1e-300):
            raise ValueError(
                f"matrix is not symmetric: max asymmetry {asym:.3e} "
                f"exceeds {SYMMETRY_RTOL:.0e} * max|entry| = {SYMMETRY_RTOL * scale:.3e}"
            )
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class RearrangedMatrix:
    """T^2 x p^2 image of a covariance; row j*T + i holds vec(block(i, j))."""

    dims: SpaceTimeDims
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen_array(self.entries)
        want = (self.dims.T ** 2, self.dims.p ** 2)
        if entries.shape != want:
            raise ValueError(f"rearranged shape {entries.shape}, expected {want}")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class ToeplitzCompressed:
    """(2T-1) x p^2 matrix of weighted block-diagonal sums.

    Row o + T - 1 corresponds to diagonal offset o in [-(T-1), T-1] and
    carries the sqrt(T - |o|) weight relative to the per-diagonal value.
    """

    dims: SpaceTimeDims
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen_array(self.entries)
        want = (2 * self.dims.T - 1, self.dims.p ** 2)
        if entries.shape != want:
            raise ValueError(f"compressed shape {entries.shape}, expected {want}")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class EntryMask:
    """0/1 masks selecting the fit entries: full (T^2 x p^2) and compressed."""

    full: np.ndarray
    compressed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "full", _frozen_array(self.full))
        object.__setattr__(self, "compressed", _frozen_array(self.compressed))


def row_offsets(T: int) -> np.ndarray:
    """Diagonal offset j - i for every rearranged row k = j*T + i."""
    k = np.arange(T * T)
    return k // T - k % T


def diagonal_weights(T: int) -> np.ndarray:
    """sqrt(T - |o|) for offsets o = -(T-1) .. T-1, in row order."""
    return np.sqrt(T - np.abs(np.arange(-(T - 1), T)))


def rearrange(sigma: DenseCovariance) -> RearrangedMatrix:
    """Permute a covariance into its T^2 x p^2 rearranged image.

    For any A (T x T) and B (p x p), the image of A (x) B is
    vec(A) vec(B)^T with column-major vec.
    """
    p, T = sigma.dims.p, sigma.dims.T
    blocks = sigma.entries.reshape(T, p, T, p)
    # [i, m, j, l] -> row (j, i), column (l, m)
    out = blocks.transpose(2, 0, 3, 1).reshape(T * T, p * p)
    return RearrangedMatrix(sigma.dims, out)


def derearrange(r: RearrangedMatrix) -> DenseCovariance:
    """Invert :func:`rearrange` (a pure index permutation, exact).

    The output is not forced symmetric; it is symmetric exactly when the
    input lies in the rearranged image of a symmetric matrix.
    """
    p, T = r.dims.p, r.dims.T
    grid = r.entries.reshape(T, T, p, p)
    entries = grid.transpose(1, 3, 0, 2).reshape(T * p, T * p)
    # bypass the symmetry gate: derearrangement of a generic matrix need not
    # be symmetric, and the contract explicitly allows that
    obj = object.__new__(DenseCovariance)
    object.__setattr__(obj, "dims", r.dims)
    object.__setattr__(obj, "entries", _frozen_array(entries))
    return obj


def compress_diagonals(rows: np.ndarray, T: int) -> np.ndarray:
    """Weighted sums of rearranged rows over the 2T-1 block diagonals."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[0] != T * T:
        raise ValueError(f"expected {T * T} rows, got {rows.shape[0]}")
    out = np.zeros((2 * T - 1, rows.shape[1]))
    np.add.at(out, row_offsets(T) + T - 1, rows)
    return out / diagonal_weights(T)[:, None]


def expand_diagonals(compressed: np.ndarray, T: int) -> np.ndarray:
    """Right inverse of :func:`compress_diagonals`: spread each diagonal row
    back over its T - |o| block positions with matching weights."""
    compressed = np.asarray(compressed, dtype=float)
    if compressed.shape[0] != 2 * T - 1:
        raise ValueError(f"expected {2 * T - 1} rows, got {compressed.shape[0]}")
    rows = row_offsets(T) + T - 1
    return compressed[rows] / diagonal_weights(T)[rows][:, None]


def toeplitz_project(r: RearrangedMatrix) -> ToeplitzCompressed:
    """Compress a rearranged matrix onto its 2T-1 weighted block diagonals."""
    return ToeplitzCompressed(r.dims, compress_diagonals(r.entries, r.dims.T))


def toeplitz_embed(t: ToeplitzCompressed) -> RearrangedMatrix:
    """Embed compressed diagonals back into T^2 x p^2 rearranged form.

    Composition facts: project(embed(t)) == t, and embed . project is the
    orthogonal projector onto rearranged images of block Toeplitz matrices.
    """
    return RearrangedMatrix(t.dims, expand_diagonals(t.entries, t.dims.T))


def diag_mask(dims: SpaceTimeDims) -> EntryMask:
    """Masks that exclude the covariance diagonal from a rearranged fit.

    A full-mask entry is zero iff its row lies on the zero-offset block
    diagonal and its column is the vec-position of a diagonal element of a
    p x p block; the compressed mask is sign(project(full)).
    """
    p, T = dims.p, dims.T
    full = np.ones((T * T, p * p))
    diag_rows = row_offsets(T) == 0
    diag_cols = np.arange(p) * p + np.arange(p)
    full[np.ix_(diag_rows, diag_cols)] = 0.0
    compressed = np.sign(compress_diagonals(full, T))
    return EntryMask(full, compressed)


def kron_assemble(dims: SpaceTimeDims, factors, u=None) -> DenseCovariance:
    """Assemble sum_i T_i (x) S_i + I (x) diag(u) as a dense covariance.

    `factors` is a sequence of (temporal T x T, spatial p x p) pairs; `u`
    is a length-p vector (scalar or None meaning zeros).
    """
    p, T = dims.p, dims.T
    total = np.zeros((dims.pt, dims.pt))
    for tm, sm in factors:
        tm = np.asarray(tm, dtype=float)
        sm = np.asarray(sm, dtype=float)
        if tm.shape != (T, T) or sm.shape != (p, p):
            raise ValueError(
                f"factor shapes {tm.shape}, {sm.shape} do not match dims (T={T}, p={p})"
            )
        total += np.kron(tm, sm)
    if u is not None:
        uvec = np.broadcast_to(np.asarray(u, dtype=float), (p,))
        total += np.kron(np.eye(T), np.diag(uvec))
    return DenseCovariance(dims, total)


def block(sigma: DenseCovariance, i: int, j: int) -> np.ndarray:
    """Return the p x p sub-block coupling frame i to frame j (0-based)."""
    p, T = sigma.dims.p, sigma.dims.T
    if not (0 <= i < T and 0 <= j < T):
        raise IndexError(f"frame indices ({i}, {j}) out of range for T={T}")
    return sigma.entries[i * p:(i + 1) * p, j * p:(j + 1) * p]
