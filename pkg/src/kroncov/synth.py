"""Synthetic ground truths, samplers, and labeled anomaly streams.

Randomness is pinned to ``numpy.random.default_rng`` (PCG64) seeded with an
explicit integer, so every generator is a deterministic function of its
parameters and seed.  Parallel Monte-Carlo callers must derive one seed per
trial (see the benchmark driver) so aggregates are order independent.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import toeplitz

from .kron_ops import DenseCovariance, SpaceTimeDims, _frozen_array

# conventional degrees of freedom for heavy-tailed benchmark cells
DEFAULT_HEAVY_TAIL_DOF = 3.0


@dataclass(frozen=True)
class SampleSet:
    """n vectors of length pT plus the seed they were generated from.

    `seed` is None for observational data (e.g. windows cut from a CSV
    stream); synthesized sets regenerate bit-identically from their seed.
    """

    dims: SpaceTimeDims
    n: int
    samples: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        samples = _frozen_array(self.samples)
        if samples.shape != (self.n, self.dims.pt):
            raise ValueError(
                f"sample array shape {samples.shape}, expected ({self.n}, {self.dims.pt})"
            )
        object.__setattr__(self, "samples", samples)


@dataclass(frozen=True)
class GroundTruth:
    """A known positive definite covariance with a provenance string."""

    sigma: DenseCovariance
    description: str

    def __post_init__(self):
        lam_min = np.linalg.eigvalsh(self.sigma.entries)[0]
        if lam_min <= 0:
            raise ValueError(f"ground truth is not positive definite (min eig {lam_min:.3e})")


def ar1_cov(dim: int, coeff: float) -> np.ndarray:
    """Stationary AR(1) covariance: entry (i, j) = coeff^|i-j|."""
    if not abs(coeff) < 1:
        raise ValueError(f"AR coefficient must satisfy |coeff| < 1, got {coeff}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    return toeplitz(coeff ** np.arange(dim))


def ar1_kron_truth(p: int = 100, T: int = 10, tcoeff: float = 0.5, scoeff: float = 0.95) -> GroundTruth:
    """Kronecker product of a temporal and a spatial AR(1) covariance.

    Defaults give the standard benchmark truth: a 100-variable grid over
    10 frames with AR coefficients 0.5 (time) and 0.95 (space).
    """
    sigma = np.kron(ar1_cov(T, tcoeff), ar1_cov(p, scoeff))
    dims = SpaceTimeDims(p=p, T=T)
    desc = f"AR(1) Kronecker truth: p={p}, T={T}, time coeff {tcoeff}, space coeff {scoeff}"
    return GroundTruth(DenseCovariance(dims, sigma), desc)


def _symmetric_sqrt(entries: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(entries)
    lmax = lam[-1] if lam.size else 0.0
    if lam[0] < -1e-10 * max(lmax, 1.0):
        raise ValueError(f"covariance is not positive semidefinite (min eig {lam[0]:.3e})")
    root = (vecs * np.sqrt(np.maximum(lam, 0.0))) @ vecs.T
    return 0.5 * (root + root.T)


def sample_gaussian(truth: GroundTruth, n: int, seed: int) -> SampleSet:
    """Draw n iid zero-mean Gaussian vectors with the given covariance.

    Uses the symmetric square root of the covariance applied to standard
    normal draws; identical seeds reproduce the set bit for bit.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    dims = truth.sigma.dims
    root = _symmetric_sqrt(truth.sigma.entries)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, dims.pt))
    return SampleSet(dims, n, z @ root, seed)


def sample_student_t(truth: GroundTruth, dof: float, n: int, seed: int) -> SampleSet:
    """Heavy-tailed elliptical samples sharing the truth's scatter shape.

    Each sample is a Gaussian draw times sqrt(dof / w) with w an
    independent chi-squared(dof) variate.  The Gaussian block is drawn
    first, so a fixed seed shares its z-draws with :func:`sample_gaussian`.
    """
    if dof <= 0:
        raise ValueError("degrees of freedom must be positive")
    if n < 1:
        raise ValueError("need at least one sample")
    dims = truth.sigma.dims
    root = _symmetric_sqrt(truth.sigma.entries)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, dims.pt))
    w = rng.chisquare(dof, size=n)
    scale = np.sqrt(dof / w)
    return SampleSet(dims, n, (z @ root) * scale[:, None], seed)


def ar1_frame_stream(p: int, n_frames: int, tcoeff: float = 0.5,
                     scoeff: float = 0.95, seed: int = 0,
                     dof: float | None = None) -> np.ndarray:
    """Stationary stream of spatially correlated frames with AR(1) memory.

    frame_t = tcoeff * frame_{t-1} + sqrt(1 - tcoeff^2) * eta_t with
    eta_t ~ N(0, ar1_cov(p, scoeff)), started from stationarity, so any
    length-T window has covariance ar1_cov(T, tcoeff) (x) ar1_cov(p, scoeff).

    With `dof` set, every frame is additionally scaled by an independent
    sqrt(dof / chi2(dof)) burst factor.  The bursts are heavy-tailed but
    mean-preserving, and the length-T window covariance keeps its block
    Toeplitz Kronecker-plus-diagonal form (off-diagonal blocks scale by
    E[s]^2, diagonal blocks by E[s^2]).
    """
    if not abs(tcoeff) < 1:
        raise ValueError(f"AR coefficient must satisfy |coeff| < 1, got {tcoeff}")
    if n_frames < 1:
        raise ValueError("need at least one frame")
    root = _symmetric_sqrt(ar1_cov(p, scoeff))
    rng = np.random.default_rng(seed)
    innov = rng.standard_normal((n_frames, p)) @ root
    frames = np.empty((n_frames, p))
    frames[0] = innov[0]
    damp = np.sqrt(1.0 - tcoeff ** 2)
    for t in range(1, n_frames):
        frames[t] = tcoeff * frames[t - 1] + damp * innov[t]
    if dof is not None:
        if dof <= 0:
            raise ValueError("degrees of freedom must be positive")
        scale = np.sqrt(dof / rng.chisquare(dof, size=n_frames))
        frames = frames * scale[:, None]
    return frames


def inject_anomalies(base, rate: float, magnitude: float, seed: int,
                     mean_length: float = 5.0, width_range=(0.5, 1.0)):
    """Overlay contiguous anomalous episodes on a frame series.

    `base` is a SampleSet treated as a time series (one frame per row) or a
    plain (n, d) array.  Episodes start at a hazard calibrated so roughly
    `rate` of all frames are anomalous and last Geometric(1/mean_length)
    frames.  Each episode adds a sustained mean shift of `magnitude`
    per-coordinate standard deviations (one random sign per episode) to a
    random contiguous block of coordinates, mimicking a coherent
    disturbance moving through part of the field.  `width_range` gives the
    block width as a fraction of d; (1.0, 1.0) shifts the whole field.

    Returns (series, labels) with frame-level 0/1 labels.
    """
    if not 0 <= rate < 1:
        raise ValueError(f"rate must lie in [0, 1), got {rate}")
    arr = base.samples if isinstance(base, SampleSet) else np.asarray(base, dtype=float)
    n, d = arr.shape
    series = arr.copy()
    labels = np.zeros(n, dtype=int)
    if rate == 0:
        return series, labels

    rng = np.random.default_rng(seed)
    hazard = rate / (mean_length * (1.0 - rate))
    std = arr.std(axis=0)
    w_lo = max(1, int(np.ceil(width_range[0] * d)))
    w_hi = max(w_lo, min(d, int(np.floor(width_range[1] * d))))
    t = 0
    while t < n:
        if rng.random() < hazard:
            length = int(rng.geometric(1.0 / mean_length))
            width = int(rng.integers(w_lo, w_hi + 1))
            lo = int(rng.integers(0, d - width + 1))
            picked = np.zeros(d, dtype=bool)
            picked[lo:lo + width] = True
            sign = float(rng.choice([-1.0, 1.0]))
            shift = magnitude * std * picked * sign
            end = min(n, t + length)
            series[t:end] += shift
            labels[t:end] = 1
            t = end
        else:
            t += 1
    return series, labels


# ---------------------------------------------------------------------------
# CSV + sidecar interchange

def write_sample_csv(path, sset: SampleSet) -> None:
    """One row per sample, columns x0..x{pT-1}, full float64 precision."""
    header = ",".join(f"x{i}" for i in range(sset.dims.pt))
    np.savetxt(path, sset.samples, fmt="%.17g", delimiter=",",
               header=header, comments="")


def write_sample_sidecar(path, sset: SampleSet, description: str, extra: dict | None = None) -> None:
    doc = {
        "p": sset.dims.p,
        "T": sset.dims.T,
        "n": sset.n,
        "seed": sset.seed,
        "truth": description,
    }
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_sample_csv(path, dims: SpaceTimeDims) -> SampleSet:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != dims.pt:
        raise ValueError(
            f"{path}: {data.shape[1]} columns do not match pT={dims.pt}"
        )
    return SampleSet(dims, data.shape[0], data, seed=None)
