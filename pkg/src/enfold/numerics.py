"""Dense small-matrix kernels shared by every other module.

Matrices are plain float64 numpy arrays throughout (rows are tokens or
coordinates, columns are features). Everything here is a pure function of
its inputs; randomness only enters through an explicit :class:`RngStream`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RngStream",
    "SpectralEstimate",
    "spectral_bounds",
    "finite_diff_grad",
    "pca_project",
]


@dataclass(frozen=True)
class RngStream:
    """Deterministic random source addressed by (seed, stream).

    A fresh generator is constructed on every call to :meth:`generator`, so
    identical (seed, stream) pairs reproduce identical draws no matter how
    many other streams were consumed in between.
    """

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        return np.random.default_rng([self.seed, self.stream])


@dataclass(frozen=True)
class SpectralEstimate:
    lambda_max: float
    lambda_min: float
    iterations: int
    tol: float


def _power_top(P: np.ndarray, v0: np.ndarray, tol: float, max_iter: int) -> tuple[float, int]:
    """Largest eigenvalue of a PSD matrix by power iteration.

    Returns (eigenvalue, iterations). The caller guarantees P is PSD, so the
    dominant eigenvalue in modulus is the algebraic maximum.
    """
    scale = np.linalg.norm(P, ord="fro")
    if scale == 0.0:
        return 0.0, 0
    v = v0 / np.linalg.norm(v0)
    lam = 0.0
    for it in range(1, max_iter + 1):
        w = P @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            # v landed exactly in the kernel; restart from a vector that is
            # not orthogonal to the top eigenspace for generic P.
            v = np.cos(np.arange(1, len(v) + 1, dtype=float))
            v /= np.linalg.norm(v)
            continue
        v = w / nw
        lam = float(v @ P @ v)
        if np.linalg.norm(P @ v - lam * v) <= tol * scale:
            return lam, it
    return lam, max_iter


def spectral_bounds(M: np.ndarray, tol: float = 1e-12, rng: RngStream | None = None) -> SpectralEstimate:
    """Extremal eigenvalues of a symmetric matrix via shifted power iteration.

    Plain power iteration finds the eigenvalue of largest modulus, which is
    the wrong endpoint when the spectrum is dominated by a negative value.
    We therefore iterate on M - b*I (PSD by the Gershgorin lower bound b) to
    get lambda_max, then on its reflection to get lambda_min. The start
    vector comes from ``rng`` so results are reproducible.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral_bounds needs a square matrix, got shape {M.shape}")
    scale = max(np.linalg.norm(M, ord="fro"), 1.0)
    if np.max(np.abs(M - M.T)) > tol * scale:
        raise ValueError("spectral_bounds needs a symmetric matrix")
    n = M.shape[0]
    if rng is None:
        rng = RngStream(0, 0)
    v0 = rng.generator().standard_normal(n)

    radii = np.sum(np.abs(M), axis=1) - np.abs(np.diag(M))
    lo = float(np.min(np.diag(M) - radii))

    max_iter = 50_000
    P = M - lo * np.eye(n)
    mu1, it1 = _power_top(P, v0, tol, max_iter)
    lam_max = mu1 + lo
    Q = mu1 * np.eye(n) - P
    mu2, it2 = _power_top(Q, v0, tol, max_iter)
    lam_min = lo + mu1 - mu2
    if lam_min > lam_max:
        lam_min, lam_max = lam_max, lam_min
    return SpectralEstimate(lam_max, lam_min, it1 + it2, tol)


def finite_diff_grad(f, Y: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of a scalar field, entry by entry.

    The workhorse oracle for validating every analytic gradient in the
    library. Error scales like h^2 on smooth functions.
    """
    if h <= 0:
        raise ValueError("finite_diff_grad needs h > 0")
    # Work on a private copy: the probe mutates entries in place and f must
    # never observe the caller's array mid-probe.
    Y = np.array(Y, dtype=float)
    g = np.zeros_like(Y)
    flat = Y.ravel()
    gflat = g.ravel()
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        fp = f(Y)
        flat[k] = orig - h
        fm = f(Y)
        flat[k] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise FloatingPointError(f"objective non-finite near entry {k}")
        gflat[k] = (fp - fm) / (2.0 * h)
    return g


def pca_project(points, k: int) -> np.ndarray:
    """Project a point cloud onto its top-k principal directions.

    ``points`` is a sequence of equally shaped arrays (flattened if needed).
    The cloud is mean-centered, so the projection is invariant to global
    translation. Returns an array of shape (len(points), k) with component
    variances in non-increasing order.
    """
    X = np.stack([np.asarray(p, dtype=float).ravel() for p in points])
    if X.shape[0] < 2:
        raise ValueError("pca_project needs at least 2 points")
    if k > X.shape[1]:
        raise ValueError(f"pca_project: k={k} exceeds ambient dimension {X.shape[1]}")
    Xc = X - X.mean(axis=0, keepdims=True)
    _, _, Vt = np.linalg.svd(Xc, full_matrices=False)
    return Xc @ Vt[:k].T
