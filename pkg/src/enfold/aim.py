"""Alternating minimization analyzed as noisy gradient descent.

Two smooth strongly convex objectives f and g share one variable. Stepping
alpha1 along -grad f and then alpha2 along -grad g is a single inexact
gradient step on h = f + g whose noise term has a computable bound. The
module provides the noise and its certified tolerance, the geometric
regions (a distance-ratio ball and a gradient/position-similarity set) on
which descent of h, or of h plus the orthant indicator under a trailing
ReLU, is guaranteed, and seeded runners recording full audit traces.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from enfold.numerics import spectral_bounds

__all__ = [
    "TransformSide",
    "QuadraticObjective",
    "SmoothnessProfile",
    "RegionSpec",
    "AimTrace",
    "quadratic_constants",
    "optimal_points",
    "noise_delta",
    "bound_C",
    "region_S_contains",
    "d_similarity",
    "bound_Cprime",
    "region_T_contains",
    "run_algorithm1",
    "run_algorithm2",
]


class TransformSide(enum.Enum):
    LEFT = "left"    # f(Y) = ||S Y||_F^2 + ||Y - B||_F^2
    RIGHT = "right"  # f(Y) = ||Y W||_F^2 + ||Y - B||_F^2


@dataclass(frozen=True)
class QuadraticObjective:
    """Strongly convex quadratic with a transform on one side and a bias.

    Both forms have Hessian 2*(gram + I) with gram = S^T S (left) or
    W W^T (right) acting on the matching side, so the strong-convexity
    parameter is always at least 2.
    """

    side: TransformSide
    transform: np.ndarray
    bias: np.ndarray

    def value(self, Y: np.ndarray) -> float:
        Y = np.asarray(Y, dtype=float)
        T = self.transform
        mapped = T @ Y if self.side is TransformSide.LEFT else Y @ T
        r = Y - self.bias
        return float(np.sum(mapped * mapped) + np.sum(r * r))

    def grad(self, Y: np.ndarray) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        T = self.transform
        if self.side is TransformSide.LEFT:
            lifted = T.T @ (T @ Y)
        else:
            lifted = (Y @ T) @ T.T
        return 2.0 * lifted + 2.0 * (Y - self.bias)

    def gram(self) -> np.ndarray:
        T = self.transform
        return T.T @ T if self.side is TransformSide.LEFT else T @ T.T


@dataclass(frozen=True)
class SmoothnessProfile:
    """Gradient-Lipschitz and strong-convexity constants of f, g, h = f+g.

    Sums are exact for quadratics. c_P is the curvature of the proximal
    problem's smooth part, 1/lambda for the scaled half-squared distance.
    """

    L_f: float
    c_f: float
    L_g: float
    c_g: float
    L_h: float
    c_h: float
    c_P: float

    @classmethod
    def from_pair(cls, f: QuadraticObjective, g: QuadraticObjective, lam: float) -> "SmoothnessProfile":
        L_f, c_f = quadratic_constants(f)
        L_g, c_g = quadratic_constants(g)
        return cls(L_f, c_f, L_g, c_g, L_f + L_g, c_f + c_g, 1.0 / lam)


@dataclass(frozen=True)
class RegionSpec:
    """Certified constants and optima for the region membership tests."""

    C: float
    C_prime: float
    kappa: float
    y_f_star: np.ndarray
    y_g_star: np.ndarray
    y_h_star: np.ndarray


@dataclass
class AimTrace:
    """Pointwise audit of an alternating run; lists have length steps + 1.

    delta_ratio is the defining noise-to-gradient ratio ||Delta|| / ||grad h||
    and delta_grad_ratio is ||grad f|| / ||grad h||, the quantity the descent
    certificates actually bound (the noise chain passes through it). Both are
    None where ||grad h|| <= 1e-12. cert_flags / cert_prox_flags compare
    delta_grad_ratio against the smooth and proximal tolerances; s_flags are
    distance-ratio ball memberships (None exactly at the h-optimum);
    sim_flags test the gradient/position similarity against -kappa.
    """

    iterates: list
    h_values: list
    delta_ratio: list
    delta_grad_ratio: list
    cert_flags: list
    cert_prox_flags: list
    s_flags: list
    sim_flags: list
    dist_to_opt: list
    feasible: list
    region: RegionSpec
    profile: SmoothnessProfile
    alpha1: float
    alpha2: float
    lam: float | None = None
    d_values: list = field(default_factory=list)


def quadratic_constants(obj: QuadraticObjective) -> tuple[float, float]:
    """Gradient-Lipschitz constant and strong convexity: 2*(eig(gram) + 1)."""
    est = spectral_bounds(obj.gram())
    return 2.0 * (est.lambda_max + 1.0), 2.0 * (max(est.lambda_min, 0.0) + 1.0)


def optimal_points(f: QuadraticObjective, g: QuadraticObjective) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Closed-form optima of f, g, and h = f + g.

    Stationarity of h couples the two grams on opposite sides, a Sylvester
    equation (A + I) Y + Y (B + I) = B_f + B_g solved directly; same-side
    pairs reduce to a single linear solve.
    """
    return _single_opt(f), _single_opt(g), _pair_opt(f, g)


def _single_opt(obj: QuadraticObjective) -> np.ndarray:
    G = obj.gram()
    eye = np.eye(G.shape[0])
    if obj.side is TransformSide.LEFT:
        return np.linalg.solve(G + eye, obj.bias)
    return np.linalg.solve((G + eye).T, obj.bias.T).T


def _pair_opt(f: QuadraticObjective, g: QuadraticObjective) -> np.ndarray:
    shape = f.bias.shape
    rhs = f.bias + g.bias
    left = np.zeros((shape[0], shape[0]))
    right = np.zeros((shape[1], shape[1]))
    for obj in (f, g):
        if obj.side is TransformSide.LEFT:
            left += obj.gram() + np.eye(shape[0])
        else:
            right += obj.gram() + np.eye(shape[1])
    if not np.any(right):
        return np.linalg.solve(left, rhs)
    if not np.any(left):
        return np.linalg.solve(right.T, rhs.T).T
    return scipy.linalg.solve_sylvester(left, right, rhs)


def noise_delta(y: np.ndarray, f: QuadraticObjective, g: QuadraticObjective,
                alpha1: float, alpha2: float) -> tuple[np.ndarray, float]:
    """Noise of one alternating step against an exact alpha2-step on h.

    Delta = grad h(y) - (alpha1/alpha2) grad f(y) - grad g(y - alpha1 grad f(y)),
    returned with its ratio to ||grad h(y)||. The ratio is undefined at
    stationary points of h.
    """
    y = np.asarray(y, dtype=float)
    gf = f.grad(y)
    gh = gf + g.grad(y)
    nh = float(np.linalg.norm(gh))
    if nh <= 1e-12:
        raise ValueError("noise ratio undefined where grad h vanishes")
    Delta = gh - (alpha1 / alpha2) * gf - g.grad(y - alpha1 * gf)
    return Delta, float(np.linalg.norm(Delta)) / nh


def bound_C(alpha1: float, alpha2: float, L_g: float) -> float:
    """Certified noise tolerance alpha2 / (alpha2 - alpha1 + alpha1*alpha2*L_g).

    alpha1 = 0 is admitted as the degenerate single-step case (value 1);
    the runners enforce strict positivity themselves.
    """
    if not 0.0 <= alpha1 <= alpha2 or alpha2 <= 0.0:
        raise ValueError(f"need 0 <= alpha1 <= alpha2, alpha2 > 0, got {alpha1}, {alpha2}")
    if L_g <= 0.0:
        raise ValueError("L_g must be positive")
    return alpha2 / (alpha2 - alpha1 + alpha1 * alpha2 * L_g)


def region_S_contains(y: np.ndarray, spec: RegionSpec, prof: SmoothnessProfile,
                      threshold: float | None = None) -> bool:
    """Distance-ratio ball test ||y - y_f*|| / ||y - y_h*|| <= c_h*C/L_f.

    An explicit ``threshold`` overrides the ratio bound (used by rasters
    sweeping the boundary value directly).
    """
    y = np.asarray(y, dtype=float)
    dh = float(np.linalg.norm(y - spec.y_h_star))
    if dh == 0.0:
        raise ValueError("membership ratio undefined at the h-optimum")
    if threshold is None:
        threshold = prof.c_h * spec.C / prof.L_f
    return float(np.linalg.norm(y - spec.y_f_star)) / dh <= threshold


def d_similarity(xi1: np.ndarray, xi2: np.ndarray) -> float:
    """Signed overlap (1/||xi1||^2) * sum_i min(xi2_i^2 - xi1_i^2, 0).

    Always in [-1, 0]: each summand is at least -xi1_i^2 and at most 0.
    Near 0 only where every coordinate of xi2 dominates the matching
    coordinate of xi1 in magnitude.
    """
    xi1 = np.asarray(xi1, dtype=float).ravel()
    xi2 = np.asarray(xi2, dtype=float).ravel()
    # same summation scheme for numerator and denominator keeps the value
    # inside [-1, 0] in floating point, with the endpoint exact at xi2 = 0
    n1 = float(np.sum(xi1 * xi1))
    if n1 == 0.0:
        raise ValueError("similarity undefined for zero first argument")
    return float(np.sum(np.minimum(xi2 * xi2 - xi1 * xi1, 0.0)) / n1)


def bound_Cprime(alpha1: float, alpha2: float, lam: float, kappa: float,
                 c_P: float, L_g: float) -> float:
    """Proximal-descent noise tolerance.

    alpha2 * c_P * lam * sqrt(1-kappa) / (sqrt(2) * (alpha2 - alpha1 + alpha1*alpha2*L_g));
    with c_P = 1/lam the product c_P*lam is 1 and the tolerance is
    sqrt((1-kappa)/2) times the smooth tolerance.
    """
    if not 0.0 < kappa < 1.0:
        raise ValueError(f"kappa must lie in (0, 1), got {kappa}")
    if not 0.0 <= alpha1 <= alpha2 or alpha2 <= 0.0:
        raise ValueError(f"need 0 <= alpha1 <= alpha2, alpha2 > 0, got {alpha1}, {alpha2}")
    denom = np.sqrt(2.0) * (alpha2 - alpha1 + alpha1 * alpha2 * L_g)
    return alpha2 * c_P * lam * np.sqrt(1.0 - kappa) / denom


def region_T_contains(y: np.ndarray, grad_h_y: np.ndarray, alpha2: float, kappa: float) -> bool:
    """Similarity-region test D(alpha2 * grad h(y); y) >= -kappa."""
    y = np.asarray(y, dtype=float)
    if np.linalg.norm(y) == 0.0:
        raise ValueError("similarity region undefined at the origin")
    return d_similarity(alpha2 * np.asarray(grad_h_y, dtype=float), y) >= -kappa


def _trace_point(y, f, g, alpha1, alpha2, region, prof, kappa):
    gf = f.grad(y)
    gh = gf + g.grad(y)
    nh = float(np.linalg.norm(gh))
    if nh <= 1e-12:
        ratio = grad_ratio = None
        cert = cert_prox = False
    else:
        Delta = gh - (alpha1 / alpha2) * gf - g.grad(y - alpha1 * gf)
        ratio = float(np.linalg.norm(Delta)) / nh
        grad_ratio = float(np.linalg.norm(gf)) / nh
        cert = grad_ratio <= region.C
        cert_prox = grad_ratio <= region.C_prime
    dh = float(np.linalg.norm(y - region.y_h_star))
    s_flag = None if dh == 0.0 else (
        float(np.linalg.norm(y - region.y_f_star)) / dh <= prof.c_h * region.C / prof.L_f
    )
    ny = float(np.linalg.norm(y))
    if ny == 0.0 or nh <= 1e-12:
        sim = False
        dval = None
    else:
        dval = d_similarity(alpha2 * gh, y)
        sim = dval >= -kappa
    return ratio, grad_ratio, cert, cert_prox, s_flag, sim, dh, dval


def _run(f, g, y0, alpha1, alpha2, steps, lam, kappa, relu):
    y = np.asarray(y0, dtype=float).copy()
    if relu and np.any(y < 0):
        raise ValueError("initial point must be feasible (entrywise >= 0)")
    prof = SmoothnessProfile.from_pair(f, g, lam if lam is not None else alpha2)
    yf, yg, yh = optimal_points(f, g)
    C = bound_C(alpha1, alpha2, prof.L_g)
    Cp = bound_Cprime(alpha1, alpha2, lam if lam is not None else alpha2,
                      kappa, prof.c_P, prof.L_g)
    region = RegionSpec(C=C, C_prime=Cp, kappa=kappa, y_f_star=yf, y_g_star=yg, y_h_star=yh)

    tr = AimTrace(
        iterates=[], h_values=[], delta_ratio=[], delta_grad_ratio=[],
        cert_flags=[], cert_prox_flags=[], s_flags=[], sim_flags=[],
        dist_to_opt=[], feasible=[], region=region, profile=prof,
        alpha1=alpha1, alpha2=alpha2, lam=lam,
    )

    def record(y):
        ratio, grad_ratio, cert, cert_prox, s_flag, sim, dh, dval = _trace_point(
            y, f, g, alpha1, alpha2, region, prof, kappa)
        tr.iterates.append(y.copy())
        tr.h_values.append(f.value(y) + g.value(y))
        tr.delta_ratio.append(ratio)
        tr.delta_grad_ratio.append(grad_ratio)
        tr.cert_flags.append(cert)
        tr.cert_prox_flags.append(cert_prox)
        tr.s_flags.append(s_flag)
        tr.sim_flags.append(sim)
        tr.dist_to_opt.append(dh)
        tr.feasible.append(bool(np.all(y >= 0)))
        tr.d_values.append(dval)

    record(y)
    for _ in range(steps):
        u = y - alpha1 * f.grad(y)
        v = u - alpha2 * g.grad(u)
        y = np.maximum(v, 0.0) if relu else v
        record(y)
    return tr


def run_algorithm1(f: QuadraticObjective, g: QuadraticObjective, y0: np.ndarray,
                   alpha1: float, alpha2: float, steps: int,
                   kappa: float = 0.5) -> AimTrace:
    """Alternate one f-step and one g-step, recording the descent audit.

    The certified claim the suite checks: at every iterate whose
    delta_grad_ratio is within the tolerance C, the next h value does not
    exceed the current one (within 1e-9), provided alpha1 <= alpha2 <= 1/L_h.
    """
    if not 0.0 < alpha1 <= alpha2:
        raise ValueError(f"need 0 < alpha1 <= alpha2, got {alpha1}, {alpha2}")
    return _run(f, g, y0, alpha1, alpha2, steps, None, kappa, relu=False)


def run_algorithm2(f: QuadraticObjective, g: QuadraticObjective, y0: np.ndarray,
                   alpha1: float, alpha2: float, lam: float, steps: int,
                   kappa: float = 0.5) -> AimTrace:
    """As run_algorithm1 with a trailing entrywise ReLU each turn.

    One turn equals the proximal step
    argmin_z ||z - y + alpha2*(grad h(y) - Delta)||^2 / (2 lam) + phi(z),
    so iterates stay feasible and the certified claim bounds h + phi: at
    iterates where the similarity flag holds and delta_grad_ratio is within
    C', the next h value does not exceed the current one.
    """
    if not 0.0 < alpha1 <= alpha2:
        raise ValueError(f"need 0 < alpha1 <= alpha2, got {alpha1}, {alpha2}")
    if not 0.0 < lam <= alpha2:
        raise ValueError(f"need 0 < lam <= alpha2, got lam={lam}, alpha2={alpha2}")
    return _run(f, g, y0, alpha1, alpha2, steps, lam, kappa, relu=True)
