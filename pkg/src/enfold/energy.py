"""Energy functions whose descent the unfolded layers enact.

The central object is the pairwise attraction energy

    e1(Y) = sum_{i,j} rho(0.5*||y_i - y_j||^2) + R(Y),

summed over all ordered row pairs including i = j (the diagonal adds a
constant for each rho, kept for fidelity to the defining formula), with
R(Y) = 0.5*||Y - B||_F^2 and B = 0 unless a bias anchor is configured.
Because rho is concave non-decreasing, linearizing it at the current iterate
yields the convex quadratic majorizer ``tilde_e1`` whose per-row minimizing
moves are softmax-style averages. The quadratic feed-forward energy ``e2``
and the nonnegativity indicator complete the total layer energy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RhoKind",
    "BetaMode",
    "EnergyConfig",
    "EnergyValue",
    "rho_eval",
    "rho_prime",
    "beta_weights",
    "pairwise_half_sq",
    "e1",
    "grad_e1",
    "grad_e1_reparam",
    "gamma_weights",
    "tilde_e1",
    "grad_tilde_e1",
    "e2",
    "grad_e2",
    "phi_indicator",
    "total_energy",
    "attention_coefficients",
]


class RhoKind(enum.Enum):
    """Concave non-decreasing attraction profiles rho(z) on z >= 0."""

    NEG_EXP = "neg_exp"        # rho(z) = -exp(-z), the softmax-inducing choice
    LOG_PLUS2 = "log_plus2"    # rho(z) = log(z + 2)
    LOG_PLUS1 = "log_plus1"    # rho(z) = log(z + 1)


class BetaMode(enum.Enum):
    REWEIGHTED = "reweighted"  # beta_i = exp(-0.5*||y_i||^2)
    UNIFORM = "uniform"        # beta_i = 1, the canonical softmax regime


@dataclass
class EnergyConfig:
    """All scalar knobs of the energy family in one place.

    alpha1/alpha2 are the attention and feed-forward step sizes, lam the
    proximal parameter of the ReLU step. The constraint lam <= alpha2 is
    required for the proximal majorization bound behind the certified
    nonnegative-descent test; 0 < alpha1 <= alpha2 orders the two steps.
    """

    rho: RhoKind = RhoKind.NEG_EXP
    bias: np.ndarray | None = None
    alpha1: float = 0.4
    alpha2: float = 0.5
    lam: float = 0.5
    beta_mode: BetaMode = BetaMode.REWEIGHTED

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha1 <= self.alpha2:
            raise ValueError(f"need 0 < alpha1 <= alpha2, got {self.alpha1}, {self.alpha2}")
        if not 0.0 < self.lam <= self.alpha2:
            raise ValueError(f"need 0 < lam <= alpha2, got lam={self.lam}, alpha2={self.alpha2}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=float)


@dataclass(frozen=True)
class EnergyValue:
    """Component energies of one iterate; total only exists when feasible."""

    e1: float
    e2: float
    feasible: bool
    total: float | None

    @staticmethod
    def combine(v1: float, v2: float, feasible: bool) -> "EnergyValue":
        return EnergyValue(v1, v2, feasible, v1 + v2 if feasible else None)


def rho_eval(kind: RhoKind, z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("rho is defined on z >= 0")
    if kind is RhoKind.NEG_EXP:
        out = -np.exp(-z)
    elif kind is RhoKind.LOG_PLUS2:
        out = np.log(z + 2.0)
    else:
        out = np.log(z + 1.0)
    return out if out.ndim else float(out)


def rho_prime(kind: RhoKind, z):
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("rho is defined on z >= 0")
    if kind is RhoKind.NEG_EXP:
        out = np.exp(-z)
    elif kind is RhoKind.LOG_PLUS2:
        out = 1.0 / (z + 2.0)
    else:
        out = 1.0 / (z + 1.0)
    return out if out.ndim else float(out)


def beta_weights(Y: np.ndarray, mode: BetaMode) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if mode is BetaMode.UNIFORM:
        return np.ones(Y.shape[0])
    return np.exp(-0.5 * np.sum(Y * Y, axis=1))


def pairwise_half_sq(Y: np.ndarray) -> np.ndarray:
    """Matrix of 0.5*||y_i - y_j||^2 over all ordered row pairs.

    Computed from explicit differences rather than the expanded inner-product
    form, so entries are exactly nonnegative and the diagonal is exactly 0.
    """
    Y = np.asarray(Y, dtype=float)
    diff = Y[:, None, :] - Y[None, :, :]
    return 0.5 * np.einsum("ijk,ijk->ij", diff, diff)


def _residual(Y: np.ndarray, cfg: EnergyConfig) -> np.ndarray:
    if cfg.bias is None:
        return Y
    if cfg.bias.shape != Y.shape:
        raise ValueError(f"bias shape {cfg.bias.shape} does not match Y {Y.shape}")
    return Y - cfg.bias


def e1(Y: np.ndarray, cfg: EnergyConfig) -> float:
    """Pairwise attraction energy plus the anchor term 0.5*||Y - B||^2."""
    Y = np.asarray(Y, dtype=float)
    r = _residual(Y, cfg)
    return float(np.sum(rho_eval(cfg.rho, pairwise_half_sq(Y))) + 0.5 * np.sum(r * r))


def gamma_weights(Y: np.ndarray, kind: RhoKind) -> np.ndarray:
    """Symmetric weight matrix Gamma_ij = rho'(0.5*||y_i - y_j||^2).

    The diagonal equals rho'(0) by construction (1 for the exponential
    profile). For that profile Gamma also factorizes as
    beta_i * beta_j * exp(y_i . y_j), the identity the softmax step exploits.
    """
    return rho_prime(kind, pairwise_half_sq(Y))


def _gamma_laplacian_apply(G: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """(diag(G 1) - G) @ Y, the graph Laplacian action of a weight matrix.

    Diagonal entries of G cancel out of the difference, so self pairs never
    contribute, matching their vanishing terms in the energies.
    """
    return np.sum(G, axis=1)[:, None] * Y - G @ Y


def grad_e1(Y: np.ndarray, cfg: EnergyConfig) -> np.ndarray:
    """Analytic gradient of e1: 2*(diag(Gamma 1) - Gamma) Y + (Y - B)."""
    Y = np.asarray(Y, dtype=float)
    G = gamma_weights(Y, cfg.rho)
    return 2.0 * _gamma_laplacian_apply(G, Y) + _residual(Y, cfg)


def grad_e1_reparam(Z: np.ndarray, W_a: np.ndarray, cfg: EnergyConfig) -> np.ndarray:
    """Gradient of Z -> e1(Z @ W_a) by the chain rule.

    The configured bias anchors the transformed representation's own frame,
    i.e. the residual inside e1 is (Z - B) @ W_a, so a stack fed its anchor
    reports a zero anchor term regardless of W_a.
    """
    inner = EnergyConfig(
        rho=cfg.rho,
        bias=None if cfg.bias is None else cfg.bias @ W_a,
        alpha1=cfg.alpha1,
        alpha2=cfg.alpha2,
        lam=cfg.lam,
        beta_mode=cfg.beta_mode,
    )
    return grad_e1(np.asarray(Z, dtype=float) @ W_a, inner) @ W_a.T


def tilde_e1(Y: np.ndarray, Gamma: np.ndarray, cfg: EnergyConfig) -> float:
    """Convex quadratic majorizer of e1 at the iterate that produced Gamma.

    Concavity of rho gives, for any Y and expansion point Y0,
    e1(Y) - e1(Y0) <= tilde_e1(Y; Gamma(Y0)) - tilde_e1(Y0; Gamma(Y0)),
    with matching gradients at Y0.
    """
    Y = np.asarray(Y, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    if Gamma.shape != (Y.shape[0], Y.shape[0]):
        raise ValueError(f"Gamma shape {Gamma.shape} does not match {Y.shape[0]} rows")
    r = _residual(Y, cfg)
    return float(np.sum(Gamma * pairwise_half_sq(Y)) + 0.5 * np.sum(r * r))


def grad_tilde_e1(Y: np.ndarray, Gamma: np.ndarray, cfg: EnergyConfig) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return 2.0 * _gamma_laplacian_apply(np.asarray(Gamma, dtype=float), Y) + _residual(Y, cfg)


def e2(Y: np.ndarray, W_f: np.ndarray) -> float:
    """Quadratic feed-forward energy 0.5*tr(Y W_f Y^T) + 0.5*||Y||_F^2."""
    Y = np.asarray(Y, dtype=float)
    W_f = np.asarray(W_f, dtype=float)
    if W_f.shape != (Y.shape[1], Y.shape[1]):
        raise ValueError(f"W_f shape {W_f.shape} does not match feature dim {Y.shape[1]}")
    return float(0.5 * np.sum((Y @ W_f) * Y) + 0.5 * np.sum(Y * Y))


def grad_e2(Y: np.ndarray, W_f: np.ndarray) -> np.ndarray:
    """Gradient Y @ ((W_f + W_f^T)/2 + I); only the symmetric part acts."""
    Y = np.asarray(Y, dtype=float)
    W_f = np.asarray(W_f, dtype=float)
    return Y @ (0.5 * (W_f + W_f.T) + np.eye(W_f.shape[0]))


def phi_indicator(Y: np.ndarray) -> bool:
    """True iff every entry is >= 0 (the nonnegative-orthant indicator)."""
    return bool(np.all(np.asarray(Y, dtype=float) >= 0.0))


def total_energy(Z: np.ndarray, weights, cfg: EnergyConfig) -> EnergyValue:
    """Layer energy e1(Z W_a) + e2(Z) with orthant feasibility of Z.

    ``weights`` carries the raw attention and feed-forward matrices (see
    unfold.LayerWeights). The attraction term sees the reparameterized rows
    Z @ W_a_raw, and the bias anchor rides along into that frame, so feeding
    the stack its own anchor zeroes the residual exactly.
    """
    Z = np.asarray(Z, dtype=float)
    inner = EnergyConfig(
        rho=cfg.rho,
        bias=None if cfg.bias is None else cfg.bias @ weights.W_a_raw,
        alpha1=cfg.alpha1,
        alpha2=cfg.alpha2,
        lam=cfg.lam,
        beta_mode=cfg.beta_mode,
    )
    v1 = e1(Z @ weights.W_a_raw, inner)
    v2 = e2(Z, weights.W_f_raw)
    return EnergyValue.combine(v1, v2, phi_indicator(Z))


def attention_coefficients(Y: np.ndarray, kind: RhoKind, closed_form: bool = False) -> np.ndarray:
    """Row-stochastic attention matrix induced by the attraction profile.

    Row i is the Gamma row rho'(0.5*||y_i - y_j||^2) normalized to sum 1.
    For the exponential profile this equals the reweighted softmax and is
    computed in log domain with per-row max subtraction for overflow safety.

    closed_form=True switches the log profiles to their inner-product
    expressions 1/(3 - y_i.y_j) and 1/(2 - y_i.y_j), valid only for
    unit-norm rows (checked to 1e-9).
    """
    Y = np.asarray(Y, dtype=float)
    if kind is RhoKind.NEG_EXP:
        logits = -pairwise_half_sq(Y)
        logits -= logits.max(axis=1, keepdims=True)
        W = np.exp(logits)
        return W / W.sum(axis=1, keepdims=True)
    if closed_form:
        norms = np.linalg.norm(Y, axis=1)
        if np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ValueError("closed-form coefficients require unit-norm rows")
        ip = Y @ Y.T
        c = 3.0 if kind is RhoKind.LOG_PLUS2 else 2.0
        W = 1.0 / (c - ip)
    else:
        W = gamma_weights(Y, kind)
    return W / W.sum(axis=1, keepdims=True)
