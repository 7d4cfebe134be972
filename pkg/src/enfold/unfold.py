"""Iterative update rules realizing transformer layers as descent steps.

One layer is the composition of a softmax averaging step (descending the
pairwise attraction energy via its convex majorizer), a linear feed-forward
map equal to an exact gradient step on the quadratic energy, and optionally
a proximal ReLU enforcing the nonnegative orthant. ``run_stack`` iterates
the layer and records iterates, energies, noise ratios, and the pointwise
region flags under which descent of the total energy is certified.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from enfold import aim
from enfold.energy import (
    BetaMode,
    EnergyConfig,
    EnergyValue,
    grad_e1_reparam,
    grad_e2,
    total_energy,
)
from enfold.numerics import RngStream, spectral_bounds

__all__ = [
    "LayerWeights",
    "GraphMask",
    "StackConfig",
    "Trace",
    "attention_update",
    "attention_update_weighted",
    "aim_step_pair",
    "prox_relu",
    "full_layer",
    "residual_attention_update",
    "graph_masked_update",
    "layernorm_steps",
    "row_layernorm",
    "run_stack",
]

_MASKED = -np.inf


@dataclass
class LayerWeights:
    """Raw weight pair plus the symmetric forms the energy view requires.

    W_a_s = W_a_raw @ W_a_raw.T is PSD by construction, and
    W_f_s = (1 - alpha2)*I - alpha2*(W_f_raw + W_f_raw.T)/2 is exactly the
    linear map of one alpha2-gradient step on the quadratic energy, so
    U @ W_f_s == U - alpha2*grad_e2(U, W_f_raw) identically.
    """

    W_a_raw: np.ndarray
    W_f_raw: np.ndarray
    alpha2: float
    W_a_s: np.ndarray = field(init=False)
    W_f_s: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.W_a_raw = np.asarray(self.W_a_raw, dtype=float)
        self.W_f_raw = np.asarray(self.W_f_raw, dtype=float)
        d = self.W_a_raw.shape[0]
        if self.W_a_raw.shape != (d, d) or self.W_f_raw.shape != (d, d):
            raise ValueError("weights must be square and equally sized")
        self.refresh()

    def refresh(self) -> None:
        """Recompute the derived symmetric forms after editing raw weights."""
        d = self.W_a_raw.shape[0]
        self.W_a_s = self.W_a_raw @ self.W_a_raw.T
        self.W_f_s = (1.0 - self.alpha2) * np.eye(d) - self.alpha2 * 0.5 * (
            self.W_f_raw + self.W_f_raw.T
        )

    @classmethod
    def random(cls, d: int, alpha2: float, scale: float = 0.02, rng: RngStream | None = None) -> "LayerWeights":
        gen = (rng or RngStream(0, 0)).generator()
        return cls(
            W_a_raw=scale * gen.standard_normal((d, d)),
            W_f_raw=scale * gen.standard_normal((d, d)),
            alpha2=alpha2,
        )


@dataclass
class GraphMask:
    """Symmetric boolean adjacency with self-loops forced on.

    The self-loop guarantees every attention row has at least one finite
    logit, so masked softmax rows are always well defined.
    """

    adjacency: np.ndarray

    def __post_init__(self) -> None:
        A = np.asarray(self.adjacency, dtype=bool).copy()
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("adjacency must be square")
        if not np.array_equal(A, A.T):
            raise ValueError("adjacency must be symmetric")
        np.fill_diagonal(A, True)
        self.adjacency = A

    @classmethod
    def complete(cls, n: int) -> "GraphMask":
        return cls(np.ones((n, n), dtype=bool))

    @classmethod
    def self_only(cls, n: int) -> "GraphMask":
        return cls(np.eye(n, dtype=bool))


@dataclass
class StackConfig:
    depth: int
    weights: LayerWeights
    energy: EnergyConfig
    use_relu: bool = True
    residual_alpha: float = 1.0
    layernorm: bool = False
    graph_mask: GraphMask | None = None
    kappa: float = 0.5

    def __post_init__(self) -> None:
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if not 0.0 < self.residual_alpha <= 1.0:
            raise ValueError("residual_alpha must lie in (0, 1]")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")


@dataclass
class Trace:
    """Per-iterate record of a stack run; all lists have length depth + 1.

    deltas[k] is the realized noise-to-gradient ratio of the step taken at
    iterate k (None for the final iterate, which takes no step, and where
    the total-energy gradient vanishes). region_flags[k] holds the pointwise
    certification flags evaluated at iterate k.
    """

    iterates: list
    energies: list
    deltas: list
    region_flags: list


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    """Row-stochastic matrix from logits; -inf marks excluded entries."""
    finite = logits != _MASKED
    shift = np.where(finite, logits, -np.inf).max(axis=1, keepdims=True)
    W = np.where(finite, np.exp(np.where(finite, logits - shift, 0.0)), 0.0)
    return W / W.sum(axis=1, keepdims=True)


def _attention_matrix(Y: np.ndarray, cfg: EnergyConfig, mask: GraphMask | None = None) -> np.ndarray:
    """Reweighted softmax rows over logits y_i . y_j + log beta_j."""
    Y = np.asarray(Y, dtype=float)
    logits = Y @ Y.T
    if cfg.beta_mode is BetaMode.REWEIGHTED:
        logits = logits - 0.5 * np.sum(Y * Y, axis=1)[None, :]
    if mask is not None:
        if mask.adjacency.shape != logits.shape:
            raise ValueError(
                f"mask shape {mask.adjacency.shape} does not match {logits.shape}"
            )
        logits = np.where(mask.adjacency, logits, _MASKED)
    return _softmax_rows(logits)


def attention_update(Y: np.ndarray, cfg: EnergyConfig) -> np.ndarray:
    """One softmax averaging step: rows become convex combinations of rows.

    In reweighted mode the combination weights are proportional to
    beta_j * exp(y_i . y_j) with beta_j = exp(-0.5*||y_j||^2), which equals
    the majorizer-weight row Gamma_i normalized to sum 1; this is the step
    whose iteration the pairwise-energy descent suite certifies.
    """
    Y = np.asarray(Y, dtype=float)
    return _attention_matrix(Y, cfg) @ Y


def attention_update_weighted(Z: np.ndarray, weights: LayerWeights, cfg: EnergyConfig) -> np.ndarray:
    """Softmax step in the reparameterized frame Y = Z @ W_a_raw.

    Logits are (Z W_a_s Z^T)_ij with the reweighting beta computed from the
    reparameterized rows, so the update commutes with the change of frame:
    attention_update(Z @ W_a) == attention_update_weighted(Z) @ W_a for
    invertible W_a.
    """
    Z = np.asarray(Z, dtype=float)
    Yrep = Z @ weights.W_a_raw
    logits = Yrep @ Yrep.T
    if cfg.beta_mode is BetaMode.REWEIGHTED:
        logits = logits - 0.5 * np.sum(Yrep * Yrep, axis=1)[None, :]
    return _softmax_rows(logits) @ Z


def aim_step_pair(Y: np.ndarray, weights: LayerWeights, cfg: EnergyConfig) -> tuple[np.ndarray, np.ndarray]:
    """Alternating step: softmax average, then the feed-forward map.

    The second half is exact: U @ W_f_s equals U - alpha2 * grad_e2(U), so
    all inexactness of the composite step lives in the attention half.
    """
    U = attention_update_weighted(Y, weights, cfg)
    return U, U @ weights.W_f_s


def prox_relu(V: np.ndarray) -> np.ndarray:
    """Entrywise max(v, 0): the proximal map of the orthant indicator.

    The proximal scale lambda drops out because the indicator is 0-or-inf,
    so any lambda > 0 yields the same argmin.
    """
    return np.maximum(np.asarray(V, dtype=float), 0.0)


def full_layer(Y: np.ndarray, weights: LayerWeights, cfg: EnergyConfig) -> np.ndarray:
    """Aggregated layer: ReLU after the alternating attention/FFN step."""
    return prox_relu(aim_step_pair(Y, weights, cfg)[1])


def residual_attention_update(Y: np.ndarray, alpha: float, cfg: EnergyConfig) -> np.ndarray:
    """Damped softmax step (1-alpha)*Y + alpha*attention_update(Y).

    The majorizer is convex, so any alpha in (0, 1] descends it whenever the
    full step does; alpha < 1 reproduces the familiar skip connection.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    Y = np.asarray(Y, dtype=float)
    return (1.0 - alpha) * Y + alpha * attention_update(Y, cfg)


def graph_masked_update(Y: np.ndarray, mask: GraphMask, cfg: EnergyConfig) -> np.ndarray:
    """Softmax averaging restricted to graph neighborhoods (self included)."""
    Y = np.asarray(Y, dtype=float)
    return _attention_matrix(Y, cfg, mask) @ Y


def layernorm_steps(y: np.ndarray) -> np.ndarray:
    """Project a row to zero mean and unit norm.

    Equivalent to two successive gradient steps: step size 1/(2d) on the
    squared coordinate sum (removing the mean), then a unit step on
    0.5*||u||^2 - ||u|| (rescaling to the unit sphere).
    """
    y = np.asarray(y, dtype=float)
    u = y - np.mean(y)
    nu = np.linalg.norm(u)
    if nu <= 1e-12:
        raise ValueError("layernorm is degenerate on near-constant rows")
    return u / nu


def row_layernorm(Y: np.ndarray) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    return np.stack([layernorm_steps(row) for row in Y])


def _stack_layer(Z: np.ndarray, stack: StackConfig) -> np.ndarray:
    cfg = stack.energy
    if stack.layernorm:
        Z = row_layernorm(Z)
    Yrep = Z @ stack.weights.W_a_raw
    logits = Yrep @ Yrep.T
    if cfg.beta_mode is BetaMode.REWEIGHTED:
        logits = logits - 0.5 * np.sum(Yrep * Yrep, axis=1)[None, :]
    if stack.graph_mask is not None:
        logits = np.where(stack.graph_mask.adjacency, logits, _MASKED)
    U = _softmax_rows(logits) @ Z
    a = stack.residual_alpha
    if a < 1.0:
        U = (1.0 - a) * Z + a * U
    V = U @ stack.weights.W_f_s
    return prox_relu(V) if stack.use_relu else V


def _stack_region_flags(Z: np.ndarray, stack: StackConfig, L_g: float) -> dict:
    """Pointwise certification flags for the total smooth energy h = f + g.

    f is the attraction energy in the W_a frame, g the quadratic
    feed-forward energy. The certified flag compares ||grad f|| / ||grad h||
    against the noise-tolerance constant; the similarity flag tests the
    signed gradient/position overlap against -kappa.
    """
    cfg = stack.energy
    gf = grad_e1_reparam(Z, stack.weights.W_a_raw, cfg)
    gh = gf + grad_e2(Z, stack.weights.W_f_raw)
    nh = float(np.linalg.norm(gh))
    if nh <= 1e-12:
        return {"delta_grad_ratio": None, "cert": False, "cert_prox": False, "sim": False}
    ratio = float(np.linalg.norm(gf)) / nh
    C = aim.bound_C(cfg.alpha1, cfg.alpha2, L_g)
    Cp = aim.bound_Cprime(cfg.alpha1, cfg.alpha2, cfg.lam, stack.kappa, 1.0 / cfg.lam, L_g)
    sim = aim.d_similarity(cfg.alpha2 * gh, Z) >= -stack.kappa if np.linalg.norm(Z) > 0 else False
    return {
        "delta_grad_ratio": ratio,
        "cert": ratio <= C,
        "cert_prox": ratio <= Cp,
        "sim": bool(sim),
    }


def _effective_delta(Z: np.ndarray, Z_next: np.ndarray, stack: StackConfig) -> float | None:
    """Realized noise ratio of one layer step against an exact h-step.

    Writing the step as Z+ = Z - alpha2*(grad h(Z) - Delta) defines the
    noise Delta of the realized update; the ratio is ||Delta|| / ||grad h||.
    None where the gradient norm is below 1e-12.
    """
    cfg = stack.energy
    gf = grad_e1_reparam(Z, stack.weights.W_a_raw, cfg)
    gh = gf + grad_e2(Z, stack.weights.W_f_raw)
    nh = float(np.linalg.norm(gh))
    if nh <= 1e-12:
        return None
    Delta = gh - (Z - Z_next) / cfg.alpha2
    return float(np.linalg.norm(Delta)) / nh


def run_stack(Y0: np.ndarray, stack: StackConfig) -> Trace:
    """Iterate the configured layer, recording the full audit trail.

    Energies are recomputed from the recorded iterates alone, so a trace is
    verifiable bit-for-bit after the fact.
    """
    Z = np.asarray(Y0, dtype=float).copy()
    sym = 0.5 * (stack.weights.W_f_raw + stack.weights.W_f_raw.T) + np.eye(Z.shape[1])
    L_g = spectral_bounds(sym).lambda_max

    iterates = [Z.copy()]
    energies = [total_energy(Z, stack.weights, stack.energy)]
    deltas: list = []
    flags = [_stack_region_flags(Z, stack, L_g)]
    for _ in range(stack.depth):
        Z_next = _stack_layer(Z, stack)
        deltas.append(_effective_delta(Z, Z_next, stack))
        Z = Z_next
        iterates.append(Z.copy())
        energies.append(total_energy(Z, stack.weights, stack.energy))
        flags.append(_stack_region_flags(Z, stack, L_g))
    deltas.append(None)
    return Trace(iterates=iterates, energies=energies, deltas=deltas, region_flags=flags)
