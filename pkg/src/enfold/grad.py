"""Reverse-mode gradients through the unrolled stack and a small SGD loop.

The stack is shallow and built from a handful of primitives (softmax rows,
matrix products, LayerNorm, ReLU), so the backward pass is written by hand
against cached forward tensors rather than pulling in an autodiff
framework. Gradients are taken with respect to the raw weight matrices; the
chain rule passes through the symmetrizing constructions so trained weights
stay inside the admissible family. Finite-difference checking with explicit
ReLU-kink exclusion closes the loop.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from enfold.numerics import RngStream
from enfold.unfold import LayerWeights, StackConfig, row_layernorm
from enfold.energy import BetaMode

__all__ = [
    "Pooling",
    "LossKind",
    "MetaHead",
    "TrainSpec",
    "StackGradients",
    "TrainResult",
    "GradCheckReport",
    "stack_backward",
    "sgd_train",
    "grad_check",
]

_MASKED = -np.inf


class Pooling(enum.Enum):
    MEAN_OVER_TOKENS = "mean_over_tokens"


class LossKind(enum.Enum):
    SQUARED_ERROR = "squared_error"
    LOGISTIC_BINARY = "logistic_binary"


@dataclass
class MetaHead:
    """Readout after the stack: pool rows, apply the head matrix, score.

    head_matrix maps pooled features (d,) to logits (k,); the logistic loss
    requires k = 1 with labels in {0, 1}.
    """

    head_matrix: np.ndarray
    loss_kind: LossKind = LossKind.SQUARED_ERROR
    pooling: Pooling = Pooling.MEAN_OVER_TOKENS

    def __post_init__(self) -> None:
        self.head_matrix = np.asarray(self.head_matrix, dtype=float)
        if self.head_matrix.ndim != 2:
            raise ValueError("head_matrix must be d x k")
        if self.loss_kind is LossKind.LOGISTIC_BINARY and self.head_matrix.shape[1] != 1:
            raise ValueError("logistic loss requires a single logit column")


@dataclass(frozen=True)
class TrainSpec:
    dataset_size: int
    learning_rate: float = 0.01
    steps: int = 200
    batch: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.learning_rate < 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.dataset_size <= 0 or self.batch <= 0:
            raise ValueError("dataset_size and batch must be positive")


@dataclass(frozen=True)
class StackGradients:
    loss: float
    W_a_raw: np.ndarray
    W_f_raw: np.ndarray
    head_matrix: np.ndarray


@dataclass
class TrainResult:
    weights: LayerWeights
    head: MetaHead
    losses: list


@dataclass
class GradCheckReport:
    """Analytic-vs-finite-difference comparison per parameter matrix.

    Coordinates whose probe crosses a ReLU kink (the activation sign
    pattern differs between the two central-difference evaluations) are
    excluded from the error statistics and counted instead.
    """

    rel_errors: dict
    excluded: dict
    max_rel_err: float
    threshold: float = 1e-4

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err <= self.threshold)


@dataclass
class _LayerCache:
    Z0: np.ndarray      # layer input, before LayerNorm
    Z: np.ndarray       # after LayerNorm (== Z0 when disabled)
    Yrep: np.ndarray
    A: np.ndarray
    U: np.ndarray       # after the residual combine
    V: np.ndarray       # ReLU input


def _forward_stack(Y0: np.ndarray, stack: StackConfig) -> tuple[np.ndarray, list]:
    """Replay of the stack layer with every backward-needed tensor cached.

    Must stay in lockstep with the unfold layer; the suite pins the final
    output against run_stack.
    """
    Z = np.asarray(Y0, dtype=float).copy()
    caches = []
    for _ in range(stack.depth):
        Z0 = Z
        if stack.layernorm:
            Z = row_layernorm(Z)
        Yrep = Z @ stack.weights.W_a_raw
        logits = Yrep @ Yrep.T
        if stack.energy.beta_mode is BetaMode.REWEIGHTED:
            logits = logits - 0.5 * np.sum(Yrep * Yrep, axis=1)[None, :]
        if stack.graph_mask is not None:
            logits = np.where(stack.graph_mask.adjacency, logits, _MASKED)
        finite = logits != _MASKED
        shift = np.where(finite, logits, -np.inf).max(axis=1, keepdims=True)
        W = np.where(finite, np.exp(np.where(finite, logits - shift, 0.0)), 0.0)
        A = W / W.sum(axis=1, keepdims=True)
        U = A @ Z
        a = stack.residual_alpha
        if a < 1.0:
            U = (1.0 - a) * Z + a * U
        V = U @ stack.weights.W_f_s
        out = np.maximum(V, 0.0) if stack.use_relu else V
        caches.append(_LayerCache(Z0=Z0, Z=Z, Yrep=Yrep, A=A, U=U, V=V))
        Z = out
    return Z, caches


def _head_forward(out: np.ndarray, head: MetaHead, label) -> tuple[float, np.ndarray, np.ndarray]:
    """Loss value plus gradients w.r.t. the stack output and head matrix."""
    n = out.shape[0]
    p = out.mean(axis=0)
    z = p @ head.head_matrix
    if head.loss_kind is LossKind.SQUARED_ERROR:
        diff = z - np.asarray(label, dtype=float).reshape(z.shape)
        loss = 0.5 * float(diff @ diff)
        dz = diff
    else:
        t = float(label)
        if t not in (0.0, 1.0):
            raise ValueError("logistic labels must be 0 or 1")
        z0 = float(z[0])
        loss = float(np.logaddexp(0.0, z0)) - t * z0
        dz = np.array([1.0 / (1.0 + np.exp(-z0)) - t])
    dH = np.outer(p, dz)
    dOut = np.repeat(((head.head_matrix @ dz) / n)[None, :], n, axis=0)
    return loss, dOut, dH


def _layernorm_backward(dY: np.ndarray, Z0: np.ndarray) -> np.ndarray:
    U = Z0 - Z0.mean(axis=1, keepdims=True)
    nu = np.linalg.norm(U, axis=1, keepdims=True)
    Yn = U / nu
    dU = (dY - np.sum(Yn * dY, axis=1, keepdims=True) * Yn) / nu
    return dU - dU.mean(axis=1, keepdims=True)


def _layer_backward(dOut: np.ndarray, cache: _LayerCache, stack: StackConfig):
    dV = dOut * (cache.V > 0.0) if stack.use_relu else dOut
    dU = dV @ stack.weights.W_f_s.T
    dWfs = cache.U.T @ dV
    a = stack.residual_alpha
    if a < 1.0:
        dZ = (1.0 - a) * dU
        dU = a * dU
    else:
        dZ = np.zeros_like(dU)
    dA = dU @ cache.Z.T
    dZ = dZ + cache.A.T @ dU
    # softmax rows: masked entries have A == 0, so their logits get no pull
    dL = cache.A * (dA - np.sum(dA * cache.A, axis=1, keepdims=True))
    dYrep = dL @ cache.Yrep + dL.T @ cache.Yrep
    if stack.energy.beta_mode is BetaMode.REWEIGHTED:
        dYrep = dYrep - dL.sum(axis=0)[:, None] * cache.Yrep
    dZ = dZ + dYrep @ stack.weights.W_a_raw.T
    dWa = cache.Z.T @ dYrep
    if stack.layernorm:
        dZ = _layernorm_backward(dZ, cache.Z0)
    return dZ, dWa, dWfs


def stack_backward(Y0: np.ndarray, stack: StackConfig, head: MetaHead, label) -> StackGradients:
    """Exact reverse-mode derivatives of the scalar loss.

    Weights are shared across layers, so their gradients accumulate over
    depth. The symmetric feed-forward map contributes through
    dW_f = -(alpha2/2) * (dW_f_s + dW_f_s^T), and the attention gram through
    both factors of W_a W_a^T via the reparameterized rows.
    """
    out, caches = _forward_stack(Y0, stack)
    loss, dOut, dH = _head_forward(out, head, label)
    dWa_total = np.zeros_like(stack.weights.W_a_raw)
    dWf_total = np.zeros_like(stack.weights.W_f_raw)
    alpha2 = stack.weights.alpha2
    for cache in reversed(caches):
        dOut, dWa, dWfs = _layer_backward(dOut, cache, stack)
        dWa_total += dWa
        dWf_total += -(alpha2 / 2.0) * (dWfs + dWfs.T)
    return StackGradients(loss=loss, W_a_raw=dWa_total, W_f_raw=dWf_total, head_matrix=dH)


def sgd_train(data: list, stack: StackConfig, head: MetaHead, spec: TrainSpec) -> TrainResult:
    """Plain SGD on the raw parameters, deterministic under the seed.

    Batches are drawn with replacement from a dedicated RNG stream; the
    recorded loss is the batch loss before the update. Inputs are left
    untouched; the result carries fresh weight and head copies.
    """
    if spec.dataset_size != len(data):
        raise ValueError(f"dataset_size {spec.dataset_size} != len(data) {len(data)}")
    weights = LayerWeights(
        W_a_raw=stack.weights.W_a_raw.copy(),
        W_f_raw=stack.weights.W_f_raw.copy(),
        alpha2=stack.weights.alpha2,
    )
    train_stack = replace(stack, weights=weights)
    trained_head = MetaHead(
        head_matrix=head.head_matrix.copy(),
        loss_kind=head.loss_kind,
        pooling=head.pooling,
    )
    gen = RngStream(spec.seed, 101).generator()
    losses = []
    lr = spec.learning_rate
    for step in range(spec.steps):
        idx = gen.integers(0, spec.dataset_size, size=spec.batch)
        gWa = np.zeros_like(weights.W_a_raw)
        gWf = np.zeros_like(weights.W_f_raw)
        gH = np.zeros_like(trained_head.head_matrix)
        batch_loss = 0.0
        for i in idx:
            X, label = data[i]
            g = stack_backward(X, train_stack, trained_head, label)
            batch_loss += g.loss
            gWa += g.W_a_raw
            gWf += g.W_f_raw
            gH += g.head_matrix
        batch_loss /= spec.batch
        if not np.isfinite(batch_loss):
            raise FloatingPointError(f"training diverged at step {step}: non-finite loss")
        losses.append(batch_loss)
        weights.W_a_raw -= (lr / spec.batch) * gWa
        weights.W_f_raw -= (lr / spec.batch) * gWf
        weights.refresh()
        trained_head.head_matrix -= (lr / spec.batch) * gH
    return TrainResult(weights=weights, head=trained_head, losses=losses)


def _relu_pattern(Y0, stack):
    _, caches = _forward_stack(Y0, stack)
    if not stack.use_relu:
        return ()
    return tuple((c.V > 0.0).tobytes() for c in caches)


def grad_check(stack: StackConfig, head: MetaHead, tol: float = 1e-4,
               n: int = 5, seed: int = 0, h: float = 1e-5) -> GradCheckReport:
    """Central-difference audit of stack_backward on a seeded instance.

    Each parameter coordinate is probed at +-h; if the two probes disagree
    on any ReLU activation sign the coordinate sits on a kink and is
    excluded from the comparison rather than failed. Relative error uses
    max(|analytic|, |numeric|, 1e-3) as denominator so near-zero
    coordinates are judged on an absolute scale.
    """
    gen = RngStream(seed, 55).generator()
    d = stack.weights.W_a_raw.shape[0]
    Y0 = gen.standard_normal((n, d))
    k = head.head_matrix.shape[1]
    if head.loss_kind is LossKind.SQUARED_ERROR:
        label = gen.standard_normal(k)
    else:
        label = float(gen.integers(0, 2))

    analytic = stack_backward(Y0, stack, head, label)
    targets = {
        "W_a_raw": analytic.W_a_raw,
        "W_f_raw": analytic.W_f_raw,
        "head_matrix": analytic.head_matrix,
    }

    def loss_at(name, P):
        if name == "head_matrix":
            probe_head = MetaHead(P, head.loss_kind, head.pooling)
            return stack_backward(Y0, stack, probe_head, label).loss, _relu_pattern(Y0, stack)
        Wa = P if name == "W_a_raw" else stack.weights.W_a_raw
        Wf = P if name == "W_f_raw" else stack.weights.W_f_raw
        probe = replace(stack, weights=LayerWeights(Wa, Wf, stack.weights.alpha2))
        return stack_backward(Y0, probe, head, label).loss, _relu_pattern(Y0, probe)

    rel_errors = {}
    excluded = {}
    max_err = 0.0
    for name, g in targets.items():
        base = {"W_a_raw": stack.weights.W_a_raw,
                "W_f_raw": stack.weights.W_f_raw,
                "head_matrix": head.head_matrix}[name]
        worst = 0.0
        skipped = 0
        P = base.copy()
        for ij in np.ndindex(*P.shape):
            keep = P[ij]
            P[ij] = keep + h
            f_plus, pat_plus = loss_at(name, P)
            P[ij] = keep - h
            f_minus, pat_minus = loss_at(name, P)
            P[ij] = keep
            if pat_plus != pat_minus:
                skipped += 1
                continue
            fd = (f_plus - f_minus) / (2.0 * h)
            err = float(abs(g[ij] - fd) / max(abs(g[ij]), abs(fd), 1e-3))
            worst = max(worst, err)
        rel_errors[name] = worst
        excluded[name] = skipped
        max_err = max(max_err, worst)
    return GradCheckReport(rel_errors=rel_errors, excluded=excluded,
                           max_rel_err=max_err, threshold=tol)
