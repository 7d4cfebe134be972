"""Scripted experiments emitting machine-readable CSV tables.

Five experiment kinds: a quadratic alternating-descent trace with PCA
projection, membership rasters for the two descent regions, per-layer
energy curves of random and trained stacks, and a randomized conditional
descent audit. Every experiment is a pure function of its spec and seed;
identical inputs give byte-identical CSV output.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace

import numpy as np

from enfold import aim, grad, unfold
from enfold.energy import BetaMode, EnergyConfig, RhoKind
from enfold.numerics import RngStream, pca_project, spectral_bounds

__all__ = [
    "ExperimentKind",
    "ExperimentSpec",
    "CsvTable",
    "exp_aim_trace",
    "exp_raster_S",
    "exp_raster_T",
    "exp_energy_curves",
    "exp_descent_audit",
    "descent_audit",
    "load_embeddings",
    "run_experiment",
]


class ExperimentKind(enum.Enum):
    AIM_TRACE = "aim_trace"
    RASTER_S = "raster_s"
    RASTER_T = "raster_t"
    ENERGY_CURVES = "energy_curves"
    DESCENT_AUDIT = "descent_audit"


_DEFAULTS = {
    ExperimentKind.AIM_TRACE: {
        "steps": 250, "dim": 10, "scale": 0.3,
        "alpha1": 0.01, "alpha2": 0.02, "y0_scale": 2.0,
    },
    ExperimentKind.RASTER_S: {
        "thresholds": [0.7, 1.5], "window": 3.0, "grid": 301,
    },
    ExperimentKind.RASTER_T: {
        "kappas": [0.1, 0.5, 0.9, 0.99], "window": 3.0, "grid": 301,
        "alpha2": 0.05,
    },
    ExperimentKind.ENERGY_CURVES: {
        "mode": "random_init", "samples": 200, "depth": 12, "n": 32, "d": 64,
        "scale": 0.02, "train_steps": 200, "learning_rate": 0.01, "batch": 4,
        "dataset_size": 32, "embeddings_path": None,
    },
    ExperimentKind.DESCENT_AUDIT: {
        "seeds": 500, "depth": 6, "n": 8, "d": 8, "scale": 0.02,
    },
}


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment request: kind, mandatory seed, full parameters."""

    kind: ExperimentKind
    seed: int
    params: dict

    @classmethod
    def resolve(cls, kind: ExperimentKind, seed, overrides: dict | None = None) -> "ExperimentSpec":
        if seed is None:
            raise ValueError("seed is mandatory")
        merged = dict(_DEFAULTS[kind])
        for key, value in (overrides or {}).items():
            if key not in merged:
                raise ValueError(f"unknown parameter {key!r} for {kind.value}")
            merged[key] = value
        return cls(kind=kind, seed=int(seed), params=merged)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


@dataclass
class CsvTable:
    """Rectangular all-finite numeric table with a fixed header.

    Reals are written with 17 significant digits so parsing the file back
    reproduces every double bit-for-bit; flags are 0/1 columns. Infinities
    never appear: infeasibility is encoded as a flag column.
    """

    header: list
    rows: list

    def __post_init__(self) -> None:
        w = len(self.header)
        for i, row in enumerate(self.rows):
            if len(row) != w:
                raise ValueError(f"row {i} has {len(row)} cells, header has {w}")
            for v in row:
                if not np.isfinite(float(v)):
                    raise ValueError(f"non-finite value in row {i}")

    def to_bytes(self) -> bytes:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buf.getvalue().encode("utf-8")

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    def column(self, name: str) -> np.ndarray:
        idx = self.header.index(name)
        return np.array([float(r[idx]) for r in self.rows])


def load_embeddings(path) -> np.ndarray:
    """Token matrix from a text file: first line "n d", then n rows of d reals."""
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise ValueError("first line must be 'n d'")
        n, d = int(first[0]), int(first[1])
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != d:
                raise ValueError(f"line {lineno}: expected {d} values, got {len(parts)}")
            rows.append([float(p) for p in parts])
    if len(rows) != n:
        raise ValueError(f"expected {n} rows, got {len(rows)}")
    return np.asarray(rows, dtype=float)


def _expect(spec: ExperimentSpec, kind: ExperimentKind) -> None:
    if spec.kind is not kind:
        raise ValueError(f"spec kind {spec.kind.value} does not match {kind.value}")


def exp_aim_trace(spec: ExperimentSpec) -> CsvTable:
    """Alternating-descent run on a random left/right quadratic pair.

    Columns: step, h, delta (noise ratio, with a defined flag), the
    tolerance C, membership of the distance-ratio ball, distance to the
    h-optimum, and a 2D PCA projection of the trajectory. The optimum's
    projection in the same basis rides along as constant columns for
    plotting.
    """
    _expect(spec, ExperimentKind.AIM_TRACE)
    p = spec.params
    gen = RngStream(spec.seed, 11).generator()
    dim, scale = int(p["dim"]), float(p["scale"])
    f = aim.QuadraticObjective(aim.TransformSide.LEFT,
                               scale * gen.standard_normal((dim, dim)),
                               scale * gen.standard_normal((dim, dim)))
    g = aim.QuadraticObjective(aim.TransformSide.RIGHT,
                               scale * gen.standard_normal((dim, dim)),
                               scale * gen.standard_normal((dim, dim)))
    y0 = float(p["y0_scale"]) * gen.standard_normal((dim, dim))
    alpha1, alpha2 = float(p["alpha1"]), float(p["alpha2"])
    prof = aim.SmoothnessProfile.from_pair(f, g, alpha2)
    if not alpha1 <= alpha2 <= 1.0 / prof.L_h:
        raise ValueError(
            f"certified mode needs alpha1 <= alpha2 <= 1/L_h = {1.0 / prof.L_h:.6g}")
    tr = aim.run_algorithm1(f, g, y0, alpha1, alpha2, int(p["steps"]))
    proj = pca_project(tr.iterates + [tr.region.y_h_star], 2)
    opt_xy = proj[-1]
    rows = []
    for k, Y in enumerate(tr.iterates):
        ratio = tr.delta_ratio[k]
        s_flag = tr.s_flags[k]
        rows.append((
            k,
            tr.h_values[k],
            0.0 if ratio is None else ratio,
            0 if ratio is None else 1,
            tr.region.C,
            bool(s_flag) if s_flag is not None else False,
            tr.dist_to_opt[k],
            proj[k][0],
            proj[k][1],
            opt_xy[0],
            opt_xy[1],
        ))
    header = ["step", "h", "delta", "delta_defined", "C", "s_flag",
              "dist_opt", "pca_x", "pca_y", "opt_pca_x", "opt_pca_y"]
    return CsvTable(header=header, rows=rows)


def _planar_pair(seed: int):
    """2D left/right pair with optima placed near +-0.4 on the x-axis.

    Bias terms are solved backward from jittered target optima so the
    Apollonius balls of the figure-scale thresholds stay inside the
    default window.
    """
    gen = RngStream(seed, 23).generator()
    theta = gen.uniform(0.0, np.pi)
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    S = R @ np.diag([1.6, 0.5]) @ R.T
    w = np.array([[0.8]])
    y_f = np.array([[-0.4], [0.0]]) + 0.05 * gen.standard_normal((2, 1))
    y_h = np.array([[0.4], [0.0]]) + 0.05 * gen.standard_normal((2, 1))
    gram = S.T @ S
    B1 = (gram + np.eye(2)) @ y_f
    B2 = (gram + (2.0 + float(w[0, 0]) ** 2) * np.eye(2)) @ y_h - B1
    f = aim.QuadraticObjective(aim.TransformSide.LEFT, S, B1)
    g = aim.QuadraticObjective(aim.TransformSide.RIGHT, w, B2)
    return f, g


def _grid_points(window: float, grid: int):
    xs = np.linspace(-window, window, grid)
    ys = np.linspace(-window, window, grid)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    return X.ravel(), Y.ravel()


def exp_raster_S(spec: ExperimentSpec) -> CsvTable:
    """Distance-ratio ball membership raster at the configured thresholds.

    Membership uses the multiplicative form ||y - y_f*|| <= t * ||y - y_h*||
    so grid cells at the h-optimum are handled without division; the
    optimum itself is never a member for finite thresholds.
    """
    _expect(spec, ExperimentKind.RASTER_S)
    p = spec.params
    f, g = _planar_pair(spec.seed)
    y_f, _, y_h = aim.optimal_points(f, g)
    gx, gy = _grid_points(float(p["window"]), int(p["grid"]))
    df = np.hypot(gx - y_f[0, 0], gy - y_f[1, 0])
    dh = np.hypot(gx - y_h[0, 0], gy - y_h[1, 0])
    rows = []
    for t in p["thresholds"]:
        t = float(t)
        member = df <= t * dh
        for i in range(gx.size):
            rows.append((t, gx[i], gy[i], bool(member[i])))
    return CsvTable(header=["threshold", "x", "y", "member"], rows=rows)


def exp_raster_T(spec: ExperimentSpec) -> CsvTable:
    """Similarity-region raster for h(y) = ||Wy||^2 + ||y - b||^2.

    The similarity value is computed vectorized over the grid; the origin
    cell, where the test is undefined, is recorded as a non-member with
    similarity -1.
    """
    _expect(spec, ExperimentKind.RASTER_T)
    p = spec.params
    gen = RngStream(spec.seed, 29).generator()
    theta = gen.uniform(0.0, np.pi)
    c, s = np.cos(theta), np.sin(theta)
    R = np.array([[c, -s], [s, c]])
    W = R @ np.diag([1.3, 0.6]) @ R.T
    b = np.array([0.5, 0.3]) + 0.05 * gen.standard_normal(2)
    alpha2 = float(p["alpha2"])
    gx, gy = _grid_points(float(p["window"]), int(p["grid"]))
    pts = np.stack([gx, gy])                       # (2, N)
    gradh = 2.0 * (W.T @ W + np.eye(2)) @ pts - 2.0 * b[:, None]
    xi1 = alpha2 * gradh
    n1 = np.sum(xi1 * xi1, axis=0)
    dvals = np.sum(np.minimum(pts * pts - xi1 * xi1, 0.0), axis=0)
    origin = (gx == 0.0) & (gy == 0.0)
    stationary = n1 == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        dvals = np.where(n1 > 0.0, dvals / np.where(n1 > 0.0, n1, 1.0), 0.0)
    dvals = np.where(origin, -1.0, dvals)
    rows = []
    for kappa in p["kappas"]:
        kappa = float(kappa)
        member = dvals >= -kappa
        member = np.where(origin, False, member)
        member = np.where(stationary & ~origin, True, member)
        for i in range(gx.size):
            rows.append((kappa, gx[i], gy[i], bool(member[i]), dvals[i]))
    return CsvTable(header=["kappa", "x", "y", "member", "similarity"], rows=rows)


def _smooth_energy(value) -> float:
    return value.e1 + value.e2


def _random_stack(depth, n, d, scale, seed, stream, beta_mode=BetaMode.REWEIGHTED,
                  rho=RhoKind.NEG_EXP, use_relu=True, bias=None):
    weights = unfold.LayerWeights.random(d, alpha2=0.5, scale=scale,
                                         rng=RngStream(seed, stream))
    cfg = EnergyConfig(rho=rho, bias=bias, beta_mode=beta_mode)
    return unfold.StackConfig(depth=depth, weights=weights, energy=cfg, use_relu=use_relu)


def _quartile_rows(per_layer: list) -> list:
    rows = []
    for layer, vals in enumerate(per_layer):
        arr = np.asarray(vals)
        q1, med, q3 = np.percentile(arr, [25.0, 50.0, 75.0])
        rows.append((layer, float(arr.mean()), float(q1), float(med), float(q3)))
    return rows


def _curves_random_init(spec: ExperimentSpec) -> CsvTable:
    p = spec.params
    depth, n, d = int(p["depth"]), int(p["n"]), int(p["d"])
    stack = _random_stack(depth, n, d, float(p["scale"]), spec.seed, 41)
    if p["embeddings_path"] is not None:
        samples = [load_embeddings(p["embeddings_path"])]
    else:
        # nonnegative inputs keep every iterate of a ReLU stack feasible
        samples = [
            np.abs(RngStream(spec.seed, 1000 + i).generator().standard_normal((n, d)))
            for i in range(int(p["samples"]))
        ]
    per_layer = [[] for _ in range(depth + 1)]
    for X in samples:
        tr = unfold.run_stack(X, stack)
        for k, val in enumerate(tr.energies):
            per_layer[k].append(_smooth_energy(val))
    return CsvTable(header=["layer", "mean", "q1", "median", "q3"],
                    rows=_quartile_rows(per_layer))


def _two_class_sample(gen, n, d, label):
    shift = 0.3 if label else -0.3
    return gen.standard_normal((n, d)) + shift


def _curves_trained(spec: ExperimentSpec) -> CsvTable:
    """Energy curves of a trained stack, anchored per sample (bias = X).

    The stack is trained on a synthetic separable binary task with the
    plain softmax regime (uniform weights, no LayerNorm); energies of the
    trained forward pass are then evaluated with each sample as its own
    bias anchor.
    """
    p = spec.params
    depth, n, d = int(p["depth"]), int(p["n"]), int(p["d"])
    stack = _random_stack(depth, n, d, float(p["scale"]), spec.seed, 43,
                          beta_mode=BetaMode.UNIFORM)
    data_gen = RngStream(spec.seed, 300).generator()
    size = int(p["dataset_size"])
    data = [(
        _two_class_sample(data_gen, n, d, i % 2), float(i % 2)
    ) for i in range(size)]
    head = grad.MetaHead(
        head_matrix=0.1 * RngStream(spec.seed, 44).generator().standard_normal((d, 1)),
        loss_kind=grad.LossKind.LOGISTIC_BINARY,
    )
    tspec = grad.TrainSpec(dataset_size=size,
                           learning_rate=float(p["learning_rate"]),
                           steps=int(p["train_steps"]),
                           batch=int(p["batch"]),
                           seed=spec.seed)
    result = grad.sgd_train(data, stack, head, tspec)
    eval_gen = RngStream(spec.seed, 301).generator()
    per_layer = [[] for _ in range(depth + 1)]
    for i in range(int(p["samples"])):
        X = _two_class_sample(eval_gen, n, d, i % 2)
        anchored = replace(
            stack, weights=result.weights,
            energy=EnergyConfig(rho=stack.energy.rho, bias=X,
                                alpha1=stack.energy.alpha1,
                                alpha2=stack.energy.alpha2,
                                lam=stack.energy.lam,
                                beta_mode=stack.energy.beta_mode))
        tr = unfold.run_stack(X, anchored)
        for k, val in enumerate(tr.energies):
            per_layer[k].append(_smooth_energy(val))
    return CsvTable(header=["layer", "mean", "q1", "median", "q3"],
                    rows=_quartile_rows(per_layer))


def exp_energy_curves(spec: ExperimentSpec) -> CsvTable:
    """Per-layer energy quartiles over seeded samples (random or trained)."""
    _expect(spec, ExperimentKind.ENERGY_CURVES)
    mode = spec.params["mode"]
    if mode == "random_init":
        return _curves_random_init(spec)
    if mode == "trained":
        return _curves_trained(spec)
    raise ValueError(f"unknown mode {mode!r}")


def descent_audit(trace: unfold.Trace, cfg: unfold.StackConfig, seed: int = 0) -> CsvTable:
    """Per-transition conditional-descent audit of one stack trace.

    A violation is an energy increase beyond 1e-9 on a transition whose
    recorded certification flags all hold: the noise-tolerance flag for a
    smooth stack, plus the similarity flag (against the proximal tolerance)
    when the ReLU is active. Infeasible ReLU-stack iterates carry infinite
    indicator value, so no transition out of them can violate.
    """
    sym = 0.5 * (cfg.weights.W_f_raw + cfg.weights.W_f_raw.T) + np.eye(cfg.weights.W_f_raw.shape[0])
    L_g = spectral_bounds(sym).lambda_max
    e = cfg.energy
    C = aim.bound_C(e.alpha1, e.alpha2, L_g)
    Cp = aim.bound_Cprime(e.alpha1, e.alpha2, e.lam, cfg.kappa, 1.0 / e.lam, L_g)
    rows = []
    for k in range(len(trace.iterates) - 1):
        flags = trace.region_flags[k]
        delta = trace.deltas[k]
        e_now = _smooth_energy(trace.energies[k])
        e_next = _smooth_energy(trace.energies[k + 1])
        diff = e_next - e_now
        feasible = bool(trace.energies[k].feasible)
        if cfg.use_relu:
            conditions = bool(flags["cert_prox"] and flags["sim"])
            comparable = feasible
        else:
            conditions = bool(flags["cert"])
            comparable = True
        violation = bool(conditions and comparable and diff > 1e-9)
        rows.append((
            seed, k, diff,
            0.0 if delta is None else delta,
            0 if delta is None else 1,
            C, Cp,
            bool(flags["cert"]), bool(flags["cert_prox"]), bool(flags["sim"]),
            feasible, conditions, violation,
        ))
    header = ["seed", "step", "energy_delta", "delta", "delta_defined",
              "C", "C_prime", "cert", "cert_prox", "sim", "feasible",
              "conditions_met", "violation"]
    return CsvTable(header=header, rows=rows)


def exp_descent_audit(spec: ExperimentSpec) -> CsvTable:
    """Randomized audit: many seeded stacks, all transitions, one table.

    Configuration variety cycles deterministically with the seed index:
    attraction profile by threes, ReLU and softmax reweighting by parity.
    """
    _expect(spec, ExperimentKind.DESCENT_AUDIT)
    p = spec.params
    depth, n, d = int(p["depth"]), int(p["n"]), int(p["d"])
    rhos = [RhoKind.NEG_EXP, RhoKind.LOG_PLUS2, RhoKind.LOG_PLUS1]
    rows = []
    header = None
    for i in range(int(p["seeds"])):
        run_seed = spec.seed + i
        stack = _random_stack(
            depth, n, d, float(p["scale"]), run_seed, 47,
            beta_mode=BetaMode.REWEIGHTED if (i // 2) % 2 == 0 else BetaMode.UNIFORM,
            rho=rhos[i % 3],
            use_relu=i % 2 == 0,
        )
        Y0 = RngStream(run_seed, 48).generator().standard_normal((n, d))
        tr = unfold.run_stack(Y0, stack)
        table = descent_audit(tr, stack, seed=run_seed)
        header = table.header
        rows.extend(table.rows)
    return CsvTable(header=header, rows=rows)


_DISPATCH = {
    ExperimentKind.AIM_TRACE: exp_aim_trace,
    ExperimentKind.RASTER_S: exp_raster_S,
    ExperimentKind.RASTER_T: exp_raster_T,
    ExperimentKind.ENERGY_CURVES: exp_energy_curves,
    ExperimentKind.DESCENT_AUDIT: exp_descent_audit,
}


def run_experiment(spec: ExperimentSpec) -> CsvTable:
    return _DISPATCH[spec.kind](spec)
