"""Binary soft-margin SVMs with linear and RBF kernels, trained by SMO.

The decision function is the usual dual expansion

    f(x) = sum_i alpha_i y_i K(x_i, x) + b

and for the linear kernel it collapses to ``w.x + b`` with
``w = sum_i alpha_i y_i x_i``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

LINEAR = "linear"
RBF = "rbf"

# alphas below this fraction of C are treated as exactly zero
_ALPHA_ZERO = 1e-12


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.kind == RBF:
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("RBF kernel needs gamma > 0")
        elif self.kind == LINEAR:
            if self.gamma is not None:
                raise ValueError("linear kernel takes no gamma")
        else:
            raise ValueError(f"unknown kernel kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], d.get("gamma"))


@dataclass(frozen=True)
class TrainConfig:
    """Solver settings.

    ``gamma=None`` selects the "scale" heuristic, 1 / (D * mean feature
    variance) of the data handed to :func:`train_binary`.
    """

    C: float = 1.0
    tol: float = 1e-4
    max_passes: int = 1000
    seed: int = 0
    gamma: Optional[float] = None
    eps: float = 1e-8

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_passes < 1:
            raise ValueError("max_passes must be >= 1")
        if self.gamma is not None and not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class BinarySvm:
    kernel: KernelSpec
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray
    labels: np.ndarray
    bias: float
    class_pair: tuple
    C: float
    converged: bool = True
    iterations: int = 0
    primal_weights: Optional[np.ndarray] = field(default=None)

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    @property
    def n_support(self) -> int:
        return len(self.dual_coeffs)

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "support_vectors": self.support_vectors.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
            "labels": self.labels.astype(int).tolist(),
            "bias": float(self.bias),
            "class_pair": list(self.class_pair),
            "C": self.C,
            "converged": self.converged,
            "iterations": self.iterations,
            "primal_weights": None if self.primal_weights is None else self.primal_weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BinarySvm":
        sv = np.asarray(d["support_vectors"], dtype=float)
        if sv.size == 0:
            sv = sv.reshape(0, len(d["primal_weights"] or []))
        w = d.get("primal_weights")
        return cls(
            kernel=KernelSpec.from_dict(d["kernel"]),
            support_vectors=sv,
            dual_coeffs=np.asarray(d["dual_coeffs"], dtype=float),
            labels=np.asarray(d["labels"], dtype=float),
            bias=float(d["bias"]),
            class_pair=tuple(d["class_pair"]),
            C=float(d["C"]),
            converged=bool(d["converged"]),
            iterations=int(d["iterations"]),
            primal_weights=None if w is None else np.asarray(w, dtype=float),
        )


def kernel_eval(spec: KernelSpec, a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"arity mismatch: {a.shape} vs {b.shape}")
    if spec.kind == LINEAR:
        return float(a @ b)
    d = a - b
    return float(np.exp(-spec.gamma * (d @ d)))


def kernel_matrix(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"arity mismatch: {A.shape[1]} vs {B.shape[1]}")
    G = A @ B.T
    if spec.kind == LINEAR:
        return G
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * G
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-spec.gamma * sq)


def scale_gamma(X: np.ndarray) -> float:
    """The "scale" width heuristic: 1 / (D * mean per-feature variance)."""
    X = np.asarray(X, dtype=float)
    v = float(np.mean(X.var(axis=0)))
    if v <= 0:
        return 1.0
    return 1.0 / (X.shape[1] * v)


def dual_objective(alpha, y, K) -> float:
    """W(alpha) = sum(alpha) - 1/2 sum_ij alpha_i alpha_j y_i y_j K_ij (maximised)."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


class _Smo:
    """Platt-style SMO with an error cache and seeded random scan offsets."""

    def __init__(self, K, y, C, tol, eps, rng):
        self.K = K
        self.y = y
        self.C = C
        self.tol = tol
        self.eps = eps
        self.rng = rng
        m = len(y)
        self.alpha = np.zeros(m)
        self.b = 0.0
        self.E = -y.astype(float)  # f(x_i) - y_i with f == 0
        self.steps = 0

    def take_step(self, i1, i2) -> bool:
        if i1 == i2:
            return False
        K, y, C, alpha = self.K, self.y, self.C, self.alpha
        a1, a2 = alpha[i1], alpha[i2]
        y1, y2 = y[i1], y[i2]
        E1, E2 = self.E[i1], self.E[i2]
        s = y1 * y2
        if y1 != y2:
            L, H = max(0.0, a2 - a1), min(C, C + a2 - a1)
        else:
            L, H = max(0.0, a1 + a2 - C), min(C, a1 + a2)
        if H - L < 1e-12 * C:
            return False
        k11, k12, k22 = K[i1, i1], K[i1, i2], K[i2, i2]
        eta = k11 + k22 - 2.0 * k12
        if eta > 1e-12:
            a2n = a2 + y2 * (E1 - E2) / eta
            a2n = min(max(a2n, L), H)
        else:
            # objective at the segment ends (Platt 1998, eq. 19)
            f1 = y1 * (E1 - self.b) - a1 * k11 - s * a2 * k12
            f2 = y2 * (E2 - self.b) - s * a1 * k12 - a2 * k22
            L1 = a1 + s * (a2 - L)
            H1 = a1 + s * (a2 - H)
            psi_l = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
            psi_h = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
            if psi_l < psi_h - self.eps:
                a2n = L
            elif psi_l > psi_h + self.eps:
                a2n = H
            else:
                a2n = a2
        if abs(a2n - a2) < self.eps * (a2n + a2 + self.eps):
            return False
        a1n = a1 + s * (a2 - a2n)
        zero = _ALPHA_ZERO * C
        if a1n < zero:
            a1n = 0.0
        elif a1n > C - zero:
            a1n = C
        if a2n < zero:
            a2n = 0.0
        elif a2n > C - zero:
            a2n = C
        d1 = y1 * (a1n - a1)
        d2 = y2 * (a2n - a2)
        b1 = self.b - E1 - d1 * k11 - d2 * k12
        b2 = self.b - E2 - d1 * k12 - d2 * k22
        self.E += d1 * K[i1] + d2 * K[i2]
        alpha[i1], alpha[i2] = a1n, a2n
        if 0.0 < a1n < C:
            bn = b1
        elif 0.0 < a2n < C:
            bn = b2
        else:
            # both at a bound: (b1 + b2) / 2 can leave b outside the interval
            # allowed by the other points, which stalls the pair updates
            bn = self.feasible_bias()
        self.E += bn - self.b
        self.b = bn
        self.steps += 1
        return True

    def feasible_bias(self) -> float:
        """Bias from the current alphas: mean over free points, else the KKT interval midpoint."""
        y, alpha, C = self.y, self.alpha, self.C
        g = self.E + y - self.b  # sum_j alpha_j y_j K_ij
        free = (alpha > 0) & (alpha < C)
        if free.any():
            return float(np.mean(y[free] - g[free]))
        up = ((alpha <= 0) & (y > 0)) | ((alpha >= C) & (y < 0))
        lower = np.max(y[up] - g[up]) if up.any() else -np.inf
        upper = np.min(y[~up] - g[~up]) if (~up).any() else np.inf
        if np.isinf(lower):
            return float(upper)
        if np.isinf(upper):
            return float(lower)
        return float(0.5 * (lower + upper))

    def examine(self, i2) -> int:
        y2, a2 = self.y[i2], self.alpha[i2]
        E2 = self.E[i2]
        r2 = E2 * y2
        if not ((r2 < -self.tol and a2 < self.C) or (r2 > self.tol and a2 > 0)):
            return 0
        m = len(self.y)
        free = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C))
        if len(free) > 1:
            i1 = int(free[np.argmax(np.abs(self.E[free] - E2))])
            if self.take_step(i1, i2):
                return 1
        if len(free):
            start = int(self.rng.integers(len(free)))
            for i1 in np.roll(free, -start):
                if self.take_step(int(i1), i2):
                    return 1
        start = int(self.rng.integers(m))
        for k in range(m):
            if self.take_step((start + k) % m, i2):
                return 1
        return 0

    def run(self, max_passes: int) -> int:
        passes = 0
        changed = 0
        examine_all = True
        while (changed > 0 or examine_all) and passes < max_passes:
            changed = 0
            if examine_all:
                idx = range(len(self.y))
            else:
                idx = np.flatnonzero((self.alpha > 0) & (self.alpha < self.C)).tolist()
            for i in idx:
                changed += self.examine(i)
            if examine_all:
                examine_all = False
            elif changed == 0:
                examine_all = True
            passes += 1
        return passes


def kkt_violation(alpha, y, f, C) -> float:
    """Largest violation of the soft-margin KKT conditions given outputs f(x_i)."""
    alpha = np.asarray(alpha)
    yf = np.asarray(y) * np.asarray(f)
    zero = _ALPHA_ZERO * C
    at0 = alpha <= zero
    atC = alpha >= C - zero
    free = ~(at0 | atC)
    v = np.zeros_like(yf)
    v[at0] = np.maximum(0.0, 1.0 - yf[at0])
    v[atC] = np.maximum(0.0, yf[atC] - 1.0)
    v[free] = np.abs(yf[free] - 1.0)
    return float(v.max()) if len(v) else 0.0


def train_binary(X, y, spec: KernelSpec | str, cfg: TrainConfig = TrainConfig(),
                 class_pair: tuple = (0, 1)) -> BinarySvm:
    """Train a soft-margin SVM on labels in {-1, +1}.

    ``spec`` may be a bare kind string, in which case the RBF width comes
    from ``cfg.gamma`` or the scale heuristic. Failure to reach the KKT
    tolerance within ``cfg.max_passes`` is reported via ``converged=False``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or len(X) != len(y):
        raise ValueError("X must be (m, D) with one label per row")
    if len(y) < 2:
        raise ValueError("need at least 2 samples")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if len(np.unique(y)) < 2:
        raise ValueError("both classes must be present")
    if isinstance(spec, str):
        gamma = None
        if spec == RBF:
            gamma = cfg.gamma if cfg.gamma is not None else scale_gamma(X)
        spec = KernelSpec(spec, gamma)

    K = kernel_matrix(spec, X, X)
    # the final bias averages the free points, which can move it by up to the inner tolerance;
    # half the reported tolerance inside SMO keeps the final KKT check within cfg.tol
    smo = _Smo(K, y, cfg.C, 0.5 * cfg.tol, cfg.eps, np.random.default_rng(cfg.seed))
    passes = smo.run(cfg.max_passes)
    alpha = smo.alpha
    b = smo.feasible_bias()
    f = K @ (alpha * y) + b
    viol = kkt_violation(alpha, y, f, cfg.C)
    converged = viol <= cfg.tol
    if not converged:
        log.warning("SMO stopped after %d passes with KKT violation %.3g", passes, viol)

    keep = alpha > 0
    sv, a, ys = X[keep], alpha[keep], y[keep]
    w = None
    if spec.kind == LINEAR:
        w = (a * ys) @ sv if len(a) else np.zeros(X.shape[1])
    return BinarySvm(
        kernel=spec,
        support_vectors=sv.copy(),
        dual_coeffs=a.copy(),
        labels=ys.copy(),
        bias=b,
        class_pair=tuple(class_pair),
        C=cfg.C,
        converged=bool(converged),
        iterations=smo.steps,
        primal_weights=w,
    )


def decision_function(model: BinarySvm, X) -> np.ndarray:
    """Vectorised dual decision values for the rows of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.n_features:
        raise ValueError(f"arity mismatch: model has {model.n_features} features, got {X.shape[1]}")
    if model.n_support == 0:
        return np.full(len(X), model.bias)
    Kx = kernel_matrix(model.kernel, X, model.support_vectors)
    return Kx @ (model.dual_coeffs * model.labels) + model.bias


def decision_value(model: BinarySvm, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return float(decision_function(model, x[None, :])[0])


def primal_decision(model: BinarySvm, X) -> np.ndarray:
    if model.primal_weights is None:
        raise ValueError("primal form only exists for linear models")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return X @ model.primal_weights + model.bias


def predict_binary(model: BinarySvm, x) -> int:
    # a tie at exactly zero resolves to the first class of the pair
    return int(decision_value(model, x) > 0)


def predict_bits(model: BinarySvm, X) -> np.ndarray:
    return (decision_function(model, X) > 0).astype(np.uint8)
