"""Behavioural model of the subthreshold analog RBF classifier.

A cascaded differential pair produces the bell-shaped current

    I(dv) = I_in / 4 * sech^2(dv / (2 n V_T))

which is calibrated against an ideal Gaussian ``A0 exp(-gamma0 (dv - mu)^2)``.
Classifier widths are realised by scaling the input differential by
``s_gamma = sqrt(gamma_target / gamma0)``; D such cells are chained per
support vector so the Gaussian factors multiply. Each support-vector current
is weighted by a logistic alpha multiplier, steered onto the + or - rail by
its label and the comparator outputs the sign of the rail difference.

Without SPICE the device curves are generated from the closed-form device
laws; the calibration pipeline consumes them exactly as it would consume
measured DC sweeps.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .svm import RBF, BinarySvm

log = logging.getLogger(__name__)

MAX_ANALOG_DIMS = 5
ALPHA_EPS = 1e-4


class AnalogCapacityError(ValueError):
    """Raised when a classifier needs more input dimensions than the analog cell chain supports."""


class FitError(ValueError):
    pass


@dataclass(frozen=True)
class DeviceParams:
    n: float = 1.5
    V_T: float = 0.02585
    I_in: float = 100e-9
    V_b: float = 0.30
    noise_sigma: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("subthreshold slope factor n must be >= 1")
        if not self.V_T > 0:
            raise ValueError("V_T must be positive")
        if not self.I_in > 0:
            raise ValueError("I_in must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def slope_voltage(self) -> float:
        """n * V_T, the natural voltage unit of the subthreshold laws."""
        return self.n * self.V_T

    @property
    def window(self) -> float:
        """Half-width 2 n V_T of the region where the Gaussian approximation holds."""
        return 2.0 * self.n * self.V_T

    @property
    def taylor_gamma(self) -> float:
        """Width matching the quadratic Taylor terms of sech^2 and the Gaussian."""
        return 1.0 / (4.0 * self.n ** 2 * self.V_T ** 2)

    def to_dict(self) -> dict:
        return {"n": self.n, "V_T": self.V_T, "I_in": self.I_in, "V_b": self.V_b,
                "noise_sigma": self.noise_sigma}


@dataclass(frozen=True)
class GaussianFit:
    A0: float
    gamma0: float
    mu: float
    nrmse: float
    corr: float

    def __call__(self, dv):
        return self.A0 * np.exp(-self.gamma0 * (np.asarray(dv, dtype=float) - self.mu) ** 2)

    def to_dict(self) -> dict:
        return {"A0": self.A0, "gamma0": self.gamma0, "mu": self.mu,
                "nrmse": self.nrmse, "corr": self.corr}

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianFit":
        return cls(**{k: float(d[k]) for k in ("A0", "gamma0", "mu", "nrmse", "corr")})


@dataclass(frozen=True)
class AlphaFit:
    x0: float
    s: float
    nrmse: float
    corr: float = 1.0

    def __call__(self, dv):
        return logistic(dv, self.x0, self.s)

    def to_dict(self) -> dict:
        return {"x0": self.x0, "s": self.s, "nrmse": self.nrmse, "corr": self.corr}

    @classmethod
    def from_dict(cls, d: dict) -> "AlphaFit":
        return cls(float(d["x0"]), float(d["s"]), float(d["nrmse"]), float(d.get("corr", 1.0)))


def logistic(dv, x0: float, s: float):
    """alpha(dv) = 1 / (1 + exp((dv - x0) / s)), computed without overflow."""
    z = (np.asarray(dv, dtype=float) - x0) / s
    return np.exp(-np.logaddexp(0.0, z))


def nrmse(ref, approx) -> float:
    ref = np.asarray(ref, dtype=float)
    approx = np.asarray(approx, dtype=float)
    span = ref.max() - ref.min()
    if span <= 0:
        raise FitError("reference curve is flat; nrmse undefined")
    return float(np.sqrt(np.mean((ref - approx) ** 2)) / span)


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b / den) if den > 0 else 0.0


def sweep_grid(params: DeviceParams, n_points: int = 201, half_width: Optional[float] = None) -> np.ndarray:
    """Symmetric DC sweep of the input differential, +/- 2 n V_T by default."""
    hw = params.window if half_width is None else half_width
    return np.linspace(-hw, hw, n_points)


def device_curve(params: DeviceParams, dv_grid, rng: Optional[np.random.Generator] = None):
    """Kernel cell transfer characteristic (dv, I) from the sech^2 law.

    With ``noise_sigma > 0`` each sample is scaled by ``1 + N(0, sigma)``;
    ``rng`` defaults to a generator seeded with 0 so curves are reproducible.
    """
    dv = np.asarray(dv_grid, dtype=float)
    if dv.size == 0:
        raise ValueError("empty sweep grid")
    current = params.I_in / 4.0 / np.cosh(dv / (2.0 * params.slope_voltage)) ** 2
    if params.noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        current = current * (1.0 + params.noise_sigma * rng.standard_normal(dv.shape))
    return dv, current


def alpha_curve(params: DeviceParams, dv_grid, rng: Optional[np.random.Generator] = None):
    """Alpha multiplier ratio I_out / I_in over a sweep of the control differential."""
    dv = np.asarray(dv_grid, dtype=float)
    ratio = logistic(dv, 0.0, params.slope_voltage)
    if params.noise_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(0)
        ratio = np.clip(ratio * (1.0 + params.noise_sigma * rng.standard_normal(dv.shape)), 1e-12, 1 - 1e-12)
    return dv, ratio


def _gauss_newton(residual_jac, p, steps):
    """A few damped Gauss-Newton iterations; halves the step until the residual drops."""
    r, J = residual_jac(p)
    cost = float(r @ r)
    for _ in range(steps):
        delta, *_ = np.linalg.lstsq(J, -r, rcond=None)
        t = 1.0
        while t > 1e-6:
            cand = p + t * delta
            r_new, J_new = residual_jac(cand)
            c_new = float(r_new @ r_new)
            if np.isfinite(c_new) and c_new <= cost:
                break
            t *= 0.5
        else:
            break
        converged = cost - c_new <= 1e-15 * max(cost, 1e-300)
        p, r, J, cost = cand, r_new, J_new, c_new
        if converged:
            break
    return p


def fit_gaussian(dv, current, refine_steps: int = 8) -> GaussianFit:
    """Fit ``A0 exp(-gamma0 (dv - mu)^2)`` to a measured bell curve.

    Starts from a current-weighted quadratic fit of ``ln I`` (the weights
    keep the noisy low-current tails from dominating) and refines the
    linear-domain least-squares residual with Gauss-Newton.
    """
    dv = np.asarray(dv, dtype=float)
    current = np.asarray(current, dtype=float)
    if dv.shape != current.shape or dv.size < 5:
        raise FitError("need at least 5 (dv, I) samples")
    if np.ptp(current) <= 0:
        raise FitError("degenerate curve: all currents equal")
    peak = current.max()
    keep = current > 1e-6 * peak
    if keep.sum() < 3:
        raise FitError("too few positive samples around the peak")
    v, i = dv[keep], current[keep]
    w = i / peak
    V = np.column_stack([np.ones_like(v), v, v * v]) * w[:, None]
    c0, c1, c2 = np.linalg.lstsq(V, np.log(i) * w, rcond=None)[0]
    if c2 >= 0:
        raise FitError("curve is not bell shaped (log-quadratic opens upward)")
    gamma0 = -c2
    mu = c1 / (2.0 * gamma0)
    A0 = math.exp(c0 + gamma0 * mu * mu)

    def res_jac(p):
        a, g, m = p
        e = np.exp(-g * (dv - m) ** 2)
        model = a * e
        J = np.column_stack([e, -model * (dv - m) ** 2, 2.0 * model * g * (dv - m)])
        return model - current, J

    A0, gamma0, mu = _gauss_newton(res_jac, np.array([A0, gamma0, mu]), refine_steps)
    if not (A0 > 0 and gamma0 > 0):
        raise FitError("Gaussian fit diverged")
    model = A0 * np.exp(-gamma0 * (dv - mu) ** 2)
    return GaussianFit(float(A0), float(gamma0), float(mu), nrmse(current, model), pearson(current, model))


def fit_alpha(dv, ratio, refine_steps: int = 8) -> AlphaFit:
    """Least-squares logistic fit of a monotone alpha-multiplier sweep."""
    dv = np.asarray(dv, dtype=float)
    ratio = np.asarray(ratio, dtype=float)
    if dv.shape != ratio.shape or dv.size < 3:
        raise FitError("need at least 3 (dv, alpha) samples")
    order = np.argsort(dv)
    dv, ratio = dv[order], ratio[order]
    if np.any((ratio <= 0) | (ratio >= 1)):
        raise FitError("alpha ratios must lie in (0, 1)")
    d = np.diff(ratio)
    if not (np.all(d <= 0) or np.all(d >= 0)):
        raise FitError("alpha curve is not monotone")
    # logit linearisation: ln(1/alpha - 1) = (dv - x0) / s
    z = np.log1p(-ratio) - np.log(ratio)
    wts = ratio * (1 - ratio)
    A = np.column_stack([np.ones_like(dv), dv]) * wts[:, None]
    c0, c1 = np.linalg.lstsq(A, z * wts, rcond=None)[0]
    if c1 == 0:
        raise FitError("flat alpha curve")
    s = 1.0 / c1
    x0 = -c0 * s

    def res_jac(p):
        x, sc = p
        a = logistic(dv, x, sc)
        g = a * (1 - a)
        J = np.column_stack([g / sc, g * (dv - x) / sc ** 2])
        return a - ratio, J

    x0, s = _gauss_newton(res_jac, np.array([x0, s]), refine_steps)
    if not s > 0:
        raise FitError("alpha curve increases with control voltage; expected a decreasing logistic")
    model = logistic(dv, x0, s)
    return AlphaFit(float(x0), float(s), nrmse(ratio, model), pearson(ratio, model))


def alpha_control(fit: AlphaFit, alpha: float) -> float:
    """Control differential realising ``alpha``: x0 + s ln(1/alpha - 1)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie strictly inside (0, 1), got {alpha}")
    return fit.x0 + fit.s * math.log(1.0 / alpha - 1.0)


@dataclass(frozen=True)
class VoltageMap:
    """Affine feature-to-voltage map: v = offset + span * x for x in [0, 1]."""

    span: float
    offset: float = 0.0

    def __call__(self, X):
        return self.offset + self.span * np.asarray(X, dtype=float)

    def to_dict(self) -> dict:
        return {"span": self.span, "offset": self.offset}


@dataclass(frozen=True)
class AnalogRbfClassifier:
    fit: GaussianFit
    alpha_fit: AlphaFit
    gamma_target: float
    s_gamma: float
    sv_voltages: np.ndarray
    alpha_controls: np.ndarray
    signs: np.ndarray
    bias_current: float
    I_in: float
    vmap: VoltageMap
    class_pair: tuple = (0, 1)
    device: Optional[DeviceParams] = None

    @property
    def n_dims(self) -> int:
        return self.sv_voltages.shape[1]

    @property
    def n_support(self) -> int:
        return len(self.signs)

    @property
    def peak_current(self) -> float:
        return self.I_in / 4.0 ** self.n_dims

    def alphas(self) -> np.ndarray:
        """Multiplier ratios realised by the stored control voltages."""
        return logistic(self.alpha_controls, self.alpha_fit.x0, self.alpha_fit.s)

    def to_dict(self) -> dict:
        return {
            "fit": self.fit.to_dict(),
            "alpha_fit": self.alpha_fit.to_dict(),
            "gamma_target": self.gamma_target,
            "s_gamma": self.s_gamma,
            "sv_voltages": self.sv_voltages.tolist(),
            "alpha_controls": self.alpha_controls.tolist(),
            "signs": self.signs.astype(int).tolist(),
            "bias_current": self.bias_current,
            "I_in": self.I_in,
            "vmap": self.vmap.to_dict(),
            "class_pair": list(self.class_pair),
            "device": None if self.device is None else self.device.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalogRbfClassifier":
        dev = d.get("device")
        return cls(
            fit=GaussianFit.from_dict(d["fit"]),
            alpha_fit=AlphaFit.from_dict(d["alpha_fit"]),
            gamma_target=float(d["gamma_target"]),
            s_gamma=float(d["s_gamma"]),
            sv_voltages=np.asarray(d["sv_voltages"], dtype=float),
            alpha_controls=np.asarray(d["alpha_controls"], dtype=float),
            signs=np.asarray(d["signs"], dtype=int),
            bias_current=float(d["bias_current"]),
            I_in=float(d["I_in"]),
            vmap=VoltageMap(**d["vmap"]),
            class_pair=tuple(d["class_pair"]),
            device=None if dev is None else DeviceParams(**dev),
        )


def _check_dims(clf: AnalogRbfClassifier, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != clf.n_dims:
        raise ValueError(f"arity mismatch: classifier has {clf.n_dims} inputs, got {x.shape[-1]}")
    return x


def stage_response(clf: AnalogRbfClassifier, i_in, dv):
    """One kernel cell: output is a quarter of its input current times the Gaussian factor."""
    u = clf.s_gamma * np.asarray(dv, dtype=float)
    return np.asarray(i_in) / 4.0 * np.exp(-clf.fit.gamma0 * u * u)


def kernel_response(clf: AnalogRbfClassifier, sv_index: int, x_voltages) -> float:
    """Closed-form output current of support vector ``sv_index``'s cell chain."""
    x = _check_dims(clf, x_voltages)
    u = clf.s_gamma * (x - clf.sv_voltages[sv_index])
    return float(clf.peak_current * math.exp(-clf.fit.gamma0 * float(u @ u)))


def kernel_response_chained(clf: AnalogRbfClassifier, sv_index: int, x_voltages) -> float:
    """Same current as :func:`kernel_response`, propagated stage by stage."""
    x = _check_dims(clf, x_voltages)
    current = clf.I_in
    for d in range(clf.n_dims):
        current = stage_response(clf, current, x[d] - clf.sv_voltages[sv_index, d])
    return float(current)


def _device_kernel_currents(clf: AnalogRbfClassifier, X: np.ndarray) -> np.ndarray:
    dev = clf.device
    if dev is None:
        raise ValueError("device-level evaluation needs DeviceParams on the classifier")
    U = clf.s_gamma * (X[:, None, :] - clf.sv_voltages[None, :, :])
    cell = 0.25 / np.cosh(U / (2.0 * dev.slope_voltage)) ** 2
    return clf.I_in * np.prod(cell, axis=2)


def kernel_currents(clf: AnalogRbfClassifier, X_voltages, level: str = "fitted") -> np.ndarray:
    """(n, m) matrix of cell-chain output currents for a batch of input voltages.

    ``level="fitted"`` uses the calibrated Gaussian; ``level="device"``
    pushes the scaled differentials through the sech^2 device law itself.
    """
    X = np.atleast_2d(_check_dims(clf, X_voltages))
    if level == "device":
        return _device_kernel_currents(clf, X)
    if level != "fitted":
        raise ValueError(f"unknown evaluation level {level!r}")
    U = clf.s_gamma * (X[:, None, :] - clf.sv_voltages[None, :, :])
    return clf.peak_current * np.exp(-clf.fit.gamma0 * np.sum(U * U, axis=2))


def rail_currents(clf: AnalogRbfClassifier, X_voltages, level: str = "fitted"):
    """Positive and negative rail sums for each input row."""
    Ik = kernel_currents(clf, X_voltages, level)
    if level == "device":
        a = logistic(clf.alpha_controls, 0.0, clf.device.slope_voltage)
    else:
        a = clf.alphas()
    weighted = Ik * a[None, :]
    pos = weighted[:, clf.signs > 0].sum(axis=1)
    neg = weighted[:, clf.signs < 0].sum(axis=1)
    return pos, neg


def score(clf: AnalogRbfClassifier, X_voltages, level: str = "fitted") -> np.ndarray:
    pos, neg = rail_currents(clf, X_voltages, level)
    return pos - neg + clf.bias_current


def classify_analog(clf: AnalogRbfClassifier, x_voltages, level: str = "fitted") -> int:
    """Comparator output for one input; a zero rail difference reads as 0."""
    x = _check_dims(clf, x_voltages)
    if x.ndim != 1:
        raise ValueError("expected a single input vector")
    return int(score(clf, x[None, :], level)[0] > 0)


def classify_batch(clf: AnalogRbfClassifier, X_voltages, level: str = "fitted") -> np.ndarray:
    return (score(clf, X_voltages, level) > 0).astype(np.uint8)


def default_voltage_map(params: DeviceParams) -> VoltageMap:
    """Map the unit feature range onto the +/- 2 n V_T validity window."""
    return VoltageMap(span=params.window, offset=0.0)


def build_analog(model: BinarySvm, fit: GaussianFit, alpha_fit: AlphaFit,
                 vmap: VoltageMap, I_in: float = DeviceParams().I_in,
                 device: Optional[DeviceParams] = None) -> AnalogRbfClassifier:
    """Map a trained RBF SVM onto the analog classifier.

    alpha / C lands in (0, 1]; it is clamped to (ALPHA_EPS, 1 - ALPHA_EPS)
    and the bias is expressed in the same current units,
    b * I_in / (C * 4^D), so the comparator sees the float decision value
    scaled by a positive constant.
    """
    if model.kernel.kind != RBF:
        raise ValueError("build_analog needs an RBF model")
    D = model.n_features
    if D > MAX_ANALOG_DIMS:
        raise AnalogCapacityError(f"analog capacity exceeded: {D} inputs > {MAX_ANALOG_DIMS}")
    if model.n_support == 0 or not np.any(model.dual_coeffs > 0):
        raise ValueError("degenerate model: no support vector has a positive alpha")
    gamma_target = model.kernel.gamma / vmap.span ** 2
    s_gamma = math.sqrt(gamma_target / fit.gamma0)
    a = np.clip(model.dual_coeffs / model.C, ALPHA_EPS, 1.0 - ALPHA_EPS)
    controls = np.array([alpha_control(alpha_fit, float(v)) for v in a])
    peak = I_in / 4.0 ** D
    clf = AnalogRbfClassifier(
        fit=fit,
        alpha_fit=alpha_fit,
        gamma_target=gamma_target,
        s_gamma=s_gamma,
        sv_voltages=vmap(model.support_vectors),
        alpha_controls=controls,
        signs=np.where(model.labels > 0, 1, -1),
        bias_current=model.bias * peak / model.C,
        I_in=I_in,
        vmap=vmap,
        class_pair=tuple(model.class_pair),
        device=device,
    )
    reach = s_gamma * vmap.span
    if device is not None and reach > device.window:
        log.info("classifier %s: scaled differentials reach %.3g V, beyond the +/-%.3g V window",
                 clf.class_pair, reach, device.window)
    return clf


def with_scaling(clf: AnalogRbfClassifier, s_gamma: float) -> AnalogRbfClassifier:
    return replace(clf, s_gamma=float(s_gamma))


@dataclass(frozen=True)
class Calibration:
    """Device parameters plus the kernel and alpha fits derived from their sweeps."""

    device: DeviceParams
    kernel_fit: GaussianFit
    alpha_fit: AlphaFit

    def to_dict(self) -> dict:
        return {"device": self.device.to_dict(), "kernel_fit": self.kernel_fit.to_dict(),
                "alpha_fit": self.alpha_fit.to_dict()}


def calibrate(params: DeviceParams = DeviceParams(), n_points: int = 201,
              rng: Optional[np.random.Generator] = None) -> Calibration:
    grid = sweep_grid(params, n_points)
    kf = fit_gaussian(*device_curve(params, grid, rng))
    # the alpha sweep spans +/- 6 n V_T so the curve covers roughly 0.0025 .. 0.9975;
    # it is taken noiseless because fit_alpha rejects non-monotone sweeps
    agrid = np.linspace(-6 * params.slope_voltage, 6 * params.slope_voltage, n_points)
    af = fit_alpha(*alpha_curve(replace(params, noise_sigma=0.0), agrid))
    return Calibration(params, kf, af)


def product_check(params: DeviceParams, fit: GaussianFit, dims: int = 3, n_points: int = 201,
                  rng: Optional[np.random.Generator] = None):
    """Chained D-stage device response against the ideal product along the sweep diagonal.

    Every stage sees the same differential, swept over the single-cell
    validity window. Returns (dv, device, ideal, nrmse, corr); ``ideal``
    is ``(A0 exp(-gamma0 (dv - mu)^2))^D`` from the single-cell fit.
    """
    dv = sweep_grid(params, n_points)
    current = np.full(dv.shape, params.I_in)
    for _ in range(dims):
        _, cell = device_curve(replace(params, I_in=1.0), dv, rng)
        current = current * cell
    ideal = params.I_in * (fit(dv) / params.I_in) ** dims
    return dv, current, ideal, nrmse(current, ideal), pearson(current, ideal)
