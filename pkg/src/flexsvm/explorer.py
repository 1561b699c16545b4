"""Per-pair kernel selection, mixed-system assembly and evaluation.

For every one-vs-one pair a linear and an RBF SVM are trained on the pair's
rows. RBF wins only if its selection accuracy is strictly higher. The
winner is retrained on the whole pair subset and realised in its hardware
domain: linear pairs become fixed-point digital classifiers, RBF pairs
become analog classifiers. An encoder table turns the pair bits into a
class.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import analog, digital
from .dataset import DatasetError, PreparedDataset, stratified_split, subset_pair
from .svm import LINEAR, RBF, KernelSpec, TrainConfig, decision_function, scale_gamma, train_binary

log = logging.getLogger(__name__)

MIXED = "mixed"
KERNEL_MODES = (LINEAR, RBF, MIXED)
SELECTION_RULES = ("validation", "train")
VALIDATION_FRACTION = 0.2

ANALOG = "analog"
DIGITAL = "digital"


@dataclass(frozen=True)
class KernelAssignment:
    pairs: tuple
    kinds: tuple
    per_pair_accuracy: tuple

    def __post_init__(self):
        if not (len(self.pairs) == len(self.kinds) == len(self.per_pair_accuracy)):
            raise ValueError("pairs, kinds and accuracies must align")
        if len(set(self.pairs)) != len(self.pairs):
            raise ValueError("every pair must appear exactly once")
        if any(i >= j for i, j in self.pairs):
            raise ValueError("pairs must be ordered i < j")
        if any(k not in (LINEAR, RBF) for k in self.kinds):
            raise ValueError("kinds must be linear or rbf")

    @property
    def num_rbf(self) -> int:
        return sum(k == RBF for k in self.kinds)

    @property
    def num_linear(self) -> int:
        return sum(k == LINEAR for k in self.kinds)

    @property
    def ratio(self) -> str:
        """RBF/linear classifier count, as in ``"1/2"``."""
        return f"{self.num_rbf}/{self.num_linear}"

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "kinds": list(self.kinds),
            "per_pair_accuracy": [{"linear": a, "rbf": b} for a, b in self.per_pair_accuracy],
            "ratio": self.ratio,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KernelAssignment":
        return cls(
            pairs=tuple(tuple(p) for p in d["pairs"]),
            kinds=tuple(d["kinds"]),
            per_pair_accuracy=tuple((a["linear"], a["rbf"]) for a in d["per_pair_accuracy"]),
        )


@dataclass(frozen=True)
class MixedSvmSystem:
    """Realised multiclass system.

    ``classifiers`` holds one realised model per pair in pair order: a
    :class:`~flexsvm.digital.QuantizedLinearClassifier`, an
    :class:`~flexsvm.analog.AnalogRbfClassifier`, or, for the digital RBF
    baseline, the float RBF model itself (that baseline is a cost entry, not
    a simulated datapath).
    """

    assignment: KernelAssignment
    classifiers: tuple
    domains: tuple
    float_models: tuple
    encoder: digital.EncoderTable
    dataset_ref: dict
    mode: str = MIXED
    fixed_point: digital.FixedPointFormat = digital.FixedPointFormat()
    calibration: Optional[analog.Calibration] = None
    warnings: tuple = ()
    metrics: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.assignment.pairs)
        if not (len(self.classifiers) == len(self.domains) == len(self.float_models) == n):
            raise ValueError("every pair needs exactly one realised classifier")
        for kind, dom, clf in zip(self.assignment.kinds, self.domains, self.classifiers):
            if kind == LINEAR and not isinstance(clf, digital.QuantizedLinearClassifier):
                raise ValueError("linear pairs must be realised as fixed-point classifiers")
            if kind == RBF and dom == ANALOG and not isinstance(clf, analog.AnalogRbfClassifier):
                raise ValueError("analog RBF pairs must be realised as analog classifiers")

    @property
    def num_classes(self) -> int:
        return self.encoder.num_classes

    @property
    def linear_classifiers(self) -> dict:
        return {p: c for p, k, c in zip(self.assignment.pairs, self.assignment.kinds, self.classifiers)
                if k == LINEAR}

    @property
    def rbf_classifiers(self) -> dict:
        return {p: c for p, k, c in zip(self.assignment.pairs, self.assignment.kinds, self.classifiers)
                if k == RBF}

    def describe(self) -> dict:
        """Block-level descriptor consumed by the cost model."""
        items = []
        for (i, j), kind, dom, clf, fm in zip(self.assignment.pairs, self.assignment.kinds,
                                               self.domains, self.classifiers, self.float_models):
            entry = {"pair": [i, j], "kind": kind, "domain": dom, "D": fm.n_features}
            if kind == LINEAR:
                entry.update(digital.weight_classes(clf))
            else:
                entry["m"] = fm.n_support
            items.append(entry)
        return {
            "num_classes": self.num_classes,
            "input_bits": self.fixed_point.input_bits,
            "weight_bits": self.fixed_point.weight_bits,
            "classifiers": items,
        }

    def to_dict(self) -> dict:
        out = []
        for dom, clf in zip(self.domains, self.classifiers):
            out.append({"domain": dom, "model": clf.to_dict()})
        return {
            "mode": self.mode,
            "assignment": self.assignment.to_dict(),
            "classifiers": out,
            "float_models": [m.to_dict() for m in self.float_models],
            "num_classes": self.num_classes,
            "dataset": self.dataset_ref,
            "fixed_point": self.fixed_point.to_dict(),
            "calibration": None if self.calibration is None else self.calibration.to_dict(),
            "warnings": list(self.warnings),
            "metrics": self.metrics,
        }


def _accuracy(pred, truth) -> float:
    pred, truth = np.asarray(pred), np.asarray(truth)
    return float(np.mean(pred == truth)) if len(truth) else 0.0


def _pair_spec(kind: str, X: np.ndarray, cfg: TrainConfig) -> KernelSpec:
    if kind == RBF:
        return KernelSpec(RBF, cfg.gamma if cfg.gamma is not None else scale_gamma(X))
    return KernelSpec(LINEAR)


def _selection_split(y: np.ndarray, rng: np.random.Generator):
    # tiny pair subsets cannot hold out a fold; select on the training rows instead
    counts = [int(np.sum(y == c)) for c in (-1.0, 1.0)]
    if min(counts) < 2:
        idx = np.arange(len(y))
        return idx, idx
    return stratified_split(y, 1.0 - VALIDATION_FRACTION, rng)


def _train_pair(Xp, yp, pair, k, cfg, selection_rule, mode, warnings):
    """Returns (kind, (acc_lin, acc_rbf), final float model)."""
    specs = {kind: _pair_spec(kind, Xp, cfg) for kind in (LINEAR, RBF)}
    rng = np.random.default_rng([cfg.seed, k])
    if selection_rule == "validation":
        tr, va = _selection_split(yp, rng)
    else:
        tr = va = np.arange(len(yp))
    pair_cfg = replace(cfg, seed=cfg.seed * 1000 + k)

    acc = {}
    for kind in (LINEAR, RBF):
        if mode != MIXED and kind != mode:
            acc[kind] = None
            continue
        try:
            m = train_binary(Xp[tr], yp[tr], specs[kind], pair_cfg, pair)
            acc[kind] = _accuracy(np.where(decision_function(m, Xp[va]) > 0, 1.0, -1.0), yp[va])
        except ValueError as exc:
            warnings.append(f"pair {pair}: {kind} training failed during selection ({exc})")
            acc[kind] = None

    if mode == MIXED:
        a_lin, a_rbf = acc[LINEAR], acc[RBF]
        chosen = RBF if (a_rbf is not None and (a_lin is None or a_rbf > a_lin)) else LINEAR
    else:
        chosen = mode

    try:
        model = train_binary(Xp, yp, specs[chosen], pair_cfg, pair)
    except ValueError as exc:
        if chosen != RBF:
            raise
        warnings.append(f"pair {pair}: rbf training failed ({exc}); falling back to linear")
        log.warning(warnings[-1])
        chosen = LINEAR
        model = train_binary(Xp, yp, specs[LINEAR], pair_cfg, pair)
    if not model.converged:
        warnings.append(f"pair {pair}: {chosen} solver stopped before reaching the KKT tolerance")
    return chosen, (acc[LINEAR], acc[RBF]), model


def dataset_ref(data: PreparedDataset) -> dict:
    return {
        "name": data.name,
        "seed": data.seed,
        "num_classes": data.num_classes,
        "class_names": list(data.class_names),
        "selected_columns": data.selected_columns,
        "feature_mask": [bool(v) for v in data.feature_mask],
        "n_train": int(len(data.y_train)),
        "n_test": int(len(data.y_test)),
    }


def explore(data: PreparedDataset, cfg: TrainConfig = TrainConfig(), selection_rule: str = "validation",
            mode: str = MIXED, fixed_point: digital.FixedPointFormat = digital.FixedPointFormat(),
            calibration: Optional[analog.Calibration] = None) -> MixedSvmSystem:
    """Select a kernel per pair, realise the winners and measure the system on the test rows.

    ``mode`` forces a single-kernel baseline when set to ``"linear"`` or
    ``"rbf"``. The RBF baseline stands for a digital RBF implementation, so
    its pairs keep their float models; in ``"mixed"`` mode RBF pairs are
    realised as analog classifiers.
    """
    if mode not in KERNEL_MODES:
        raise ValueError(f"mode must be one of {KERNEL_MODES}")
    if selection_rule not in SELECTION_RULES:
        raise ValueError(f"selection_rule must be one of {SELECTION_RULES}")
    K = data.num_classes
    if K < 2:
        raise DatasetError("need at least 2 classes")
    if mode == MIXED and data.n_features > analog.MAX_ANALOG_DIMS:
        raise analog.AnalogCapacityError(
            f"analog capacity exceeded: {data.n_features} inputs > {analog.MAX_ANALOG_DIMS}")
    if calibration is None:
        calibration = analog.calibrate()
    vmap = analog.default_voltage_map(calibration.device)

    pairs = digital.ovo_pairs(K)
    kinds, accs, realised, domains, floats, warnings = [], [], [], [], [], []
    for k, (i, j) in enumerate(pairs):
        Xp, yp, _ = subset_pair(data.X_train, data.y_train, i, j)
        if len(np.unique(yp)) < 2:
            raise DatasetError(f"pair {(i, j)} lacks training rows for one of its classes")
        kind, acc, model = _train_pair(Xp, yp, (i, j), k, cfg, selection_rule, mode, warnings)
        if kind == LINEAR:
            clf, dom = digital.quantize_linear(model, fixed_point), DIGITAL
        elif mode == MIXED:
            clf, dom = analog.build_analog(model, calibration.kernel_fit, calibration.alpha_fit, vmap,
                                           calibration.device.I_in, calibration.device), ANALOG
        else:
            clf, dom = model, DIGITAL
        kinds.append(kind)
        accs.append(acc)
        realised.append(clf)
        domains.append(dom)
        floats.append(model)

    system = MixedSvmSystem(
        assignment=KernelAssignment(tuple(pairs), tuple(kinds), tuple(accs)),
        classifiers=tuple(realised),
        domains=tuple(domains),
        float_models=tuple(floats),
        encoder=digital.build_encoder(K),
        dataset_ref=dataset_ref(data),
        mode=mode,
        fixed_point=fixed_point,
        calibration=calibration,
        warnings=tuple(warnings),
    )
    return replace(system, metrics=evaluate_system(system, data))


def _realised_bits(system: MixedSvmSystem, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    QX = None
    cols = []
    for dom, clf in zip(system.domains, system.classifiers):
        if isinstance(clf, digital.QuantizedLinearClassifier):
            if QX is None:
                QX = digital.quantize_inputs(X, system.fixed_point)
            cols.append(digital.predict_fixed_batch(clf, QX))
        elif isinstance(clf, analog.AnalogRbfClassifier):
            cols.append(analog.classify_batch(clf, clf.vmap(X)))
        else:
            cols.append((decision_function(clf, X) > 0).astype(np.uint8))
    return np.stack(cols, axis=1)


def _float_bits(system: MixedSvmSystem, X: np.ndarray) -> np.ndarray:
    return np.stack([(decision_function(m, X) > 0).astype(np.uint8) for m in system.float_models], axis=1)


def predict_bits(system: MixedSvmSystem, X) -> np.ndarray:
    """(n, P) realised classifier bits in pair order."""
    return _realised_bits(system, X)


def predict_batch(system: MixedSvmSystem, X) -> np.ndarray:
    return system.encoder.lookup_batch(_realised_bits(system, X))


def predict_multiclass(system: MixedSvmSystem, x) -> int:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return int(predict_batch(system, x[None, :])[0])


def evaluate_system(system: MixedSvmSystem, data: PreparedDataset) -> dict:
    """Test-set metrics of the realised system next to its float counterpart."""
    ref_mask = system.dataset_ref.get("feature_mask")
    if ref_mask is not None and list(ref_mask) != [bool(v) for v in data.feature_mask]:
        raise DatasetError("feature mask of the data does not match the one the system was built on")
    X, y = data.X_test, data.y_test
    K = system.num_classes
    rb = _realised_bits(system, X)
    fb = _float_bits(system, X)
    pred = system.encoder.lookup_batch(rb)
    fpred = system.encoder.lookup_batch(fb)
    confusion = np.zeros((K, K), dtype=int)
    np.add.at(confusion, (y, pred), 1)

    per_pair = []
    for k, ((i, j), kind, dom) in enumerate(zip(system.assignment.pairs, system.assignment.kinds,
                                                system.domains)):
        sel = (y == i) | (y == j)
        truth = (y[sel] == j).astype(np.uint8)
        entry = {
            "pair": [i, j],
            "kind": kind,
            "domain": dom,
            "float_accuracy": _accuracy(fb[sel, k], truth),
            "realised_accuracy": _accuracy(rb[sel, k], truth),
            # a pair's classifier only decides its own two classes, so agreement is taken on those rows;
            # rows of other classes can sit on its boundary by construction
            "agreement": _accuracy(rb[sel, k], fb[sel, k]),
            "agreement_all_rows": _accuracy(rb[:, k], fb[:, k]),
        }
        clf = system.classifiers[k]
        if isinstance(clf, digital.QuantizedLinearClassifier):
            fv = decision_function(system.float_models[k], X)
            bounds = np.array([clf.error_bound(x) for x in X])
            off = rb[:, k] != fb[:, k]
            entry["unexplained_disagreements"] = int(np.sum(off & (np.abs(fv) >= bounds)))
        per_pair.append(entry)

    return {
        "accuracy": _accuracy(pred, y),
        "float_accuracy": _accuracy(fpred, y),
        "n_test": int(len(y)),
        "ratio": system.assignment.ratio,
        "per_pair": per_pair,
        "confusion": confusion.tolist(),
    }
