"""Additive area/power estimate for realised classifier systems.

This is an estimator, not synthesis: each block type carries an (area mm²,
power mW) coefficient per unit count, and a system's cost is the sum of its
block counts times those coefficients. Coefficients are fitted by
non-negative least squares to reference totals.

The cost model works on the descriptor produced by
``MixedSvmSystem.describe()``, a plain dict::

    {"num_classes": K, "input_bits": 4, "weight_bits": 8,
     "classifiers": [{"pair": [i, j], "kind": "linear", "domain": "digital",
                      "D": 4, "zero": 0, "pow2": 1, "general": 3}, ...]}

RBF entries carry ``"m"`` (support vectors) instead of the weight counts.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.optimize import nnls

COEFFS_ENV = "FLEXSVM_COEFFS"
DEFAULT_COEFFS_PATH = Path(__file__).parent / "data" / "cost_coefficients.json"

BLOCKS = (
    "digital_mac",
    "digital_adder_tree",
    "encoder",
    "adc",
    "analog_kernel_stage",
    "analog_alpha_mult",
    "analog_rails_comparator",
    "digital_rbf_distance",
    "digital_rbf_exp",
)
DIGITAL_BLOCKS = frozenset(
    {"digital_mac", "digital_adder_tree", "encoder", "adc", "digital_rbf_distance", "digital_rbf_exp"})
ANALOG_BLOCKS = frozenset({"analog_kernel_stage", "analog_alpha_mult", "analog_rails_comparator"})

# share of a full multiplier's cost paid by a weight quantised to zero or +/- 2^k
DEFAULT_DISCOUNTS = {"zero": 0.0, "pow2": 0.1}


class CostModelError(ValueError):
    pass


@dataclass(frozen=True)
class CostCoefficients:
    area: dict
    power: dict
    discounts: dict = field(default_factory=lambda: dict(DEFAULT_DISCOUNTS))
    note: str = ""

    def __post_init__(self):
        for table in (self.area, self.power):
            for k, v in table.items():
                if k not in BLOCKS:
                    raise CostModelError(f"unknown block {k!r}")
                if not v >= 0:
                    raise CostModelError(f"coefficient {k} must be >= 0, got {v}")
        for k in ("zero", "pow2"):
            if not 0 <= self.discounts.get(k, 0.0) <= 1:
                raise CostModelError(f"discount {k} must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"area_mm2": dict(self.area), "power_mw": dict(self.power),
                "discounts": dict(self.discounts), "note": self.note}

    @classmethod
    def from_dict(cls, d: dict) -> "CostCoefficients":
        return cls(area={k: float(v) for k, v in d["area_mm2"].items()},
                   power={k: float(v) for k, v in d["power_mw"].items()},
                   discounts={k: float(v) for k, v in d.get("discounts", DEFAULT_DISCOUNTS).items()},
                   note=d.get("note", ""))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def load_coefficients(path: Union[str, Path, None] = None) -> CostCoefficients:
    """Explicit path, else ``$FLEXSVM_COEFFS``, else the shipped defaults."""
    if path is None:
        path = os.environ.get(COEFFS_ENV) or DEFAULT_COEFFS_PATH
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"cost coefficients not found: {path}")
    return CostCoefficients.from_dict(json.loads(path.read_text(encoding="utf-8")))


def accumulator_bits(input_bits: int, weight_bits: int, D: int) -> int:
    return input_bits + weight_bits + math.ceil(math.log2(max(D, 1))) + 1


def _is_digital(c: dict) -> bool:
    return c["domain"] == "digital"


def classifier_counts(c: dict, input_bits: int, weight_bits: int, discounts: dict) -> dict:
    """Block counts owned by one classifier (shared ADC and encoder excluded)."""
    D = int(c["D"])
    if c["kind"] == "linear":
        mult = input_bits * weight_bits
        eff = (c.get("general", D) + discounts.get("pow2", 0.0) * c.get("pow2", 0)
               + discounts.get("zero", 0.0) * c.get("zero", 0))
        # D products plus the bias feed the adder tree
        return {"digital_mac": eff * mult,
                "digital_adder_tree": D * accumulator_bits(input_bits, weight_bits, D)}
    m = int(c["m"])
    if c["domain"] == "analog":
        return {"analog_kernel_stage": m * D, "analog_alpha_mult": m, "analog_rails_comparator": 1}
    return {"digital_rbf_distance": m * D * input_bits, "digital_rbf_exp": m}


def shared_counts(desc: dict) -> dict:
    """Encoder truth-table entries and ADC bit-channels, built once per system."""
    cl = desc["classifiers"]
    out = {}
    if cl:
        out["encoder"] = 2 ** len(cl)
    digital = [c for c in cl if _is_digital(c)]
    if digital:
        out["adc"] = max(int(c["D"]) for c in cl) * desc["input_bits"]
    return out


def system_counts(desc: dict, discounts: dict = DEFAULT_DISCOUNTS) -> dict:
    total = {b: 0.0 for b in BLOCKS}
    for c in desc["classifiers"]:
        for k, v in classifier_counts(c, desc["input_bits"], desc["weight_bits"], discounts).items():
            total[k] += v
    for k, v in shared_counts(desc).items():
        total[k] += v
    return total


def _cost(counts: dict, table: dict) -> float:
    missing = [k for k, v in counts.items() if v and k not in table]
    if missing:
        raise CostModelError(f"missing coefficient for {missing[0]}")
    return sum(v * table[k] for k, v in counts.items() if v)


def _split(counts: dict, table: dict):
    dig = _cost({k: v for k, v in counts.items() if k in DIGITAL_BLOCKS}, table)
    ana = _cost({k: v for k, v in counts.items() if k in ANALOG_BLOCKS}, table)
    return dig, ana


@dataclass(frozen=True)
class CostReport:
    total_area: float
    total_power: float
    digital_area_share: float
    analog_area_share: float
    digital_power_share: float
    analog_power_share: float
    breakdown: tuple

    @property
    def digital_share(self) -> float:
        return self.digital_area_share

    @property
    def analog_share(self) -> float:
        return self.analog_area_share

    def to_dict(self) -> dict:
        return {
            "total_area_mm2": self.total_area,
            "total_power_mw": self.total_power,
            "area_share": {"digital": self.digital_area_share, "analog": self.analog_area_share},
            "power_share": {"digital": self.digital_power_share, "analog": self.analog_power_share},
            "breakdown": list(self.breakdown),
        }


def _share(part: float, total: float) -> float:
    return part / total if total > 0 else 0.0


def estimate(desc: dict, coeffs: CostCoefficients) -> CostReport:
    """Cost of a system descriptor.

    Each classifier's breakdown entry includes an equal share of the ADC
    when it runs on quantised inputs; the encoder is its own entry. Totals
    are the sum of the breakdown entries.
    """
    ib, wb = desc["input_bits"], desc["weight_bits"]
    cl = desc["classifiers"]
    shared = shared_counts(desc)
    n_dig = sum(_is_digital(c) for c in cl)
    items = []
    for c in cl:
        counts = classifier_counts(c, ib, wb, coeffs.discounts)
        if _is_digital(c) and "adc" in shared:
            counts["adc"] = shared["adc"] / n_dig
        da, aa = _split(counts, coeffs.area)
        dp, ap = _split(counts, coeffs.power)
        items.append({"item": "classifier", "pair": list(c["pair"]), "kind": c["kind"], "domain": c["domain"],
                      "area_mm2": da + aa, "power_mw": dp + ap,
                      "digital_area_mm2": da, "analog_area_mm2": aa,
                      "digital_power_mw": dp, "analog_power_mw": ap})
    if "encoder" in shared:
        enc = {"encoder": shared["encoder"]}
        a, p = _cost(enc, coeffs.area), _cost(enc, coeffs.power)
        items.append({"item": "encoder", "area_mm2": a, "power_mw": p,
                      "digital_area_mm2": a, "analog_area_mm2": 0.0,
                      "digital_power_mw": p, "analog_power_mw": 0.0})

    def tot(key):
        return sum(it[key] for it in items)

    area, power = tot("area_mm2"), tot("power_mw")
    return CostReport(
        total_area=area,
        total_power=power,
        digital_area_share=_share(tot("digital_area_mm2"), area),
        analog_area_share=_share(tot("analog_area_mm2"), area),
        digital_power_share=_share(tot("digital_power_mw"), power),
        analog_power_share=_share(tot("analog_power_mw"), power),
        breakdown=tuple(items),
    )


@dataclass(frozen=True)
class ReferencePoint:
    label: str
    descriptor: dict
    area: float
    power: float

    def key(self) -> str:
        return json.dumps([self.descriptor, self.area, self.power], sort_keys=True)

    def to_dict(self) -> dict:
        return {"label": self.label, "descriptor": self.descriptor,
                "area_mm2": self.area, "power_mw": self.power}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferencePoint":
        return cls(d.get("label", ""), d["descriptor"], float(d["area_mm2"]), float(d["power_mw"]))


@dataclass(frozen=True)
class CalibrationResult:
    coefficients: CostCoefficients
    residuals: tuple

    @property
    def max_relative_error(self) -> float:
        return max((max(abs(r["area_rel_err"]), abs(r["power_rel_err"])) for r in self.residuals),
                   default=0.0)

    def to_dict(self) -> dict:
        return {"coefficients": self.coefficients.to_dict(), "residuals": list(self.residuals)}


def _fit(A: np.ndarray, t: np.ndarray, free: list) -> np.ndarray:
    coef = np.zeros(A.shape[1])
    cols = [k for k in free if np.any(A[:, k] != 0)]
    if not cols:
        if np.any(t > 0):
            raise CostModelError("no free coefficient touches the reference points")
        return coef
    # relative residuals: every reference counts equally whatever its magnitude
    w = 1.0 / np.where(t > 0, t, 1.0)
    sol, _ = nnls(A[:, cols] * w[:, None], t * w)
    coef[cols] = sol
    return coef


def calibrate(references: Sequence[ReferencePoint], blocks: Optional[Sequence[str]] = None,
              discounts: dict = DEFAULT_DISCOUNTS, note: str = "") -> CalibrationResult:
    """Non-negative least-squares fit of area and power coefficients.

    Residuals are weighted by the reciprocal target so the fit minimises
    relative error. Identical references are collapsed first. Blocks left
    out of ``blocks`` stay at zero.
    """
    uniq = {}
    for r in references:
        if r.area < 0 or r.power < 0:
            raise CostModelError(f"reference {r.label!r}: negative target")
        uniq.setdefault(r.key(), r)
    refs = list(uniq.values())
    if not refs:
        raise CostModelError("need at least one reference point")
    blocks = list(BLOCKS) if blocks is None else list(blocks)
    unknown = [b for b in blocks if b not in BLOCKS]
    if unknown:
        raise CostModelError(f"unknown block {unknown[0]!r}")
    A = np.array([[system_counts(r.descriptor, discounts)[b] for b in BLOCKS] for r in refs])
    free = [BLOCKS.index(b) for b in blocks]
    ca = _fit(A, np.array([r.area for r in refs]), free)
    cp = _fit(A, np.array([r.power for r in refs]), free)
    coeffs = CostCoefficients(area=dict(zip(BLOCKS, ca.tolist())), power=dict(zip(BLOCKS, cp.tolist())),
                              discounts=dict(discounts), note=note)
    residuals = []
    for r in refs:
        rep = estimate(r.descriptor, coeffs)
        residuals.append({
            "label": r.label,
            "area_mm2": rep.total_area, "area_target": r.area,
            "area_rel_err": _rel(rep.total_area, r.area),
            "power_mw": rep.total_power, "power_target": r.power,
            "power_rel_err": _rel(rep.total_power, r.power),
        })
    return CalibrationResult(coeffs, tuple(residuals))


def _rel(value: float, target: float) -> float:
    if target == 0:
        return 0.0 if value == 0 else math.inf
    return value / target - 1.0


def digital_rbf_equivalent(c: dict) -> dict:
    """The same RBF classifier re-targeted to the digital RBF blocks."""
    return {**c, "domain": "digital"}


def rbf_efficiency(desc: dict, coeffs: CostCoefficients):
    """Mean digital-RBF / analog-RBF (area, power) ratio over the descriptor's analog classifiers.

    The digital side carries its own ADC share, as it would in a digital
    RBF system. Returns ``None`` when there is no analog classifier.
    """
    ib, wb = desc["input_bits"], desc["weight_bits"]
    ra, rp = [], []
    for c in desc["classifiers"]:
        if c["kind"] != "rbf" or c["domain"] != "analog":
            continue
        ana = classifier_counts(c, ib, wb, coeffs.discounts)
        dig = classifier_counts(digital_rbf_equivalent(c), ib, wb, coeffs.discounts)
        dig["adc"] = int(c["D"]) * ib
        ra.append(_cost(dig, coeffs.area) / _cost(ana, coeffs.area))
        rp.append(_cost(dig, coeffs.power) / _cost(ana, coeffs.power))
    if not ra:
        return None
    return float(np.mean(ra)), float(np.mean(rp))


TABLE_COLUMNS = ("dataset", "kernel", "accuracy_pct", "area_mm2", "power_mw", "rbf_linear_ratio")


def table_rows_csv(rows: Sequence[dict]) -> str:
    """CSV in the column layout of the comparison table."""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=TABLE_COLUMNS, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()
