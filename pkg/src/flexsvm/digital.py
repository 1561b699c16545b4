"""Fixed-point linear classifiers and the OvO encoder.

Everything on the inference path is integer arithmetic: inputs come out of
an ``input_bits`` ADC, weights are symmetric ``weight_bits`` integers, the
bias sits at the product's binary point and the output bit is the sign of
the accumulator.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .svm import LINEAR, BinarySvm

MAX_ENCODER_CLASSES = 8


def round_half_up(v):
    return np.floor(np.asarray(v, dtype=float) + 0.5).astype(np.int64)


def round_half_away(v):
    """Round-half-up on magnitudes, so the symmetric quantiser stays symmetric."""
    v = np.asarray(v, dtype=float)
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class FixedPointFormat:
    input_bits: int = 4
    weight_bits: int = 8

    def __post_init__(self):
        if self.input_bits < 1 or self.weight_bits < 2:
            raise ValueError("need input_bits >= 1 and weight_bits >= 2")

    @property
    def input_max(self) -> int:
        return 2 ** self.input_bits - 1

    @property
    def weight_max(self) -> int:
        return 2 ** (self.weight_bits - 1) - 1

    def max_product_sum(self, D: int) -> int:
        return D * self.input_max * self.weight_max

    def accumulator_bits(self, D: int) -> int:
        """Signed width holding any sum of D products plus a saturated bias."""
        return self.input_bits + self.weight_bits + math.ceil(math.log2(max(D, 1))) + 1

    def to_dict(self) -> dict:
        return {"input_bits": self.input_bits, "weight_bits": self.weight_bits}


@dataclass(frozen=True)
class QuantizedLinearClassifier:
    weights: tuple
    bias: int
    format: FixedPointFormat
    weight_scale: float
    class_pair: tuple
    float_weights: tuple
    float_bias: float
    raw_bias: int

    @property
    def n_features(self) -> int:
        return len(self.weights)

    @property
    def accumulator_bits(self) -> int:
        return self.format.accumulator_bits(self.n_features)

    @property
    def value_scale(self) -> float:
        """Real value of one accumulator LSB."""
        return self.weight_scale / self.format.input_max

    def dequantized_weights(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float) * self.weight_scale

    def error_bound(self, x) -> float:
        """Worst-case |float decision - dequantised fixed-point decision| at input ``x``.

        Sums the weight rounding error times |x|, the input rounding error
        times |w_q| and the bias rounding error. The bias saturation never
        changes the sign, so the unsaturated bias is the right reference.
        """
        x = np.asarray(x, dtype=float)
        w = np.asarray(self.float_weights)
        wq = self.dequantized_weights()
        xq = quantize_inputs(x, self.format) / self.format.input_max
        bq = self.raw_bias * self.value_scale
        return float(np.abs(w - wq) @ np.abs(x) + np.abs(wq) @ np.abs(x - xq) + abs(self.float_bias - bq))

    def to_dict(self) -> dict:
        return {
            "weights": list(self.weights),
            "bias": self.bias,
            "raw_bias": self.raw_bias,
            "format": self.format.to_dict(),
            "accumulator_bits": self.accumulator_bits,
            "weight_scale": self.weight_scale,
            "class_pair": list(self.class_pair),
            "float_weights": list(self.float_weights),
            "float_bias": self.float_bias,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuantizedLinearClassifier":
        return cls(
            weights=tuple(int(v) for v in d["weights"]),
            bias=int(d["bias"]),
            format=FixedPointFormat(**d["format"]),
            weight_scale=float(d["weight_scale"]),
            class_pair=tuple(d["class_pair"]),
            float_weights=tuple(float(v) for v in d["float_weights"]),
            float_bias=float(d["float_bias"]),
            raw_bias=int(d["raw_bias"]),
        )


def quantize_inputs(x, fmt: FixedPointFormat = FixedPointFormat()) -> np.ndarray:
    """ADC model: round(x * (2^bits - 1)) with halves rounded up, clipped to range."""
    q = round_half_up(np.asarray(x, dtype=float) * fmt.input_max)
    return np.clip(q, 0, fmt.input_max)


def quantize_linear(model: BinarySvm, fmt: FixedPointFormat = FixedPointFormat()) -> QuantizedLinearClassifier:
    if model.kernel.kind != LINEAR or model.primal_weights is None:
        raise ValueError("quantize_linear needs a linear model with primal weights")
    w = np.asarray(model.primal_weights, dtype=float)
    wmax = float(np.max(np.abs(w))) if w.size else 0.0
    D = len(w)
    if wmax == 0.0:
        # bias-only classifier: any positive scale keeps the integer sign of b
        scale = 1.0
        qw = np.zeros(D, dtype=np.int64)
    else:
        scale = wmax / fmt.weight_max
        qw = np.clip(round_half_away(w / scale), -fmt.weight_max, fmt.weight_max)
    raw_bias = int(round_half_away(model.bias * fmt.input_max / scale))
    # a bias beyond the largest reachable product sum fixes the sign on its own
    limit = fmt.max_product_sum(D) + 1
    bias = int(np.clip(raw_bias, -limit, limit))
    return QuantizedLinearClassifier(
        weights=tuple(int(v) for v in qw),
        bias=bias,
        format=fmt,
        weight_scale=scale,
        class_pair=tuple(model.class_pair),
        float_weights=tuple(float(v) for v in w),
        float_bias=float(model.bias),
        raw_bias=raw_bias,
    )


def adder_tree(values: Sequence[int]) -> int:
    """Pairwise left-to-right reduction, one tree level at a time."""
    level = [int(v) for v in values]
    if not level:
        return 0
    while len(level) > 1:
        nxt = [level[k] + level[k + 1] for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]


def accumulate(clf: QuantizedLinearClassifier, qx: Sequence[int]) -> int:
    if len(qx) != clf.n_features:
        raise ValueError(f"arity mismatch: classifier has {clf.n_features} inputs, got {len(qx)}")
    acc = adder_tree([int(w) * int(x) for w, x in zip(clf.weights, qx)]) + clf.bias
    lim = 2 ** (clf.accumulator_bits - 1)
    assert -lim <= acc < lim, "accumulator overflow"
    return acc


def predict_fixed(clf: QuantizedLinearClassifier, qx: Sequence[int]) -> int:
    return int(accumulate(clf, qx) > 0)


def accumulate_batch(clf: QuantizedLinearClassifier, QX) -> np.ndarray:
    QX = np.atleast_2d(np.asarray(QX, dtype=np.int64))
    if QX.shape[1] != clf.n_features:
        raise ValueError(f"arity mismatch: classifier has {clf.n_features} inputs, got {QX.shape[1]}")
    return QX @ np.asarray(clf.weights, dtype=np.int64) + clf.bias


def predict_fixed_batch(clf: QuantizedLinearClassifier, QX) -> np.ndarray:
    return (accumulate_batch(clf, QX) > 0).astype(np.uint8)


def weight_classes(clf: QuantizedLinearClassifier) -> dict:
    """Count zero, power-of-two and general weights; the first two need no multiplier."""
    zero = pow2 = general = 0
    for w in clf.weights:
        a = abs(int(w))
        if a == 0:
            zero += 1
        elif a & (a - 1) == 0:
            pow2 += 1
        else:
            general += 1
    return {"zero": zero, "pow2": pow2, "general": general}


def ovo_pairs(K: int) -> list:
    return [(i, j) for i in range(K) for j in range(i + 1, K)]


@dataclass(frozen=True)
class EncoderTable:
    """Truth table from the P classifier bits to a class id.

    Pattern integers put the first pair's bit in the most significant
    position, so ``format(pattern, f"0{P}b")`` reads left to right in pair
    order.
    """

    num_classes: int
    table: np.ndarray

    @property
    def num_pairs(self) -> int:
        return self.num_classes * (self.num_classes - 1) // 2

    @property
    def pairs(self) -> list:
        return ovo_pairs(self.num_classes)

    def pattern_index(self, bits: Sequence[int]) -> int:
        if len(bits) != self.num_pairs:
            raise ValueError(f"expected {self.num_pairs} bits, got {len(bits)}")
        idx = 0
        for b in bits:
            idx = (idx << 1) | (1 if b else 0)
        return idx

    def lookup(self, bits: Sequence[int]) -> int:
        return int(self.table[self.pattern_index(bits)])

    def lookup_batch(self, B) -> np.ndarray:
        B = np.atleast_2d(np.asarray(B, dtype=np.int64))
        weights = 1 << np.arange(self.num_pairs - 1, -1, -1, dtype=np.int64)
        return self.table[B @ weights].astype(int)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([f"b{i}{j}" for i, j in self.pairs] + ["class"])
        for idx in range(len(self.table)):
            bits = [(idx >> (self.num_pairs - 1 - k)) & 1 for k in range(self.num_pairs)]
            w.writerow(bits + [int(self.table[idx])])
        return buf.getvalue()


def build_encoder(K: int) -> EncoderTable:
    """Majority-vote truth table for K classes; vote ties go to the lowest class index."""
    if not 2 <= K <= MAX_ENCODER_CLASSES:
        raise ValueError(f"encoder supports 2..{MAX_ENCODER_CLASSES} classes, got {K}")
    pairs = ovo_pairs(K)
    P = len(pairs)
    n = 1 << P
    table = np.empty(n, dtype=np.uint8)
    chunk = 1 << 20
    for start in range(0, n, chunk):
        idx = np.arange(start, min(n, start + chunk), dtype=np.int64)
        votes = np.zeros((len(idx), K), dtype=np.int8)
        for k, (i, j) in enumerate(pairs):
            bit = (idx >> (P - 1 - k)) & 1
            votes[:, i] += (bit == 0)
            votes[:, j] += (bit == 1)
        # argmax returns the first maximum, i.e. the lowest class index
        table[start:start + len(idx)] = np.argmax(votes, axis=1)
    return EncoderTable(K, table)


def all_patterns(P: int):
    return itertools.product((0, 1), repeat=P)
