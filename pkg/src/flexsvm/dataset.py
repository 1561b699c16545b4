"""CSV ingestion, stratified split, min-max normalisation and ANOVA feature selection."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class RawDataset:
    X: np.ndarray
    y: np.ndarray
    column_names: tuple
    class_names: tuple
    name: str = ""

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class PreparedDataset:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray
    feature_mask: np.ndarray
    feature_min: np.ndarray
    feature_max: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    column_names: tuple
    class_names: tuple
    seed: int
    name: str = ""
    f_scores: Optional[np.ndarray] = None

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    @property
    def selected_columns(self) -> list:
        return [c for c, keep in zip(self.column_names, self.feature_mask) if keep]

    def transform(self, X) -> np.ndarray:
        """Apply the stored column selection, training normalisation and clipping to raw rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != len(self.feature_mask):
            raise DatasetError(f"expected {len(self.feature_mask)} raw columns, got {X.shape[1]}")
        return normalize(X[:, self.feature_mask], self.feature_min, self.feature_max)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "column_names": list(self.column_names),
            "class_names": list(self.class_names),
            "feature_mask": [bool(v) for v in self.feature_mask],
            "f_scores": None if self.f_scores is None else self.f_scores.tolist(),
            "normalization": {"min": self.feature_min.tolist(), "max": self.feature_max.tolist()},
            "split": {"train": self.train_idx.tolist(), "test": self.test_idx.tolist()},
            "train": {"X": self.X_train.tolist(), "y": self.y_train.tolist()},
            "test": {"X": self.X_test.tolist(), "y": self.y_test.tolist()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PreparedDataset":
        mask = np.asarray(d["feature_mask"], dtype=bool)
        k = int(mask.sum())

        def mat(rows):
            return np.asarray(rows, dtype=float).reshape(-1, k)

        fs = d.get("f_scores")
        return cls(
            X_train=mat(d["train"]["X"]),
            y_train=np.asarray(d["train"]["y"], dtype=int),
            X_test=mat(d["test"]["X"]),
            y_test=np.asarray(d["test"]["y"], dtype=int),
            feature_mask=mask,
            feature_min=np.asarray(d["normalization"]["min"], dtype=float),
            feature_max=np.asarray(d["normalization"]["max"], dtype=float),
            train_idx=np.asarray(d["split"]["train"], dtype=int),
            test_idx=np.asarray(d["split"]["test"], dtype=int),
            column_names=tuple(d["column_names"]),
            class_names=tuple(d["class_names"]),
            seed=int(d["seed"]),
            name=d.get("name", ""),
            f_scores=None if fs is None else np.asarray(fs, dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path: Union[str, Path], label_column: Union[str, int] = -1,
             header: Optional[bool] = None, name: Optional[str] = None) -> RawDataset:
    """Read a comma-separated file into a :class:`RawDataset`.

    ``label_column`` is a header name or a (possibly negative) column index.
    ``header=None`` sniffs: the first row is a header when any of its cells
    is non-numeric while the second row's cell in the same column is numeric.
    Feature columns containing any non-numeric cell are dropped. Labels are
    relabelled 0..K-1 in order of first appearance. A file without a single
    comma is split on runs of whitespace instead, which covers the
    tab/space separated UCI distributions.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"dataset not found: {path}")
    text = path.read_text(encoding="utf-8")
    if "," in text:
        lines = csv.reader(io.StringIO(text, newline=""))
    else:
        lines = (ln.split() for ln in text.splitlines())
    rows = [[c.strip() for c in r] for r in lines if r and any(c.strip() for c in r)]
    if not rows:
        raise DatasetError(f"{path}: empty dataset")
    width = len(rows[0])
    if header is None:
        header = len(rows) > 1 and any(
            not _is_number(a) and _is_number(b) for a, b in zip(rows[0], rows[1])
        )
    if header:
        names = rows[0]
        rows = rows[1:]
    else:
        names = [f"c{i}" for i in range(width)]
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    for k, r in enumerate(rows):
        if len(r) != width:
            raise DatasetError(f"{path}: row {k + 1} has {len(r)} fields, expected {width}")

    if isinstance(label_column, str) and label_column not in names:
        if label_column.lstrip("-").isdigit():
            label_column = int(label_column)
        else:
            raise DatasetError(f"{path}: no column named {label_column!r}")
    li = names.index(label_column) if isinstance(label_column, str) else int(label_column)
    if not -width <= li < width:
        raise DatasetError(f"{path}: label column {li} out of range")
    li %= width

    raw_labels = [r[li] for r in rows]
    if any(lab == "" for lab in raw_labels):
        raise DatasetError(f"{path}: empty label cell")
    classes: dict = {}
    for lab in raw_labels:
        classes.setdefault(lab, len(classes))
    if len(classes) < 2:
        raise DatasetError(f"{path}: need at least 2 classes, found {len(classes)}")

    feat_cols = [c for c in range(width) if c != li and all(_is_number(r[c]) for r in rows)]
    if not feat_cols:
        raise DatasetError(f"{path}: no numeric feature columns")
    X = np.array([[float(r[c]) for c in feat_cols] for r in rows], dtype=float)
    y = np.array([classes[lab] for lab in raw_labels], dtype=int)
    return RawDataset(
        X=X,
        y=y,
        column_names=tuple(names[c] for c in feat_cols),
        class_names=tuple(classes),
        name=name if name is not None else path.stem,
    )


def stratified_split(y: np.ndarray, frac: float, rng: np.random.Generator):
    """Per-class shuffled split.

    Class quotas are floor(frac * n_c) topped up by largest remainder so the
    overall training count is round(frac * n); every class keeps at least one
    row on each side.
    """
    classes = np.unique(y)
    sizes = np.array([np.sum(y == c) for c in classes])
    small = classes[sizes < 2]
    if len(small):
        raise DatasetError(f"class {small[0]} has fewer than 2 samples; cannot stratify")
    exact = frac * sizes
    quota = np.floor(exact).astype(int)
    extra = int(np.floor(frac * sizes.sum() + 0.5)) - quota.sum()
    # stable order: larger remainder first, then lower class index
    for k in sorted(range(len(classes)), key=lambda k: (-(exact[k] - quota[k]), k))[:max(extra, 0)]:
        quota[k] += 1
    quota = np.clip(quota, 1, sizes - 1)
    train, test = [], []
    for c, q in zip(classes, quota):
        idx = rng.permutation(np.flatnonzero(y == c))
        train.append(idx[:q])
        test.append(idx[q:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def anova_f(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """One-way ANOVA F statistic per column; constant or degenerate columns score 0."""
    X = np.asarray(X, dtype=float)
    classes = np.unique(y)
    k, n = len(classes), len(y)
    grand = X.mean(0)
    ss_between = np.zeros(X.shape[1])
    ss_within = np.zeros(X.shape[1])
    for c in classes:
        Xc = X[y == c]
        mc = Xc.mean(0)
        ss_between += len(Xc) * (mc - grand) ** 2
        ss_within += ((Xc - mc) ** 2).sum(0)
    df_b, df_w = k - 1, n - k
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (ss_between / df_b) / (ss_within / df_w)
    f[~np.isfinite(f)] = 0.0
    # perfectly separated but non-constant columns get an infinite-like score
    perfect = (ss_within == 0) & (ss_between > 0)
    f[perfect] = np.finfo(float).max
    return f


def normalize(X: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    span = np.where(hi > lo, hi - lo, 1.0)
    return np.clip((X - lo) / span, 0.0, 1.0)


def prepare(raw: RawDataset, max_features: int = 5, split: float = 0.7,
            seed: int = 0) -> PreparedDataset:
    if max_features < 1:
        raise DatasetError("max_features must be >= 1")
    if not 0.0 < split < 1.0:
        raise DatasetError("split must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    tr, te = stratified_split(raw.y, split, rng)

    scores = anova_f(raw.X[tr], raw.y[tr])
    D = raw.n_features
    n_keep = min(D, max_features)
    # stable: ties keep the earlier column
    order = sorted(range(D), key=lambda j: (-scores[j], j))
    mask = np.zeros(D, dtype=bool)
    mask[order[:n_keep]] = True

    Xtr = raw.X[tr][:, mask]
    lo, hi = Xtr.min(0), Xtr.max(0)
    return PreparedDataset(
        X_train=normalize(Xtr, lo, hi),
        y_train=raw.y[tr].copy(),
        X_test=normalize(raw.X[te][:, mask], lo, hi),
        y_test=raw.y[te].copy(),
        feature_mask=mask,
        feature_min=lo,
        feature_max=hi,
        train_idx=tr,
        test_idx=te,
        column_names=raw.column_names,
        class_names=raw.class_names,
        seed=seed,
        name=raw.name,
        f_scores=scores,
    )


def save_prepared(ds: PreparedDataset, path: Union[str, Path]) -> str:
    text = ds.to_json()
    Path(path).write_text(text, encoding="utf-8")
    return hashlib.sha256(text.encode()).hexdigest()


def load_prepared(path: Union[str, Path]) -> PreparedDataset:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"prepared dataset not found: {path}")
    return PreparedDataset.from_dict(json.loads(path.read_text(encoding="utf-8")))


def balance_scale_rows() -> list:
    """The Balance Scale table: every (LW, LD, RW, RD) in 1..5, class first.

    The UCI file is exactly this enumeration, tipping left when
    LW*LD > RW*RD, right when smaller, balanced otherwise.
    """
    rows = []
    for lw in range(1, 6):
        for ld in range(1, 6):
            for rw in range(1, 6):
                for rd in range(1, 6):
                    left, right = lw * ld, rw * rd
                    cls = "L" if left > right else "R" if left < right else "B"
                    rows.append([cls, lw, ld, rw, rd])
    return rows


def write_balance_scale(path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "left_weight", "left_distance", "right_weight", "right_distance"])
        w.writerows(balance_scale_rows())
    return path


def subset_pair(X: np.ndarray, y: np.ndarray, i: int, j: int):
    """Rows of classes i and j with labels mapped to -1 (class i) and +1 (class j)."""
    sel = (y == i) | (y == j)
    return X[sel], np.where(y[sel] == j, 1.0, -1.0), np.flatnonzero(sel)


def class_counts(y: Sequence[int], k: int) -> list:
    return np.bincount(np.asarray(y, dtype=int), minlength=k).tolist()
