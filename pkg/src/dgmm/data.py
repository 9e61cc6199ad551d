"""Dataset loading, standardization and the smiley benchmark generator."""

import csv
import hashlib
import warnings
from dataclasses import dataclass, field, replace

import numpy as np


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    x: np.ndarray
    labels: np.ndarray = None
    feature_names: list = None
    label_names: list = None  # original label values, in code order 1..k
    center: np.ndarray = None
    scale: np.ndarray = None
    constant_columns: list = field(default_factory=list)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.x.ndim != 2:
            raise DataFormatError("data must be a 2-D table")
        if not np.all(np.isfinite(self.x)):
            raise DataFormatError("data contains non-finite values")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.x.shape[0],):
                raise DataFormatError("labels must have one entry per row")

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def p(self):
        return self.x.shape[1]

    def fingerprint(self):
        digest = hashlib.sha256(np.ascontiguousarray(self.x).tobytes())
        if self.labels is not None:
            digest.update(self.labels.tobytes())
        return f"{self.n}x{self.p}:{digest.hexdigest()[:16]}"


def encode_labels(values):
    """Integer codes 1..k in order of first appearance, plus the code book."""
    codes, book = {}, []
    out = np.empty(len(values), dtype=np.int64)
    for i, v in enumerate(values):
        if v not in codes:
            codes[v] = len(book) + 1
            book.append(v)
        out[i] = codes[v]
    return out, book


def load_csv(path, has_header=True, label_column=None, delimiter=","):
    """Read a numeric table; ``label_column`` is a header name or 0-based index."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh, delimiter=delimiter) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = None
    if has_header:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: no data rows after the header")
    width = len(header) if header else len(rows[0])
    label_idx = None
    if label_column is not None:
        if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
            if header is None or label_column not in header:
                raise DataFormatError(f"{path}: no column named {label_column!r}")
            label_idx = header.index(label_column)
        else:
            label_idx = int(label_column) % width
    feat_idx = [c for c in range(width) if c != label_idx]
    x = np.empty((len(rows), len(feat_idx)))
    raw_labels = []
    for i, row in enumerate(rows):
        lineno = i + (2 if has_header else 1)
        if len(row) != width:
            raise DataFormatError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
        for jj, c in enumerate(feat_idx):
            cell = row[c].strip()
            try:
                x[i, jj] = float(cell)
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {lineno}, column {c + 1}: non-numeric value {cell!r}"
                ) from None
            if not np.isfinite(x[i, jj]):
                raise DataFormatError(f"{path}: row {lineno}, column {c + 1}: non-finite value")
        if label_idx is not None:
            raw_labels.append(row[label_idx].strip())
    labels, book = encode_labels(raw_labels) if label_idx is not None else (None, None)
    names = [header[c] for c in feat_idx] if header else None
    return Dataset(x, labels, names, book)


def save_csv(ds, path, label_name="class"):
    """Write features (17 significant digits) plus an optional label column."""
    names = ds.feature_names or [f"x{j + 1}" for j in range(ds.p)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ([label_name] if ds.labels is not None else []))
        for i in range(ds.n):
            row = [repr(float(v)) for v in ds.x[i]]
            if ds.labels is not None:
                row.append(str(int(ds.labels[i])))
            w.writerow(row)


def standardize(ds):
    """Center columns and divide by the sample (n - 1) standard deviation.

    Constant columns are only centered and listed in ``constant_columns``.
    """
    center = ds.x.mean(axis=0)
    sd = ds.x.std(axis=0, ddof=1) if ds.n > 1 else np.zeros(ds.p)
    constant = [int(j) for j in np.flatnonzero(~(sd > 0))]
    if constant:
        warnings.warn(f"constant columns {constant} were centered but not scaled", stacklevel=2)
    scale = np.where(sd > 0, sd, 1.0)
    return replace(ds, x=(ds.x - center) / scale, center=center, scale=scale,
                   constant_columns=constant)


# smiley geometry: eye centres, nose triangle, mouth parabola y = a x^2 + c
EYES = np.array([[-0.8, 1.0], [0.8, 1.0]])
NOSE = np.array([[0.0, 0.4], [-0.3, -0.4], [0.3, -0.4]])
MOUTH_A, MOUTH_C = 0.5, -1.5


def generate_smiley(n=1000, sd_eyes=0.45, sd_mouth=0.35, sd_noise=0.5, rng=None):
    """Two Gaussian eyes, a uniform triangular nose, a parabolic mouth, plus
    an independent Gaussian noise coordinate. Labels 1, 2 are the eyes,
    3 the nose, 4 the mouth; class sizes are multinomial with equal odds."""
    if n < 4:
        raise ValueError("n must be >= 4")
    rng = rng if rng is not None else np.random.default_rng()
    counts = rng.multinomial(n, np.full(4, 0.25))
    labels = np.repeat(np.arange(1, 5), counts)
    x = np.empty((n, 3))
    eyes = labels <= 2
    x[eyes, :2] = EYES[labels[eyes] - 1] + sd_eyes * rng.standard_normal((eyes.sum(), 2))
    nose = labels == 3
    u, v = rng.random(nose.sum()), rng.random(nose.sum())
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    x[nose, :2] = NOSE[0] + u[:, None] * (NOSE[1] - NOSE[0]) + v[:, None] * (NOSE[2] - NOSE[0])
    mouth = labels == 4
    mx = rng.uniform(-1.0, 1.0, mouth.sum())
    x[mouth, 0] = mx
    x[mouth, 1] = MOUTH_A * mx ** 2 + MOUTH_C + sd_mouth * rng.standard_normal(mouth.sum())
    x[:, 2] = sd_noise * rng.standard_normal(n) if sd_noise > 0 else 0.0
    perm = rng.permutation(n)
    return Dataset(x[perm], labels[perm], ["x1", "x2", "x3"], [1, 2, 3, 4])
