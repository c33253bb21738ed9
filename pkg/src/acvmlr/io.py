"""Dataset files.

Two formats are supported, both with 1-based integer labels on disk:

* CSV with a header row, one column named ``label`` and every other column a
  feature;
* LIBSVM sparse lines ``label idx:val idx:val ...`` with 1-based feature
  indices.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path
from typing import Optional

import numpy as np

from .model import ContractError, Dataset


class DatasetFormatError(ValueError):
    pass


def _n_classes(labels_1b: np.ndarray, n_classes: Optional[int]) -> int:
    if labels_1b.size == 0:
        raise DatasetFormatError("dataset has no samples")
    if labels_1b.min() < 1:
        raise DatasetFormatError("labels must be integers starting at 1")
    L = int(labels_1b.max()) if n_classes is None else int(n_classes)
    if labels_1b.max() > L:
        raise DatasetFormatError(f"label {labels_1b.max()} exceeds n_classes={L}")
    return max(L, 2)


def _parse_label(tok: str, where: str) -> int:
    try:
        v = float(tok)
    except ValueError:
        raise DatasetFormatError(f"{where}: bad label {tok!r}") from None
    if v != int(v):
        raise DatasetFormatError(f"{where}: non-integer label {tok!r}")
    return int(v)


def read_csv(path, n_classes: Optional[int] = None) -> Dataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DatasetFormatError(f"{path}: empty file") from None
        if header.count("label") != 1:
            raise DatasetFormatError(f"{path}: header needs exactly one 'label' column")
        li = header.index("label")
        labels, rows = [], []
        for n, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DatasetFormatError(f"{path}:{n}: expected {len(header)} fields, got {len(row)}")
            labels.append(_parse_label(row[li], f"{path}:{n}"))
            try:
                rows.append([float(v) for j, v in enumerate(row) if j != li])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{n}: {exc}") from None
    y = np.asarray(labels, dtype=np.int64)
    L = _n_classes(y, n_classes)
    try:
        return Dataset(np.asarray(rows, dtype=np.float64), y - 1, L)
    except ContractError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def write_csv(path, dataset: Dataset) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"x{j + 1}" for j in range(dataset.n_features)])
        for lab, row in zip(dataset.labels, dataset.features):
            w.writerow([int(lab) + 1] + [repr(float(v)) for v in row])


def read_libsvm(path, n_features: Optional[int] = None, n_classes: Optional[int] = None) -> Dataset:
    labels, entries = [], []
    max_idx = 0
    with open(path) as fh:
        for n, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            toks = line.split()
            labels.append(_parse_label(toks[0], f"{path}:{n}"))
            row = {}
            for tok in toks[1:]:
                try:
                    k, v = tok.split(":")
                    idx = int(k)
                    row[idx] = float(v)
                except ValueError:
                    raise DatasetFormatError(f"{path}:{n}: bad entry {tok!r}") from None
                if idx < 1:
                    raise DatasetFormatError(f"{path}:{n}: feature indices are 1-based")
                max_idx = max(max_idx, idx)
            entries.append(row)
    N = max_idx if n_features is None else int(n_features)
    if N < 1:
        raise DatasetFormatError(f"{path}: no features")
    if max_idx > N:
        raise DatasetFormatError(f"{path}: feature index {max_idx} exceeds n_features={N}")
    X = np.zeros((len(entries), N))
    for r, row in enumerate(entries):
        for idx, v in row.items():
            X[r, idx - 1] = v
    y = np.asarray(labels, dtype=np.int64)
    L = _n_classes(y, n_classes)
    try:
        return Dataset(X, y - 1, L)
    except ContractError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from None


def write_libsvm(path, dataset: Dataset) -> None:
    with open(path, "w") as fh:
        for lab, row in zip(dataset.labels, dataset.features):
            nz = np.flatnonzero(row)
            items = " ".join(f"{j + 1}:{float(row[j])!r}" for j in nz)
            fh.write(f"{int(lab) + 1} {items}".rstrip() + "\n")


def detect_format(path) -> str:
    suffix = Path(path).suffix.lower()
    if suffix == ".csv":
        return "csv"
    if suffix in (".svm", ".libsvm", ".txt"):
        return "libsvm"
    raise DatasetFormatError(f"cannot infer format from {path!r}; use .csv or .libsvm")


def load_dataset(path, fmt: Optional[str] = None, n_classes: Optional[int] = None) -> Dataset:
    fmt = fmt or detect_format(path)
    if fmt == "csv":
        return read_csv(path, n_classes)
    if fmt == "libsvm":
        return read_libsvm(path, n_classes=n_classes)
    raise DatasetFormatError(f"unknown format {fmt!r}")


def save_dataset(path, dataset: Dataset, fmt: Optional[str] = None) -> None:
    fmt = fmt or detect_format(path)
    if fmt == "csv":
        write_csv(path, dataset)
    elif fmt == "libsvm":
        write_libsvm(path, dataset)
    else:
        raise DatasetFormatError(f"unknown format {fmt!r}")


def save_weights(path, weights: np.ndarray) -> None:
    np.savetxt(path, np.asarray(weights), delimiter=",", fmt="%.17g")


def load_weights(path) -> np.ndarray:
    return np.atleast_2d(np.loadtxt(path, delimiter=","))


def add_constant_feature(dataset: Dataset) -> Dataset:
    """Append a column of ones (penalised like any other feature; not an intercept)."""
    X = np.hstack([dataset.features, np.ones((dataset.n_samples, 1))])
    return Dataset(X, dataset.labels, dataset.n_classes)


def dataset_digest(dataset: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(dataset.features.shape, dtype=np.int64).tobytes())
    h.update(np.ascontiguousarray(dataset.features, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(dataset.labels, dtype="<i8").tobytes())
    h.update(str(dataset.n_classes).encode())
    return h.hexdigest()
