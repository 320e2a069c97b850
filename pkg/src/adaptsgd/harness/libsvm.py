"""Reader for the LIBSVM sparse text format.

One example per line: ``<label> <index>:<value> ...`` with 1-based, strictly
increasing indices. Blank lines and ``#`` comments are skipped.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import DatasetParseError, EmptyDatasetError, ParameterDomainError
from ..problems import LinearModelProblem

__all__ = ["parse_libsvm", "load_libsvm"]


def parse_libsvm(lines, loss="logistic"):
    """Parse an iterable of lines into ``(csr_matrix, labels)``.

    Logistic labels map to ``-1`` when ``<= 0`` and ``+1`` otherwise; squared
    loss keeps the raw real targets.
    """
    if loss not in ("squared", "logistic"):
        raise ParameterDomainError(f"unknown loss {loss!r}")
    labels, indptr, indices, values = [], [0], [], []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            labels.append(float(tokens[0]))
        except ValueError:
            raise DatasetParseError(f"bad label {tokens[0]!r}", lineno) from None
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise DatasetParseError(f"expected index:value, got {tok!r}", lineno)
            try:
                idx, val = int(idx_s), float(val_s)
            except ValueError:
                raise DatasetParseError(f"bad feature {tok!r}", lineno) from None
            if idx < 1:
                raise DatasetParseError(f"feature indices are 1-based, got {idx}", lineno)
            if idx <= last:
                raise DatasetParseError(f"feature indices must increase strictly ({idx} after {last})", lineno)
            last = idx
            indices.append(idx - 1)
            values.append(val)
        indptr.append(len(indices))
    if not labels:
        raise EmptyDatasetError("dataset holds no examples")
    d = max(indices) + 1 if indices else 1
    X = sp.csr_matrix((np.array(values, dtype=float), np.array(indices, dtype=np.int64), np.array(indptr)),
                      shape=(len(labels), d))
    y = np.array(labels, dtype=float)
    if loss == "logistic":
        y = np.where(y > 0, 1.0, -1.0)
    return X, y


def load_libsvm(path, loss="logistic", lam=0.0) -> LinearModelProblem:
    """Load a LIBSVM file as a sparse :class:`LinearModelProblem`."""
    with open(path, encoding="utf-8") as fh:
        X, y = parse_libsvm(fh, loss)
    return LinearModelProblem(X, y, loss, lam)
