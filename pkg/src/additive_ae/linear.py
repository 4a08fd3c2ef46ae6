"""Principal component trend of normalized data and its residual operator."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .metrics import mrse


@dataclass(frozen=True)
class PcaBasis:
    """Leading eigenvectors ``U`` (n x m) of the data covariance with their eigenvalues."""

    U: np.ndarray
    eigenvalues: np.ndarray

    @property
    def n(self) -> int:
        return self.U.shape[0]

    @property
    def m(self) -> int:
        return self.U.shape[1]

    def truncate(self, m: int) -> "PcaBasis":
        if not 0 <= m <= self.m:
            raise ValueError(f"cannot truncate a {self.m}-component basis to {m}")
        return PcaBasis(self.U[:, :m].copy(), self.eigenvalues[:m].copy())

    def project(self, x: np.ndarray) -> np.ndarray:
        """PC coordinates ``U^T x``; rows of a matrix are observations."""
        x = np.asarray(x, dtype=np.float64)
        _check_width(self, x)
        return x @ self.U

    def reconstruct(self, x: np.ndarray) -> np.ndarray:
        return self.project(x) @ self.U.T

    def projector(self) -> np.ndarray:
        return self.U @ self.U.T


def covariance(data: np.ndarray) -> np.ndarray:
    data = np.asarray(data, dtype=np.float64)
    return data.T @ data / data.shape[0]


def full_basis(data: np.ndarray) -> PcaBasis:
    """All n eigenpairs of (1/N) X^T X, descending, with deterministic signs."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 1:
        raise ValueError("data must be a non-empty N x n matrix")
    try:
        evals, evecs = np.linalg.eigh(covariance(data))
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigendecomposition failed: {exc}") from exc
    order = np.argsort(evals, kind="stable")[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    # largest-magnitude entry of each column made positive
    pivot = np.argmax(np.abs(evecs), axis=0)
    signs = np.sign(evecs[pivot, np.arange(evecs.shape[1])])
    signs[signs == 0] = 1.0
    return PcaBasis(evecs * signs, evals)


def pca_fit(data, m: int) -> PcaBasis:
    """Fit the ``m`` most significant principal components of mean-centered data.

    ``data`` is either a normalized :class:`~additive_ae.dataio.Dataset` or a raw
    array that is already mean-centered.
    """
    x = getattr(data, "data", data)
    n = np.shape(x)[1]
    if not 1 <= m <= n:
        raise ValueError(f"number of components must be in [1, {n}], got {m}")
    return full_basis(x).truncate(m)


def residual(basis: PcaBasis, x: np.ndarray) -> np.ndarray:
    """Part of ``x`` orthogonal to the principal subspace, ``(I - U U^T) x``."""
    x = np.asarray(x, dtype=np.float64)
    _check_width(basis, x)
    return x - (x @ basis.U) @ basis.U.T


def linear_mrse_curve(data, dims) -> np.ndarray:
    """MRSE of PCA-only reconstruction for each number of components in ``dims``."""
    x = getattr(data, "data", data)
    basis = full_basis(x)
    out = []
    for m in dims:
        if not 1 <= m <= basis.n:
            raise ValueError(f"dimension {m} outside [1, {basis.n}]")
        out.append(mrse(x, x - residual(basis.truncate(m), x)))
    return np.array(out)


def export_csv(basis: PcaBasis, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["component", "eigenvalue"] + [f"loading_{i}" for i in range(basis.n)])
        for k in range(basis.m):
            w.writerow([k + 1, repr(float(basis.eigenvalues[k]))]
                       + [repr(float(v)) for v in basis.U[:, k]])


def _check_width(basis, x):
    if x.shape[-1] != basis.n:
        raise ValueError(f"dimension mismatch: basis has n={basis.n}, input has {x.shape[-1]}")
