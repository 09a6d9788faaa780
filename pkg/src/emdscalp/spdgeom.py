"""Riemannian geometry on SPD covariance matrices.

Affine-invariant distance, Fréchet (geometric) mean, the minimum-distance-
to-mean classifier, and backward-elimination channel selection driven by
inter-class centroid distance.  Matrices are plain float ndarrays; matrix
square roots and logarithms go through symmetric eigendecomposition with
eigenvalues clamped at 1e-12 of the largest, never silently (see
`clamped_eigenvalue_count`).
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from typing import Hashable, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "EigenvalueClampWarning",
    "FrechetMeanError",
    "MDMModel",
    "RemovalStep",
    "SelectionTrace",
    "clamped_eigenvalue_count",
    "check_spd",
    "covariance",
    "riemannian_distance",
    "frechet_mean",
    "restrict_channels",
    "mdm_fit",
    "mdm_predict",
    "backward_elimination",
    "trace_to_json",
    "trace_from_json",
    "model_to_json",
    "model_from_json",
]

SYMMETRY_RTOL = 1e-10
EIG_CLAMP_REL = 1e-12

_n_clamped = 0


class EigenvalueClampWarning(UserWarning):
    """An eigenvalue below the clamping floor was raised to keep a matrix SPD."""


class FrechetMeanError(RuntimeError):
    """Fréchet-mean iteration did not reach the requested residual."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


def clamped_eigenvalue_count() -> int:
    """Running count of eigenvalues clamped by spectral matrix functions."""
    return _n_clamped


def _check_square_symmetric(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"{what} must be square, got shape {m.shape}")
    scale = max(float(np.abs(m).max(initial=0.0)), 1e-300)
    if float(np.abs(m - m.T).max(initial=0.0)) > SYMMETRY_RTOL * scale:
        raise ValueError(f"{what} is not symmetric within {SYMMETRY_RTOL} relative")
    return m


def _clamped_eigh(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # For sqrt/log inputs only: these need strictly positive spectra.
    global _n_clamped
    w, V = np.linalg.eigh((m + m.T) / 2.0)
    floor = EIG_CLAMP_REL * max(float(w[-1]), 0.0)
    if floor <= 0:
        raise ValueError("matrix has no positive eigenvalue")
    below = int(np.count_nonzero(w < floor))
    if below:
        _n_clamped += below
        warnings.warn(
            f"clamped {below} eigenvalue(s) below {floor:.3e}",
            EigenvalueClampWarning,
            stacklevel=3,
        )
        w = np.maximum(w, floor)
    return w, V


def _spectral(m: np.ndarray, fn, clamp: bool = True) -> np.ndarray:
    if clamp:
        w, V = _clamped_eigh(m)
    else:
        w, V = np.linalg.eigh((m + m.T) / 2.0)
    return (V * fn(w)) @ V.T


def check_spd(m: np.ndarray) -> None:
    """Raise ValueError unless `m` is symmetric positive definite."""
    m = _check_square_symmetric(m)
    try:
        np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise ValueError("matrix is not positive definite") from None


def covariance(epoch: np.ndarray, shrinkage: float = 0.05) -> np.ndarray:
    """Shrunk sample covariance of one epoch.

    Parameters
    ----------
    epoch : ndarray, shape (n_channels, n_samples)
        Raw signal segment; sample count should exceed channel count.
    shrinkage : float in [0, 1)
        Blend factor towards the scaled identity:
        ``(1 - shrinkage) * S + shrinkage * (tr(S)/dim) * I``.
        Any positive value forces positive definiteness of the result.

    Returns
    -------
    ndarray, shape (n_channels, n_channels)
    """
    epoch = np.asarray(epoch, dtype=float)
    if epoch.ndim != 2:
        raise ValueError(f"epoch must be 2-d (channels x samples), got {epoch.shape}")
    if epoch.shape[1] < 2:
        raise ValueError("epoch needs at least 2 samples")
    if not np.all(np.isfinite(epoch)):
        raise ValueError("epoch contains non-finite samples")
    if not 0.0 <= shrinkage < 1.0:
        raise ValueError(f"shrinkage must be in [0, 1), got {shrinkage}")
    s = np.atleast_2d(np.cov(epoch))
    dim = s.shape[0]
    return (1.0 - shrinkage) * s + shrinkage * (np.trace(s) / dim) * np.eye(dim)


def riemannian_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Affine-invariant Riemannian distance between two SPD matrices.

    ``delta(A, B) = || log(A^{-1/2} B A^{-1/2}) ||_F``, computed from the
    generalized eigenvalues of the pencil (A, B).  Symmetric, zero iff
    A == B, and invariant under congruence A -> W A W^T.
    """
    a = _check_square_symmetric(a, "first matrix")
    b = _check_square_symmetric(b, "second matrix")
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    try:
        w = scipy.linalg.eigvalsh(a, b)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
        raise ValueError("inputs must be positive definite") from None
    if w[0] <= 0 or not np.all(np.isfinite(w)):
        raise ValueError("inputs must be positive definite")
    return float(np.sqrt((np.log(w) ** 2).sum()))


def frechet_mean(
    mats: Sequence[np.ndarray],
    tol: float = 1e-8,
    max_iter: int = 50,
    step: float = 1.0,
) -> np.ndarray:
    """Fréchet (Karcher) mean of SPD matrices under the affine metric.

    Fixed-point gradient iteration started at the arithmetic mean:
    ``M <- M^{1/2} exp(step * mean_i log(M^{-1/2} A_i M^{-1/2})) M^{1/2}``.
    Convergence is declared when the summed tangent-space gradient
    ``|| sum_i log(M^{-1/2} A_i M^{-1/2}) ||_F`` drops to `tol`.

    Raises
    ------
    FrechetMeanError
        If the residual is still above `tol` after `max_iter` iterations;
        the exception carries the last residual.
    """
    if len(mats) == 0:
        raise ValueError("need at least one matrix")
    stack = np.stack([_check_square_symmetric(m) for m in mats])
    n = len(stack)
    mean = stack.mean(axis=0)
    residual = np.inf
    for _ in range(max_iter):
        w, V = _clamped_eigh(mean)
        isq = (V * (1.0 / np.sqrt(w))) @ V.T
        sq = (V * np.sqrt(w)) @ V.T
        grad = np.zeros_like(mean)
        for mat in stack:
            grad += _spectral(isq @ mat @ isq, np.log)
        residual = float(np.linalg.norm(grad, "fro"))
        if residual <= tol:
            return mean
        mean = sq @ _spectral((step / n) * grad, np.exp, clamp=False) @ sq
    raise FrechetMeanError(
        f"no convergence after {max_iter} iterations (residual {residual:.3e})",
        residual=residual,
    )


@dataclass(frozen=True, eq=False)
class MDMModel:
    """Per-class Fréchet-mean centroids over a channel subset."""

    classes: tuple[Hashable, ...]
    centroids: tuple[np.ndarray, ...]
    channel_subset: tuple[int, ...]

    @property
    def dim(self) -> int:
        return len(self.channel_subset)


def restrict_channels(cov: np.ndarray, subset: Sequence[int]) -> np.ndarray:
    """Principal submatrix of a covariance on the given channel indices."""
    idx = np.asarray(subset, dtype=int)
    return np.asarray(cov, dtype=float)[np.ix_(idx, idx)]


def _class_partition(labels: Sequence[Hashable], classes=None) -> tuple[tuple, dict]:
    if classes is None:
        classes = tuple(dict.fromkeys(labels))
    else:
        classes = tuple(classes)
    if len(classes) < 2:
        raise ValueError("need at least 2 classes")
    groups: dict[Hashable, list[int]] = {c: [] for c in classes}
    for i, lab in enumerate(labels):
        if lab not in groups:
            raise ValueError(f"label {lab!r} not in declared classes {classes}")
        groups[lab].append(i)
    for c in classes:
        if not groups[c]:
            raise ValueError(f"class {c!r} has zero examples")
    return classes, groups


def mdm_fit(
    covs: Sequence[np.ndarray],
    labels: Sequence[Hashable],
    channel_subset: Sequence[int] | None = None,
    classes: Sequence[Hashable] | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> MDMModel:
    """Fit the minimum-distance-to-mean classifier.

    Covariances are restricted to `channel_subset` before averaging; one
    Fréchet-mean centroid is estimated per class.  Class order defaults to
    first appearance in `labels` and fixes the prediction tie-break.
    """
    if len(covs) != len(labels):
        raise ValueError("covs and labels lengths differ")
    if len(covs) == 0:
        raise ValueError("no training examples")
    dim = np.asarray(covs[0]).shape[0]
    subset = tuple(range(dim)) if channel_subset is None else tuple(int(c) for c in channel_subset)
    if any(c < 0 or c >= dim for c in subset):
        raise ValueError(f"channel subset out of range for dim {dim}")
    classes, groups = _class_partition(labels, classes)
    restricted = [restrict_channels(c, subset) for c in covs]
    centroids = tuple(
        frechet_mean([restricted[i] for i in groups[c]], tol=tol, max_iter=max_iter)
        for c in classes
    )
    return MDMModel(classes=classes, centroids=centroids, channel_subset=subset)


def mdm_predict(model: MDMModel, cov: np.ndarray) -> Hashable:
    """Class of the nearest centroid; ties go to the first declared class."""
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (model.dim, model.dim):
        raise ValueError(f"covariance dim {cov.shape} does not match model dim {model.dim}")
    dists = np.array([riemannian_distance(c, cov) for c in model.centroids])
    return model.classes[int(np.argmin(dists))]


@dataclass(frozen=True)
class RemovalStep:
    """One elimination step: channel removed and the distance that survives."""

    iteration: int
    removed: int
    distance: float


@dataclass(frozen=True)
class SelectionTrace:
    """Full record of a backward-elimination run.

    `removal_order` holds one step per removed channel; `final_subset` is
    the surviving channel set; `final_loo_drops[i]` is how much the
    inter-class centroid distance falls when ``final_subset[i]`` is left
    out, which ranks the survivors by importance.
    """

    removal_order: tuple[RemovalStep, ...]
    final_subset: tuple[int, ...]
    final_loo_drops: tuple[float, ...]


def _subset_distance(centroids: Sequence[np.ndarray], subset: Sequence[int]) -> float:
    # Sum of pairwise centroid distances; a single pair for two classes.
    total = 0.0
    for i in range(len(centroids)):
        for j in range(i + 1, len(centroids)):
            total += riemannian_distance(
                restrict_channels(centroids[i], subset),
                restrict_channels(centroids[j], subset),
            )
    return total


def backward_elimination(
    covs: Sequence[np.ndarray],
    labels: Sequence[Hashable],
    target_k: int,
    classes: Sequence[Hashable] | None = None,
    tol: float = 1e-8,
    max_iter: int = 50,
) -> SelectionTrace:
    """Backward-elimination channel selection on centroid distance.

    Class centroids are estimated once on the full channel set.  At each
    iteration every candidate channel is scored by the inter-class centroid
    distance on the subset with that channel removed, and the channel whose
    removal leaves the largest remaining distance is permanently dropped
    (ties: lowest channel index).  Repeats until `target_k` channels
    survive.
    """
    if len(covs) == 0:
        raise ValueError("no training examples")
    dim = np.asarray(covs[0]).shape[0]
    if not 2 <= target_k < dim:
        raise ValueError(f"target_k must be in [2, {dim}), got {target_k}")
    classes, groups = _class_partition(labels, classes)
    covs = [np.asarray(c, dtype=float) for c in covs]
    centroids = [
        frechet_mean([covs[i] for i in groups[c]], tol=tol, max_iter=max_iter)
        for c in classes
    ]

    subset = list(range(dim))
    steps: list[RemovalStep] = []
    iteration = 0
    while len(subset) > target_k:
        iteration += 1
        scores = np.array(
            [
                _subset_distance(centroids, subset[:pos] + subset[pos + 1:])
                for pos in range(len(subset))
            ]
        )
        # argmax returns the first maximum; subset is ascending, so ties
        # remove the lowest channel index.
        pos = int(np.argmax(scores))
        steps.append(
            RemovalStep(iteration=iteration, removed=subset[pos], distance=float(scores[pos]))
        )
        subset.pop(pos)

    final_distance = _subset_distance(centroids, subset)
    drops = tuple(
        float(final_distance - _subset_distance(centroids, subset[:pos] + subset[pos + 1:]))
        for pos in range(len(subset))
    )
    return SelectionTrace(
        removal_order=tuple(steps),
        final_subset=tuple(subset),
        final_loo_drops=drops,
    )


def trace_to_json(trace: SelectionTrace) -> str:
    doc = {
        "format_version": 1,
        "removal_order": [
            {"iteration": s.iteration, "removed": s.removed, "distance": s.distance}
            for s in trace.removal_order
        ],
        "final_subset": list(trace.final_subset),
        "final_loo_drops": list(trace.final_loo_drops),
    }
    return json.dumps(doc, sort_keys=True)


def trace_from_json(text: str) -> SelectionTrace:
    doc = json.loads(text)
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported trace format_version: {doc.get('format_version')}")
    return SelectionTrace(
        removal_order=tuple(
            RemovalStep(int(s["iteration"]), int(s["removed"]), float(s["distance"]))
            for s in doc["removal_order"]
        ),
        final_subset=tuple(int(c) for c in doc["final_subset"]),
        final_loo_drops=tuple(float(d) for d in doc["final_loo_drops"]),
    )


def model_to_json(model: MDMModel) -> str:
    doc = {
        "format_version": 1,
        "classes": list(model.classes),
        "channel_subset": list(model.channel_subset),
        "centroids": [c.tolist() for c in model.centroids],
    }
    return json.dumps(doc, sort_keys=True)


def model_from_json(text: str) -> MDMModel:
    doc = json.loads(text)
    if doc.get("format_version") != 1:
        raise ValueError(f"unsupported model format_version: {doc.get('format_version')}")
    return MDMModel(
        classes=tuple(doc["classes"]),
        centroids=tuple(np.array(c, dtype=float) for c in doc["centroids"]),
        channel_subset=tuple(int(c) for c in doc["channel_subset"]),
    )
