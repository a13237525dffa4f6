"""Finite-dimensional simulation of the multitask mixture.

Class means are built exactly: ``U = S C^{1/2}`` with ``S`` an orthonormal
``D x T`` frame from the QR factorization of a Gaussian matrix, so
``U^T U = C`` to rounding error at any ``D``.

Random streams are keyed by ``(seed, purpose, task)`` through
``numpy.random.SeedSequence`` spawn keys.  Point ``i`` of task ``t`` always
consumes the same slice of its stream, so a dataset depends only on the
config, the sizes and the seed.
"""
from __future__ import annotations

import csv
import os
import warnings
from dataclasses import dataclass
from os import PathLike

import numpy as np

from .model import ValidatedEnsemble, effective_matrices

# stream purposes
_MEANS, _LABELS, _MASK, _NOISE, _TEST = range(5)
_CHUNK = 2048


class DimensionTooSmallError(ValueError):
    pass


class InvalidSizeError(ValueError):
    pass


class EmptyTaskError(ValueError):
    pass


class NoLabeledDataError(ValueError):
    pass


class DimensionMismatchError(ValueError):
    pass


def rng(seed: int, purpose: int, task: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(purpose, task)))


def psd_sqrt(C: np.ndarray) -> np.ndarray:
    """Symmetric square root; negative rounding-level eigenvalues are clamped to zero."""
    w, Q = np.linalg.eigh(C)
    root = (Q * np.sqrt(np.clip(w, 0.0, None))) @ Q.T
    return 0.5 * (root + root.T)


@dataclass(frozen=True)
class Dataset:
    """One realization.  ``Y[t]`` is ``(N_t, D)``, ``U`` is ``(D, T)`` (hidden)."""

    D: int
    Y: tuple[np.ndarray, ...]
    V: tuple[np.ndarray, ...]
    labeled: tuple[np.ndarray, ...]
    U: np.ndarray

    @property
    def T(self) -> int:
        return len(self.Y)

    @property
    def N(self) -> tuple[int, ...]:
        return tuple(y.shape[0] for y in self.Y)


def class_means(ens: ValidatedEnsemble, D: int, seed: int) -> np.ndarray:
    T = ens.T
    if D <= T:
        raise DimensionTooSmallError(f"D = {D} must exceed T = {T}")
    Z = rng(seed, _MEANS).standard_normal((D, T))
    S, _ = np.linalg.qr(Z)
    return S @ psd_sqrt(ens.C)


def generate(ens: ValidatedEnsemble, D: int, N, seed: int) -> Dataset:
    """Draw ``Y_ti = V_ti U_t + sigma_t Z_ti`` for every task.

    Labels are uniform on ``{-1, +1}``; each point is labeled independently
    with probability ``eta_t``.
    """
    N = [int(n) for n in np.broadcast_to(np.asarray(N), (ens.T,))]
    if any(n < 1 for n in N):
        raise InvalidSizeError(f"every N_t must be >= 1, got {N}")
    if not np.all(np.isfinite(ens.sigma)):
        raise InvalidSizeError("cannot simulate a task with zero SNR (sigma = inf)")
    U = class_means(ens, D, seed)
    Ys, Vs, Ls = [], [], []
    for t in range(ens.T):
        V = rng(seed, _LABELS, t).choice(np.array([-1, 1], dtype=np.int8), size=N[t])
        L = rng(seed, _MASK, t).random(N[t]) < ens.eta[t]
        noise = rng(seed, _NOISE, t)
        Y = np.empty((N[t], D))
        for lo in range(0, N[t], _CHUNK):
            hi = min(lo + _CHUNK, N[t])
            noise.standard_normal((hi - lo, D), out=Y[lo:hi])
            Y[lo:hi] *= ens.sigma[t]
            Y[lo:hi] += V[lo:hi, None] * U[:, t]
        for a in (Y, V, L):
            a.setflags(write=False)
        Ys.append(Y)
        Vs.append(V)
        Ls.append(L)
    U.setflags(write=False)
    return Dataset(D, tuple(Ys), tuple(Vs), tuple(Ls), U)


@dataclass(frozen=True)
class ClassifierWeights:
    Ybar: np.ndarray  # (T, D)
    A: np.ndarray  # (T, T)
    Ytilde: np.ndarray  # (T, D)


def mixing_matrix(M: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """``A = M D_alpha (I + M D_alpha)^{-1}``."""
    MD = M * np.asarray(alpha)[None, :]
    # A (I + MD) = MD  <=>  (I + MD)^T A^T = MD^T
    return np.linalg.solve((np.eye(len(alpha)) + MD).T, MD.T).T


def labeled_means(data: Dataset, labeled_only: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Per-task ``mean_i V_ti Y_ti`` and the number of points used."""
    Ybar = np.empty((data.T, data.D))
    counts = np.empty(data.T, dtype=int)
    for t in range(data.T):
        keep = data.labeled[t] if labeled_only else slice(None)
        V, Y = data.V[t][keep], data.Y[t][keep]
        if len(V) == 0:
            raise EmptyTaskError(f"task {t} has no labeled points")
        Ybar[t] = (V.astype(float) @ Y) / len(V)
        counts[t] = len(V)
    return Ybar, counts


def fit_supervised(ens: ValidatedEnsemble, data: Dataset, labeled_only: bool = True) -> ClassifierWeights:
    """Label-weighted class means fused across tasks with the mixing matrix ``A``.

    The fused direction of task ``t`` is ``Ytilde_t = sum_s A_ts Ybar_s``; it
    attains the Bayes risk when every point is labeled.
    """
    Ybar, _ = labeled_means(data, labeled_only)
    A = mixing_matrix(effective_matrices(ens).M, ens.alpha)
    return ClassifierWeights(Ybar, A, A @ Ybar)


def predict(weights: ClassifierWeights, task: int, Y: np.ndarray) -> np.ndarray:
    """Vectorized :func:`classify` over the rows of ``Y``."""
    if not 0 <= task < weights.Ytilde.shape[0]:
        raise IndexError(f"task {task} out of range")
    Y = np.atleast_2d(Y)
    if Y.shape[1] != weights.Ytilde.shape[1]:
        raise DimensionMismatchError(f"points have dimension {Y.shape[1]}, weights {weights.Ytilde.shape[1]}")
    return np.where(Y @ weights.Ytilde[task] >= 0, 1, -1)


def classify(weights: ClassifierWeights, task: int, y_new: np.ndarray) -> int:
    """``sgn(<y_new, Ytilde_task>)`` with ``sgn(0) = +1``."""
    y_new = np.asarray(y_new, dtype=float)
    if y_new.ndim != 1:
        raise DimensionMismatchError("y_new must be a vector")
    return int(predict(weights, task, y_new[None, :])[0])


def empirical_risk(ens: ValidatedEnsemble, data: Dataset, task: int, weights: ClassifierWeights,
                   n_test: int, seed: int) -> tuple[float, float]:
    """Test error of ``weights`` on fresh points of ``task`` and its binomial standard error."""
    if n_test < 1:
        raise InvalidSizeError(f"n_test must be >= 1, got {n_test}")
    gen = rng(seed, _TEST, task)
    u, sigma = data.U[:, task], ens.sigma[task]
    errors = 0
    for lo in range(0, n_test, _CHUNK):
        m = min(_CHUNK, n_test - lo)
        V = gen.choice(np.array([-1, 1]), size=m)
        Y = sigma * gen.standard_normal((m, data.D)) + V[:, None] * u
        errors += int(np.count_nonzero(predict(weights, task, Y) != V))
    p = errors / n_test
    return p, float(np.sqrt(p * (1.0 - p) / n_test))


@dataclass(frozen=True)
class ParameterEstimate:
    C_hat: np.ndarray
    sigma_hat: np.ndarray
    clamped: np.ndarray  # tasks whose variance estimate was negative


def estimate_parameters(data: Dataset) -> ParameterEstimate:
    """Estimate ``C`` and ``sigma`` from the labeled points.

    ``C_hat_st = <Ybar_s, Ybar_t>`` off the diagonal and ``sigma_hat_t^2 =
    alpha_t (||Ybar_t||^2 - 1)`` with ``alpha_t = N_lab_t / D``.  Negative
    variance estimates are clamped to zero and flagged.
    """
    try:
        Ybar, n_lab = labeled_means(data)
    except EmptyTaskError as exc:
        raise NoLabeledDataError(str(exc)) from None
    G = Ybar @ Ybar.T
    C_hat = G.copy()
    np.fill_diagonal(C_hat, 1.0)
    var = (np.diag(G) - 1.0) * n_lab / data.D
    clamped = var < 0
    if clamped.any():
        warnings.warn(f"negative variance estimate clamped to 0 for tasks {np.flatnonzero(clamped).tolist()}",
                      RuntimeWarning, stacklevel=2)
    return ParameterEstimate(C_hat, np.sqrt(np.clip(var, 0.0, None)), clamped)


def dump_dataset(data: Dataset, directory: str | PathLike, dump_hidden: bool = False) -> list[str]:
    """Write ``task<t>.csv`` per task (``label,labeled_flag,y_0..``); means only on request."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for t in range(data.T):
        path = os.path.join(directory, f"task{t + 1}.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["label", "labeled_flag"] + [f"y_{j}" for j in range(data.D)])
            for v, flag, y in zip(data.V[t], data.labeled[t], data.Y[t]):
                w.writerow([int(v), int(flag)] + [format(x, ".17g") for x in y])
        paths.append(path)
    if dump_hidden:
        path = os.path.join(directory, "hidden_means.csv")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"u_{t + 1}" for t in range(data.T)])
            for row in data.U:
                w.writerow([format(x, ".17g") for x in row])
        paths.append(path)
    return paths
