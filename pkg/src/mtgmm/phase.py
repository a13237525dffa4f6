"""Feasibility of unsupervised ensembles and phase-diagram scans.

Linearizing the overlap equations around the zero solution gives
``q_u ~ P q_u`` with ``P_ts = lambda_t lambda_s C_ts^2 alpha_s``.  ``P`` is
similar to the symmetric PSD matrix ``R_st = sqrt(alpha_s alpha_t) lambda_s
lambda_t C_st^2``, and classification is impossible exactly when the largest
eigenvalue of ``R`` is at most one.
"""
from __future__ import annotations

import csv
import io
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import EnsembleConfig, ValidatedEnsemble, validate
from .solver import SolverOptions, risk_report

# mu within this distance of 1 counts as the boundary, reported infeasible
BOUNDARY_TOL = 1e-9


class NotUnsupervisedError(ValueError):
    pass


class OutOfRangeError(ValueError):
    pass


@dataclass(frozen=True)
class FeasibilitySpectrum:
    R: np.ndarray
    eigenvalues: np.ndarray

    @property
    def max_eigenvalue(self) -> float:
        return float(self.eigenvalues[-1])

    @property
    def feasible(self) -> bool:
        return self.max_eigenvalue > 1.0 + BOUNDARY_TOL


def feasibility_matrix(ens: ValidatedEnsemble) -> np.ndarray:
    w = np.sqrt(ens.alpha) * ens.lam
    R = w[:, None] * ens.C**2 * w[None, :]
    return 0.5 * (R + R.T)


def spectrum(ens: ValidatedEnsemble) -> FeasibilitySpectrum:
    R = feasibility_matrix(ens)
    return FeasibilitySpectrum(R, np.linalg.eigvalsh(R))


def feasibility(ens: ValidatedEnsemble) -> tuple[bool, FeasibilitySpectrum]:
    """Whether the tasks of an unsupervised ensemble can be classified better than chance."""
    if not ens.unsupervised:
        t = int(np.flatnonzero(ens.eta > 0)[0])
        raise NotUnsupervisedError(
            f"eta[{t}] = {ens.eta[t]} > 0: labeled data removes the phase transition"
        )
    spec = spectrum(ens)
    return spec.feasible, spec


def two_task_boundary(c: float, lambda1: float) -> float:
    """``lambda2`` on the impossible-region boundary of two tasks with ``alpha = (1, 1)``.

    Solves ``(1 - l1^2)(1 - l2^2) = c^4 l1^2 l2^2`` for ``l2`` in ``[0, 1]``.
    """
    if not 0.0 <= c <= 1.0:
        raise OutOfRangeError(f"c must lie in [0, 1], got {c}")
    if not 0.0 <= lambda1 <= 1.0:
        raise OutOfRangeError(f"lambda1 must lie in [0, 1], got {lambda1}")
    if c == 0.0:
        return 1.0
    a = 1.0 - lambda1**2
    return float(np.sqrt(a / (a + c**4 * lambda1**2)))


def equal_correlation_threshold(T: int, c: float) -> float:
    """SNR at or below which ``T`` equicorrelated tasks with ``alpha = 1`` are all impossible."""
    if T < 1 or int(T) != T:
        raise OutOfRangeError(f"T must be a positive integer, got {T}")
    if not 0.0 <= c <= 1.0:
        raise OutOfRangeError(f"c must lie in [0, 1], got {c}")
    return 1.0 / np.sqrt(1.0 + (T - 1) * c**2)


# -- grid scans -------------------------------------------------------------

_AXIS_RE = re.compile(r"^(lambda|sigma|alpha|eta)(\d+)$|^c(?:(\d)(\d))?$")


@dataclass(frozen=True)
class Axis:
    """Swept parameter: ``lambdaK``, ``sigmaK``, ``alphaK``, ``etaK``, ``c`` or ``cST``.

    Task indices are 1-based.  ``c`` sets every off-diagonal entry of ``C``;
    ``cST`` sets the symmetric pair ``(S, T)``.
    """

    name: str
    start: float
    stop: float
    steps: int

    def __post_init__(self) -> None:
        if not _AXIS_RE.match(self.name):
            raise OutOfRangeError(f"unknown sweep parameter {self.name!r}")
        if self.steps < 1:
            raise OutOfRangeError(f"axis {self.name}: steps must be >= 1")
        if self.steps == 1 and self.start != self.stop:
            raise OutOfRangeError(f"axis {self.name}: one step needs start == stop")

    @property
    def values(self) -> np.ndarray:
        return np.linspace(self.start, self.stop, self.steps)


def apply_axis(cfg: EnsembleConfig, name: str, value: float) -> EnsembleConfig:
    m = _AXIS_RE.match(name)
    if m is None:
        raise OutOfRangeError(f"unknown sweep parameter {name!r}")
    kind, idx, s, t = m.groups()
    if kind is None:
        C = np.array(cfg.C)
        if s is None:
            C[~np.eye(cfg.T, dtype=bool)] = value
        else:
            i, j = int(s) - 1, int(t) - 1
            if not (0 <= i < cfg.T and 0 <= j < cfg.T) or i == j:
                raise OutOfRangeError(f"{name}: no such off-diagonal entry for T={cfg.T}")
            C[i, j] = C[j, i] = value
        # perfectly correlated tasks make C singular but remain meaningful
        return cfg.replace(C=C, allow_semidefinite=cfg.allow_semidefinite or abs(value) >= 1.0)
    k = int(idx) - 1
    if not 0 <= k < cfg.T:
        raise OutOfRangeError(f"{name}: task index out of range for T={cfg.T}")
    if kind == "lambda":
        if value < 0:
            raise OutOfRangeError(f"{name} must be >= 0, got {value}")
        arr, kind = np.array(cfg.sigma), "sigma"
        value = np.inf if value == 0 else 1.0 / np.sqrt(value)
    else:
        arr = np.array(getattr(cfg, kind))
    arr[k] = value
    return cfg.replace(**{kind: arr})


@dataclass(frozen=True)
class PhaseGrid:
    """Row-major grid: ``mu[i, j]`` belongs to ``axes[0].values[i]``, ``axes[1].values[j]``."""

    axes: tuple[Axis, ...]
    mu: np.ndarray
    feasible: np.ndarray
    risk: np.ndarray | None = None  # shape grid + (T,)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.steps for a in self.axes)


def _cell(template: ValidatedEnsemble, axes: Sequence[Axis], point: tuple[float, ...],
          with_risk: bool, options: SolverOptions | None):
    cfg = template.config
    for ax, v in zip(axes, point):
        cfg = apply_axis(cfg, ax.name, v)
    ens = validate(cfg)
    feasible, spec = feasibility(ens)
    risk = risk_report(ens, options).risk if with_risk else None
    return spec.max_eigenvalue, feasible, risk


def _touches_C(name: str) -> bool:
    return name.startswith("c")


def _field(name: str) -> str:
    if _touches_C(name):
        return "C"
    kind = _AXIS_RE.match(name).group(1)
    return "sigma" if kind == "lambda" else kind


def _batched(template: ValidatedEnsemble, axes: Sequence[Axis]):
    """``(mu, feasible)`` for every cell without building per-cell configs.

    Each axis edits one field, so validating every axis value on its own
    covers every cell; the spectra are then computed in one stacked call.
    """
    shape = tuple(a.steps for a in axes)
    cfg = template.config
    fields = {f: np.broadcast_to(getattr(cfg, f), shape + getattr(cfg, f).shape).copy()
              for f in ("C", "sigma", "alpha", "eta")}
    for k, ax in enumerate(axes):
        field = _field(ax.name)
        for i, v in enumerate(ax.values):
            edited = validate(apply_axis(cfg, ax.name, v))
            index = (slice(None),) * k + (i,)
            if field == "C":
                fields["C"][index] = edited.C
            else:
                t = int(_AXIS_RE.match(ax.name).group(2)) - 1
                fields[field][index + (Ellipsis, t)] = getattr(edited, field)[t]
    if np.any(fields["eta"] > 0):
        idx = np.unravel_index(int(np.argmax(np.any(fields["eta"] > 0, axis=-1))), shape)
        t = int(np.flatnonzero(fields["eta"][idx] > 0)[0])
        raise NotUnsupervisedError(
            f"eta[{t}] = {fields['eta'][idx][t]} > 0: labeled data removes the phase transition"
        )
    w = np.sqrt(fields["alpha"]) * (1.0 / fields["sigma"]) ** 2
    R = w[..., :, None] * fields["C"] ** 2 * w[..., None, :]
    R = 0.5 * (R + np.swapaxes(R, -1, -2))
    mu = np.linalg.eigvalsh(R)[..., -1]
    return mu, mu > 1.0 + BOUNDARY_TOL


def scan(template: ValidatedEnsemble, axes: Sequence[Axis], with_risk: bool = False,
         options: SolverOptions | None = None, threads: int | None = None) -> PhaseGrid:
    """Evaluate feasibility (and optionally the solver risk) on a 1- or 2-D grid.

    Cells are independent; ``threads`` only changes wall time, never output.
    """
    axes = tuple(axes)
    if not 1 <= len(axes) <= 2:
        raise OutOfRangeError(f"scan needs one or two axes, got {len(axes)}")
    shape = tuple(a.steps for a in axes)
    if not with_risk and sum(_touches_C(a.name) for a in axes) < 2:
        mu, feasible = _batched(template, axes)
        return PhaseGrid(axes, mu, feasible)

    values = [a.values for a in axes]
    points = [tuple(v[i] for v, i in zip(values, idx)) for idx in np.ndindex(*shape)]

    def work(p):
        return _cell(template, axes, p, with_risk, options)

    if threads == 1 or len(points) == 1:
        results = [work(p) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, points))

    mu = np.array([r[0] for r in results]).reshape(shape)
    feasible = np.array([r[1] for r in results], dtype=bool).reshape(shape)
    risk = None
    if with_risk:
        risk = np.array([r[2] for r in results]).reshape(shape + (template.T,))
    return PhaseGrid(axes, mu, feasible, risk)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def grid_csv(grid: PhaseGrid) -> str:
    """CSV text: ``axis1[,axis2],mu,feasible[,risk_task1,...]`` in row-major order."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [f"axis{k + 1}" for k in range(len(grid.axes))] + ["mu", "feasible"]
    if grid.risk is not None:
        header += [f"risk_task{t + 1}" for t in range(grid.risk.shape[-1])]
    w.writerow(header)
    for idx in np.ndindex(*grid.shape):
        row = [fmt(a.values[i]) for a, i in zip(grid.axes, idx)]
        row += [fmt(grid.mu[idx]), "1" if grid.feasible[idx] else "0"]
        if grid.risk is not None:
            row += [fmt(r) for r in grid.risk[idx]]
        w.writerow(row)
    return buf.getvalue()
