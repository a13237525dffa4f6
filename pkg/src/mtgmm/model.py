"""Ensemble parameters for multitask two-class Gaussian mixtures.

A task ``t`` draws points ``Y = V * U_t + sigma_t * Z`` with Rademacher labels
``V`` and unit-norm class means ``U_t`` whose Gram matrix is ``C``.  The
quantities carried here are the task-correlation matrix ``C``, the noise
scales ``sigma``, the sampling ratios ``alpha = N_t / D`` and the labeled
fractions ``eta``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from os import PathLike
from typing import Any, Mapping

import numpy as np

PD_RELATIVE_TOL = 1e-10
ENTRY_TOL = 1e-12


class ConfigError(ValueError):
    """Base class for invalid ensemble parameters."""


class NonSymmetricError(ConfigError):
    pass


class NonUnitDiagonalError(ConfigError):
    pass


class NotPositiveDefiniteError(ConfigError):
    pass


class OutOfRangeScalarError(ConfigError):
    pass


def _sigma_from_snr(lam) -> np.ndarray:
    lam = np.array(lam, dtype=float, ndmin=1)
    bad = np.flatnonzero(~(lam >= 0) | ~np.isfinite(lam))
    if bad.size:
        t = int(bad[0])
        raise OutOfRangeScalarError(f"lambda[{t}] = {lam[t]} must be finite and >= 0")
    with np.errstate(divide="ignore"):
        return 1.0 / np.sqrt(lam)


def _frozen(a: Any, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float, ndmin=ndim)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EnsembleConfig:
    """Raw (unchecked) parameter set of a ``T``-task problem."""

    C: np.ndarray
    sigma: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    allow_semidefinite: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "C", _frozen(self.C, 2))
        object.__setattr__(self, "sigma", _frozen(self.sigma, 1))
        object.__setattr__(self, "alpha", _frozen(self.alpha, 1))
        object.__setattr__(self, "eta", _frozen(self.eta, 1))

    @property
    def T(self) -> int:
        return len(self.sigma)

    @property
    def lam(self) -> np.ndarray:
        return (1.0 / self.sigma) ** 2

    @classmethod
    def from_snr(cls, C, lam, alpha, eta, allow_semidefinite: bool = False) -> "EnsembleConfig":
        return cls(C, _sigma_from_snr(lam), alpha, eta, allow_semidefinite)

    def replace(self, **changes: Any) -> "EnsembleConfig":
        """Copy with some fields replaced; ``lam=`` is accepted in place of ``sigma=``."""
        if "lam" in changes:
            changes["sigma"] = _sigma_from_snr(changes.pop("lam"))
        fields = dict(C=self.C, sigma=self.sigma, alpha=self.alpha, eta=self.eta,
                      allow_semidefinite=self.allow_semidefinite)
        fields.update(changes)
        return EnsembleConfig(**fields)

    def to_dict(self) -> dict:
        return {
            "C": self.C.tolist(),
            "sigma": self.sigma.tolist(),
            "alpha": self.alpha.tolist(),
            "eta": self.eta.tolist(),
            "allow_semidefinite": self.allow_semidefinite,
        }


@dataclass(frozen=True)
class ValidatedEnsemble:
    """An :class:`EnsembleConfig` that passed :func:`validate`.

    ``eigenvalues`` of ``C`` (ascending) serve as the positive-definiteness
    certificate.
    """

    config: EnsembleConfig
    eigenvalues: np.ndarray = field(repr=False)

    # convenience passthroughs
    @property
    def T(self) -> int:
        return self.config.T

    @property
    def C(self) -> np.ndarray:
        return self.config.C

    @property
    def sigma(self) -> np.ndarray:
        return self.config.sigma

    @property
    def lam(self) -> np.ndarray:
        return self.config.lam

    @property
    def alpha(self) -> np.ndarray:
        return self.config.alpha

    @property
    def eta(self) -> np.ndarray:
        return self.config.eta

    @property
    def unsupervised(self) -> bool:
        return bool(np.all(self.eta == 0))

    def replace(self, **changes: Any) -> "ValidatedEnsemble":
        return validate(self.config.replace(**changes))


@dataclass(frozen=True)
class EffectiveMatrices:
    M: np.ndarray
    lam: np.ndarray


def validate(config: EnsembleConfig | ValidatedEnsemble) -> ValidatedEnsemble:
    """Check shapes, symmetry, unit diagonal, definiteness and scalar ranges.

    ``sigma = inf`` (SNR zero, a task carrying no signal) is accepted so that
    phase diagrams can include their ``lambda = 0`` edge.

    ``C`` must be positive definite: its smallest eigenvalue has to exceed
    ``1e-10`` times the largest.  With ``config.allow_semidefinite`` the
    bound becomes ``>= -1e-10 * largest`` so that perfectly correlated tasks
    (``C_st = 1``) are accepted.  Each error names the offending entry.
    """
    if isinstance(config, ValidatedEnsemble):
        return config

    C = config.C
    T = config.T
    if T < 1:
        raise OutOfRangeScalarError("at least one task is required")
    if C.shape != (T, T):
        raise OutOfRangeScalarError(f"C has shape {C.shape}, expected ({T}, {T})")
    for name in ("alpha", "eta"):
        n = len(getattr(config, name))
        if n != T:
            raise OutOfRangeScalarError(f"{name} has length {n}, expected {T}")
    if not np.all(np.isfinite(C)):
        raise OutOfRangeScalarError("C has non-finite entries")

    asym = np.abs(C - C.T)
    if asym.max() > ENTRY_TOL:
        s, t = np.unravel_index(np.argmax(asym), asym.shape)
        raise NonSymmetricError(f"C[{s},{t}] = {C[s, t]} differs from C[{t},{s}] = {C[t, s]}")
    diag_err = np.abs(np.diag(C) - 1.0)
    if diag_err.max() > ENTRY_TOL:
        t = int(np.argmax(diag_err))
        raise NonUnitDiagonalError(f"C[{t},{t}] = {C[t, t]} must equal 1")

    eig = np.linalg.eigvalsh(C)
    if config.allow_semidefinite:
        ok = eig[0] >= -PD_RELATIVE_TOL * eig[-1]
    else:
        ok = eig[0] > PD_RELATIVE_TOL * eig[-1]
    if not ok:
        kind = "positive semidefinite" if config.allow_semidefinite else "positive definite"
        raise NotPositiveDefiniteError(
            f"C is not {kind}: smallest eigenvalue {eig[0]:.3e}, largest {eig[-1]:.3e}"
        )
    excess = np.abs(C) - 1.0
    if excess.max() > ENTRY_TOL:
        s, t = np.unravel_index(np.argmax(excess), excess.shape)
        raise OutOfRangeScalarError(f"|C[{s},{t}]| = {abs(C[s, t])} exceeds 1")

    for name, ok, rule in (
        ("sigma", lambda x: x > 0, "> 0"),
        ("alpha", lambda x: np.isfinite(x) & (x > 0), "> 0"),
        ("eta", lambda x: (x >= 0) & (x <= 1), "in [0, 1]"),
    ):
        values = getattr(config, name)
        bad = np.flatnonzero(~ok(values))
        if bad.size:
            t = int(bad[0])
            raise OutOfRangeScalarError(f"{name}[{t}] = {values[t]} must be {rule}")

    eig.setflags(write=False)
    return ValidatedEnsemble(config, eig)


def effective_matrices(ens: ValidatedEnsemble) -> EffectiveMatrices:
    """``M = D_{1/sigma} C D_{1/sigma}`` and the SNRs ``lambda = 1/sigma^2``."""
    inv = 1.0 / ens.sigma
    M = inv[:, None] * ens.C * inv[None, :]
    M = 0.5 * (M + M.T)
    M.setflags(write=False)
    lam = inv**2
    lam.setflags(write=False)
    return EffectiveMatrices(M, lam)


def config_from_dict(raw: Mapping[str, Any]) -> EnsembleConfig:
    """Build a config from the JSON schema.

    Keys: ``C``, exactly one of ``sigma`` / ``lambda``, ``alpha``, ``eta``
    and optionally ``allow_semidefinite``.
    """
    missing = [k for k in ("C", "alpha", "eta") if k not in raw]
    if missing:
        raise ConfigError(f"config is missing field(s): {', '.join(missing)}")
    has_sigma, has_lam = "sigma" in raw, "lambda" in raw
    if has_sigma == has_lam:
        raise ConfigError("config must contain exactly one of 'sigma' or 'lambda'")
    unknown = set(raw) - {"C", "sigma", "lambda", "alpha", "eta", "allow_semidefinite"}
    if unknown:
        raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")

    try:
        C = np.array(raw["C"], dtype=float, ndmin=2)
        scale = np.array(raw["sigma" if has_sigma else "lambda"], dtype=float, ndmin=1)
        alpha = np.array(raw["alpha"], dtype=float, ndmin=1)
        eta = np.array(raw["eta"], dtype=float, ndmin=1)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config arrays must be numeric: {exc}") from None

    lengths = {"C": C.shape[0], "alpha": len(alpha), "eta": len(eta),
               "sigma" if has_sigma else "lambda": len(scale)}
    if len(set(lengths.values())) != 1:
        raise ConfigError(f"array lengths disagree: {lengths}")
    semidef = bool(raw.get("allow_semidefinite", False))
    if has_sigma:
        return EnsembleConfig(C, scale, alpha, eta, semidef)
    return EnsembleConfig.from_snr(C, scale, alpha, eta, semidef)


def load_config(path: str | PathLike) -> ValidatedEnsemble:
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate(config_from_dict(raw))


def two_task(c: float, lam=(1.0, 1.0), alpha=(1.0, 1.0), eta=(0.0, 0.0), **kw) -> ValidatedEnsemble:
    """Two tasks with correlation ``c``; ``c = +-1`` switches on semidefinite mode."""
    C = np.array([[1.0, c], [c, 1.0]])
    kw.setdefault("allow_semidefinite", abs(c) >= 1.0)
    return validate(EnsembleConfig.from_snr(C, lam, alpha, eta, **kw))


def equicorrelated(T: int, c: float, lam: float, alpha: float = 1.0, eta: float = 0.0) -> ValidatedEnsemble:
    """``T`` tasks with ``C_st = c`` off the diagonal and common parameters."""
    C = np.full((T, T), float(c))
    np.fill_diagonal(C, 1.0)
    return validate(EnsembleConfig.from_snr(
        C, np.full(T, lam), np.full(T, alpha), np.full(T, eta),
        allow_semidefinite=abs(c) >= 1.0,
    ))
