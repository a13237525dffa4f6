"""Replica-symmetric overlaps and asymptotic Bayes risk.

The overlaps solve, for every task ``t``::

    q_u[t] = [M - M (I + D M)^{-1}]_tt,   D = diag(alpha * q_v)
    q_v[t] = eta[t] + (1 - eta[t]) * F(q_u[t])

and the risk of task ``t`` is ``1 - Phi(sqrt(q_u[t]))``.

Write ``G`` for the map ``q_v -> q_v_next``.  ``G`` is monotone and concave
on ``[eta, 1]``, and ``G(1) <= 1``, so the iteration started at ``q_v = 1``
decreases to the largest fixed point, which is the stable one.  Plain damped
iteration crawls near phase boundaries, so a Newton step is taken whenever
it provably stays above that fixed point: the current point is a
supersolution (``G(q) <= q``) and ``I - G'(q)`` is an M-matrix (spectral
radius of the nonnegative Jacobian below one).  Otherwise the damped step is
used.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import (
    DEFAULT_RULE,
    QuadratureRule,
    overlap_and_kernel,
    overlap_F,
    overlap_F_prime,
    rademacher_bayes_risk,
)
from .model import ValidatedEnsemble, effective_matrices

ZERO_SNAP = 1e-14
# slack for "G(q) <= q" comparisons at rounding level
_SUPER_SLACK = 1e-15
_POLISH_STEPS = 80


@dataclass(frozen=True)
class SolverOptions:
    damping: float = 0.5
    tol: float = 1e-12
    max_iter: int = 100_000
    newton: bool = True

    def __post_init__(self) -> None:
        if not 0 < self.damping <= 1:
            raise ValueError(f"damping must be in (0, 1], got {self.damping}")
        if not self.tol > 0:
            raise ValueError(f"tol must be > 0, got {self.tol}")
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")


@dataclass(frozen=True)
class Overlaps:
    q_u: np.ndarray
    q_v: np.ndarray
    iterations: int
    residual: float
    converged: bool = True


@dataclass(frozen=True)
class RiskReport:
    risk: np.ndarray
    overlaps: Overlaps

    def to_dict(self) -> dict:
        return {
            "q_u": self.overlaps.q_u.tolist(),
            "q_v": self.overlaps.q_v.tolist(),
            "risk": self.risk.tolist(),
            "iterations": self.overlaps.iterations,
            "residual": self.overlaps.residual,
        }


class NoConvergenceError(RuntimeError):
    """Raised when ``max_iter`` is exhausted; ``.overlaps`` holds the last iterate."""

    def __init__(self, message: str, overlaps: Overlaps):
        super().__init__(message)
        self.overlaps = overlaps


@dataclass
class _System:
    """Evaluates ``G`` and its Jacobian for one ensemble."""

    M: np.ndarray
    alpha: np.ndarray
    eta: np.ndarray
    rule: QuadratureRule = field(default=DEFAULT_RULE)

    def q_u(self, q_v: np.ndarray) -> np.ndarray:
        q_u, _ = overlap_and_kernel(self.M, self.alpha * q_v)
        return np.maximum(q_u, 0.0)

    def step(self, q_v: np.ndarray, jacobian: bool = False):
        q_u, K = overlap_and_kernel(self.M, self.alpha * q_v)
        q_u = np.maximum(q_u, 0.0)
        g = self.eta + (1.0 - self.eta) * overlap_F(q_u, self.rule)
        if not jacobian:
            return q_u, g, None
        # dG_t/dq_s = (1 - eta_t) F'(q_u_t) K_ts^2 alpha_s
        J = ((1.0 - self.eta) * overlap_F_prime(q_u, self.rule))[:, None] * K**2 * self.alpha[None, :]
        return q_u, g, J


def _system(ens: ValidatedEnsemble, rule: QuadratureRule) -> _System:
    return _System(effective_matrices(ens).M, np.asarray(ens.alpha), np.asarray(ens.eta), rule)


def iterate_once(ens: ValidatedEnsemble, q_v, rule: QuadratureRule = DEFAULT_RULE):
    """One undamped application of the fixed-point map.

    Returns ``(q_u, q_v_next)`` where ``q_u`` is the Gaussian-channel overlap
    at SNRs ``alpha * q_v`` and ``q_v_next = eta + (1 - eta) F(q_u)``.
    """
    q_v = np.asarray(q_v, dtype=float)
    if q_v.shape != (ens.T,):
        raise ValueError(f"q_v must have shape ({ens.T},), got {q_v.shape}")
    if np.any(q_v < 0) or np.any(q_v > 1):
        raise ValueError(f"q_v entries must lie in [0, 1], got {q_v}")
    q_u, g, _ = _system(ens, rule).step(q_v)
    return q_u, g


def _newton(sys: _System, q: np.ndarray, g: np.ndarray, J: np.ndarray):
    """Guarded Newton candidate from ``q``; ``None`` when the guard fails."""
    r = q - g
    if np.any(r < -_SUPER_SLACK):
        return None
    if np.max(np.abs(np.linalg.eigvals(J))) >= 1.0:
        return None
    try:
        step = np.linalg.solve(np.eye(len(q)) - J, r)
    except np.linalg.LinAlgError:
        return None
    cand = np.clip(q - np.maximum(step, 0.0), sys.eta, 1.0)
    _, g_c, J_c = sys.step(cand, jacobian=True)
    if np.any(g_c > cand + _SUPER_SLACK):
        return None
    return cand, g_c, J_c


def solve(ens: ValidatedEnsemble, options: SolverOptions | None = None, init=None,
          rule: QuadratureRule = DEFAULT_RULE) -> Overlaps:
    """Stable solution of the overlap equations.

    Parameters
    ----------
    ens : ValidatedEnsemble
    options : SolverOptions, optional
        Damping, tolerance and iteration cap.  ``residual`` is the sup-norm
        of the damped update ``damping * (G(q_v) - q_v)`` at the returned
        point; convergence means ``residual < tol``.
    init : array_like, optional
        Starting ``q_v``; defaults to all ones (the informative start).

    Raises
    ------
    NoConvergenceError
        If ``max_iter`` updates do not bring the residual below ``tol``.
    """
    opts = options or SolverOptions()
    sys = _system(ens, rule)
    q = np.ones(ens.T) if init is None else np.clip(np.asarray(init, dtype=float), sys.eta, 1.0)

    q_u, g, J = sys.step(q, jacobian=opts.newton)
    iterations = 0
    converged = False
    while True:
        residual = opts.damping * float(np.max(np.abs(g - q)))
        if residual < opts.tol:
            converged = True
            break
        if iterations >= opts.max_iter:
            break
        iterations += 1
        cand = _newton(sys, q, g, J) if opts.newton else None
        if cand is not None:
            q, g, J = cand
        else:
            q = q + opts.damping * (g - q)
            q_u, g, J = sys.step(q, jacobian=opts.newton)

    if converged and opts.newton:
        # Polish: at a double root (exactly on a phase boundary) Newton only
        # halves the distance per step, so keep going past ``tol``.
        for _ in range(_POLISH_STEPS):
            cand = _newton(sys, q, g, J)
            if cand is None:
                break
            move = float(np.max(q - cand[0]))
            q, g, J = cand
            if move <= 4 * np.finfo(float).eps * float(np.max(q)):
                break
        residual = opts.damping * float(np.max(np.abs(g - q)))

    q_u = sys.q_u(q)
    snapped = q_u < ZERO_SNAP
    q_u[snapped] = 0.0
    q_v = q.copy()
    q_v[snapped] = sys.eta[snapped]
    out = Overlaps(q_u, q_v, iterations, residual, converged)
    if not converged:
        raise NoConvergenceError(
            f"no convergence after {iterations} iterations (residual {residual:.3e} >= tol {opts.tol:.1e})",
            out,
        )
    return out


def risk_from_overlaps(ov: Overlaps) -> RiskReport:
    return RiskReport(np.asarray(rademacher_bayes_risk(ov.q_u), dtype=float).reshape(-1), ov)


def risk_report(ens: ValidatedEnsemble, options: SolverOptions | None = None) -> RiskReport:
    """Solve for the overlaps and map each ``q_u[t]`` to ``1 - Phi(sqrt(q_u[t]))``."""
    return risk_from_overlaps(solve(ens, options))


def single_task(lam: float, alpha: float, eta: float) -> ValidatedEnsemble:
    """One-task ensemble with the given SNR, sampling ratio and labeled fraction."""
    from .model import EnsembleConfig, validate

    return validate(EnsembleConfig.from_snr([[1.0]], [lam], [alpha], [eta]))
