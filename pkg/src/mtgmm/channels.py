"""Scalar and small-vector Gaussian channel primitives.

Two channels appear in the fixed-point equations:

* Rademacher input ``X = +-1`` observed as ``Y = sqrt(q) X + Z``.  Its
  overlap ``F(q) = E[tanh(sqrt(q) Z + q)]`` and Bayes risk
  ``P(Z > sqrt(q))`` live here.
* A centered Gaussian vector ``X ~ N(0, M)`` observed coordinatewise through
  ``Y_t = sqrt(snr_t) X_t + Z_t``.  The posterior mean is linear in ``Y``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import erfc


class NegativeInputError(ValueError):
    pass


class SingularSystemError(ArithmeticError):
    pass


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes and weights with ``E[g(Z)] ~= sum(weights * g(nodes))`` for ``Z ~ N(0, 1)``."""

    nodes: np.ndarray
    weights: np.ndarray
    degree: int

    def expect(self, values: np.ndarray) -> np.ndarray:
        """Contract ``values[..., k]`` (``g`` evaluated at node ``k``) against the weights."""
        return values @ self.weights

    @classmethod
    def gauss_hermite(cls, n: int) -> "QuadratureRule":
        x, w = np.polynomial.hermite_e.hermegauss(n)
        return cls(x, w / w.sum(), 2 * n - 1)

    @classmethod
    def trapezoid(cls, step: float = 0.1, half_width: float = 10.0) -> "QuadratureRule":
        """Uniform grid on ``[-half_width, half_width]`` weighted by the normal density.

        For integrands analytic in a strip this converges geometrically in
        ``1/step``; unlike Gauss-Hermite it stays accurate when ``tanh(sqrt(q) z + q)``
        has poles close to the real axis (moderate ``q``).
        """
        n = int(round(2 * half_width / step))
        x = np.linspace(-half_width, half_width, n + 1)
        w = np.exp(-0.5 * x**2)
        # degree: moments up to 8 are exact to ~1e-14 with the default grid
        return cls(x, w / w.sum(), 8)


DEFAULT_RULE = QuadratureRule.trapezoid()


def _check_nonnegative(q, name: str = "q") -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(np.isnan(q)):
        raise NegativeInputError(f"{name} must be >= 0, got {q}")
    return q


def _scalar_or_array(out: np.ndarray):
    return float(out) if out.ndim == 0 else out


def overlap_F(q, rule: QuadratureRule = DEFAULT_RULE):
    """Rademacher channel overlap ``E[tanh(sqrt(q) Z + q)]``.

    Accepts a scalar or an array of SNRs.  Values lie in ``[0, 1]``; for very
    large ``q`` the result rounds to exactly 1.

    The integrand is symmetrized over ``+-z``:
    ``(tanh(b + a) + tanh(b - a)) / 2 = tanh(2b) / (1 + cosh(2a) / cosh(2b))``
    with ``a = sqrt(q) z``, ``b = q``.  Every term is then nonnegative, which
    keeps full relative precision as ``q -> 0`` (the solver needs ``F`` at
    ``q ~ 1e-15`` near phase boundaries).
    """
    q = _check_nonnegative(q)
    a = 2.0 * np.abs(np.sqrt(q)[..., None] * rule.nodes)
    b = 2.0 * q[..., None]
    # cosh(a)/cosh(b) without overflow
    ratio = np.exp(a - b) * (1.0 + np.exp(-2.0 * a)) / (1.0 + np.exp(-2.0 * b))
    return _scalar_or_array(rule.expect(np.tanh(b) / (1.0 + ratio)))


def overlap_F_prime(q, rule: QuadratureRule = DEFAULT_RULE):
    """Derivative ``F'(q) = E[sech^2(x) (1 - tanh(x))]`` with ``x = sqrt(q) Z + q``.

    Obtained by Gaussian integration by parts; ``F'(0) = 1``.
    """
    q = _check_nonnegative(q)
    th = np.tanh(np.sqrt(q)[..., None] * rule.nodes + q[..., None])
    return _scalar_or_array(rule.expect((1.0 - th * th) * (1.0 - th)))


def std_normal_cdf(x):
    return 0.5 * erfc(-np.asarray(x, dtype=float) / np.sqrt(2.0))


def rademacher_bayes_risk(q):
    """Misclassification probability of ``sgn(Y)``: ``P(Z > sqrt(q)) = 1 - Phi(sqrt(q))``."""
    q = _check_nonnegative(q)
    return _scalar_or_array(0.5 * erfc(np.sqrt(q) / np.sqrt(2.0)))


def mmse_rademacher(y, q):
    """Posterior mean ``E[X | Y = y] = tanh(sqrt(q) y)``."""
    q = _check_nonnegative(q)
    return _scalar_or_array(np.tanh(np.sqrt(q) * np.asarray(y, dtype=float)))


def _factor(M: np.ndarray, snr: np.ndarray):
    M = np.asarray(M, dtype=float)
    snr = _check_nonnegative(snr, "snr")
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] != snr.shape[0]:
        raise ValueError(f"shape mismatch: M {M.shape}, snr {snr.shape}")
    root = np.sqrt(snr)
    W = root[:, None] * M  # D^{1/2} M
    S = np.eye(len(snr)) + W * root[None, :]  # I + D^{1/2} M D^{1/2}
    try:
        cho = scipy.linalg.cho_factor(S, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SingularSystemError(f"I + D^1/2 M D^1/2 is not positive definite: {exc}") from None
    return M, W, cho


def gaussian_vector_overlap(M, snr) -> np.ndarray:
    """Per-coordinate overlap ``E[X_t Xhat_t] = [M - M (I + D_snr M)^{-1}]_tt``.

    Evaluated through the symmetric form ``M D^{1/2} S^{-1} D^{1/2} M`` with
    ``S = I + D^{1/2} M D^{1/2}`` factored by Cholesky.
    """
    _, W, cho = _factor(M, snr)
    X = scipy.linalg.cho_solve(cho, W)
    return np.einsum("st,st->t", W, X)


def overlap_and_kernel(M, snr) -> tuple[np.ndarray, np.ndarray]:
    """Overlap together with ``K = M (I + D_snr M)^{-1}`` (symmetric).

    ``d overlap_t / d snr_s = K_ts ** 2``, which the solver uses for Newton
    steps.
    """
    M, W, cho = _factor(M, snr)
    G = W.T @ scipy.linalg.cho_solve(cho, W)
    G = 0.5 * (G + G.T)
    return np.diag(G).copy(), M - G


def gaussian_vector_mmse_matrix(M, snr) -> np.ndarray:
    """Matrix ``B`` with ``Xhat = B Y``: ``B = M D^{1/2} (I + D^{1/2} M D^{1/2})^{-1}``."""
    _, W, cho = _factor(M, snr)
    # B^T = S^{-1} D^{1/2} M since S is symmetric
    return scipy.linalg.cho_solve(cho, W).T
