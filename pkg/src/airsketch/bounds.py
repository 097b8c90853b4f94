"""Decomposition error, its two-term split, perturbation diagnostics and bounds."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import erfc


@dataclass(frozen=True)
class BoundInputs:
    """Spectrum plus noise accounting for one estimate.

    ``lam[j] = s[j]^2 + sigma2 / (2 t) * sum(etas)``, with ``t = len(etas)``
    the number of slots feeding the estimate.
    """

    singular_values: np.ndarray
    r: int
    M: int
    sigma2: float
    etas: tuple

    def __post_init__(self):
        object.__setattr__(self, "singular_values", np.asarray(self.singular_values, dtype=float))
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))
        if not self.etas:
            raise ValueError("bound inputs need at least one slot")

    @property
    def t(self):
        return len(self.etas)

    @property
    def noise_floor(self):
        return self.sigma2 / (2.0 * self.t) * sum(self.etas)

    @property
    def lam(self):
        return self.singular_values ** 2 + self.noise_floor

    @property
    def trace_lam(self):
        return float(np.sum(self.lam))


def noise_floor_from_beamformers(beamformers, sigma2):
    """``sigma2 / (2 t M) * sum_l Tr(A_l^H A_l)`` straight from the matrices."""
    tM = sum(A.shape[0] for A in beamformers)
    return sigma2 / (2.0 * tM) * sum(float(np.real(np.trace(A.conj().T @ A))) for A in beamformers)


def dtd_error(U, X):
    """``||(I - U U^T) X||_F^2``."""
    R = X - U @ (U.T @ X)
    return float(np.sum(R * R))


def error_decomposition(U, truth, rtol=1e-12):
    """``(sketch_term, residual_term)`` of the error for a planted ground truth."""
    s2 = truth.singular_values ** 2
    r = truth.principal_dim
    if np.ptp(s2[:r]) > rtol * max(s2[0], 1.0):
        raise ValueError("principal singular values must be equal for this decomposition")
    overlap = (U.T @ truth.left_basis[:, r:]) ** 2  # <u~_i, u_j>^2, i <= r < j
    gaps = s2[:r, None] - s2[None, r:]
    return float(np.sum(gaps[:U.shape[1]] * overlap)), float(np.sum(s2[r:]))


@dataclass(frozen=True)
class DeltaSummary:
    delta: np.ndarray
    mean: float
    fraction_ok: float
    undefined: int


def delta_diagnostics(Phi, inputs):
    """Perturbation ratios ``delta_ij`` for ``i <= r < j``.

    ``delta_ij = min(2|lt_i - l_i|, s_i^2 - s_j^2) / |lt_i - l_j|`` with ``lt``
    the eigenvalues of ``Phi Phi^T / (t M)``. A zero denominator gives +inf and
    is counted in ``undefined``.
    """
    Phi = np.asarray(Phi)
    n = Phi.shape[1]
    r = inputs.r
    lt = np.sort(np.linalg.eigvalsh(Phi @ Phi.T / n))[::-1]
    lam = inputs.lam
    s2 = inputs.singular_values ** 2
    num = np.minimum(2.0 * np.abs(lt[:r] - lam[:r])[:, None], s2[:r, None] - s2[None, r:])
    den = np.abs(lt[:r, None] - lam[None, r:])
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.inf)
    finite = np.isfinite(delta)
    return DeltaSummary(delta, float(delta[finite].mean()) if finite.any() else math.inf,
                        float(np.mean(delta <= 2.0)), int((~finite).sum()))


def _first_term_sum(inputs):
    s2 = inputs.singular_values ** 2
    r = inputs.r
    gaps = s2[:r, None] - s2[None, r:]
    if np.any(gaps <= 0):
        raise ValueError("bound requires a positive eigen-gap between principal and residual spectra")
    lam_j = inputs.lam[r:]
    return float(np.sum((lam_j ** 2 + lam_j * inputs.trace_lam)[None, :] / gaps))


def expected_error_bound(inputs):
    """Expected-error bound ``4/(tM) * sum_ij (l_j^2 + l_j Tr L)/(s_i^2 - s_j^2) + residual``."""
    residual = float(np.sum(inputs.singular_values[inputs.r:] ** 2))
    return 4.0 / (inputs.t * inputs.M) * _first_term_sum(inputs) + residual


def high_probability_bound(inputs, epsilon, kappa):
    """High-probability bound and the probability it holds with.

    Returns ``(bound, probability_floor)`` where the floor is
    ``(1 - exp(-eps^2 / (2 kappa^8))) * erf(kappa / sqrt(2))^(t M (I - r))``.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    residual = float(np.sum(inputs.singular_values[inputs.r:] ** 2))
    tM = inputs.t * inputs.M
    bound = 4.0 * (1.0 + epsilon) / tM * _first_term_sum(inputs) + residual
    n = tM * (inputs.singular_values.size - inputs.r)
    log_p = n * math.log1p(-erfc(kappa / math.sqrt(2.0)))
    floor = -math.expm1(-epsilon ** 2 / (2.0 * kappa ** 8)) * math.exp(log_p)
    return bound, min(max(floor, 0.0), 1.0)


def selection_bound(eta_th, M_tilde, r, sigma2, global_trace, c=1.0):
    """Selection bound ``c/M~ * (1 + r sigma2 eta_th / (2 Tr(X^T X)))^2`` (ordinal use)."""
    if M_tilde < 1:
        raise ValueError("need at least one selected sketch")
    return c / M_tilde * (1.0 + r * sigma2 * eta_th / (2.0 * global_trace)) ** 2


def scaling_fit(t, mean_error, residual, floor_margin=0.02):
    """Least-squares slope of ``log(err - residual)`` against ``log t``.

    Needs at least five points; those within ``floor_margin`` (relative) of
    the residual floor are dropped.
    """
    t = np.asarray(t, dtype=float)
    if t.size < 5:
        raise ValueError(f"need at least 5 points for a slope fit, got {t.size}")
    excess = np.asarray(mean_error, dtype=float) - residual
    keep = excess > floor_margin * abs(residual)
    if keep.sum() < 2:
        raise ValueError("fewer than two points above the residual floor")
    slope, _ = np.polyfit(np.log(t[keep]), np.log(excess[keep]), 1)
    return float(slope)
