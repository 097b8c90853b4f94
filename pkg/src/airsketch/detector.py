"""Server-side on-the-fly subspace detection.

Received in-phase symbols are concatenated, whitened on the right so the
effective sketching map has identity covariance, and the estimate is the
dominant eigenspace of ``Phi Phi^T``, which is the maximum-likelihood
solution of the subspace alignment problem.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import eigh_descending


class InsufficientSketches(ValueError):
    """Fewer observed sketch columns than the requested subspace dimension."""


@dataclass(frozen=True)
class WhiteningContext:
    """Everything the server knows besides the symbols themselves.

    ``etas[i]`` is the denoising factor of the i-th received slot and
    ``global_trace`` is ``Tr(X^T X)`` assembled from one-time scalar feedback.
    """

    sigma2: float
    global_trace: float
    etas: tuple
    M: int
    I: int

    def __post_init__(self):
        if self.global_trace < 0:
            raise ValueError("global trace must be nonnegative")
        if any(e <= 0 for e in self.etas):
            raise ValueError("denoising factors must be positive")
        object.__setattr__(self, "etas", tuple(float(e) for e in self.etas))


@dataclass(frozen=True)
class EffectiveObservation:
    Phi: np.ndarray
    included_slots: tuple


@dataclass(frozen=True)
class SubspaceEstimate:
    U: np.ndarray
    r: int
    slot: int
    eigenvalues: np.ndarray
    basis: np.ndarray = field(repr=False)
    included_slots: tuple = ()


def accumulate(symbols):
    """Horizontal concatenation ``[Y_1, ..., Y_t]`` in the given order."""
    if not symbols:
        raise ValueError("no symbols to accumulate")
    mats = [np.asarray(getattr(s, "Y", s)) for s in symbols]
    shape = mats[0].shape
    for m in mats[1:]:
        if m.shape != shape:
            raise ValueError(f"inconsistent symbol shapes {shape} and {m.shape}")
    return np.hstack(mats)


def right_covariance(ctx, included_slots=None):
    """Diagonal of the right covariance ``D`` over the included slots.

    Under ``A_l = sqrt(eta_l) U_A`` every block is a scaled identity, so only
    the diagonal (length ``t' * M``) is returned.
    """
    slots = range(len(ctx.etas)) if included_slots is None else included_slots
    eta = np.array([ctx.etas[i] for i in slots])
    if eta.size == 0:
        raise ValueError("no slots included")
    half = 0.5 * ctx.I * ctx.sigma2
    norm = ctx.global_trace + half * eta.mean()
    if not norm > 0:
        raise ValueError("right-covariance normalizer is not positive")
    return np.repeat((ctx.global_trace + half * eta) / norm, ctx.M)


def right_covariance_general(global_trace, sigma2, I, beamformers):
    """Full block-diagonal ``D`` for arbitrary receive matrices ``A_l``."""
    blocks = [np.real(A @ A.conj().T) for A in beamformers]
    tM = sum(b.shape[0] for b in blocks)
    noise = 0.5 * I * sigma2
    D = np.zeros((tM, tM))
    i = 0
    for b in blocks:
        m = b.shape[0]
        D[i:i + m, i:i + m] = global_trace * np.eye(m) + noise * b
        i += m
    norm = global_trace + noise * sum(np.trace(b) for b in blocks) / tM
    return D / norm


def whiten(Y_hat, D, included_slots=()):
    """``Phi = Y_hat D^{-1/2}``; ``D`` is a diagonal vector or an SPD matrix."""
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        if D.shape[0] != Y_hat.shape[1] or not np.all(D > 0):
            raise ValueError("diagonal D must be positive with one entry per column")
        return EffectiveObservation(Y_hat / np.sqrt(D), tuple(included_slots))
    vals, vecs = np.linalg.eigh(0.5 * (D + D.T))
    if vals.min() <= 0:
        raise ValueError("D is not positive definite")
    root_inv = (vecs / np.sqrt(vals)) @ vecs.T
    return EffectiveObservation(Y_hat @ root_inv, tuple(included_slots))


def ml_subspace(obs, r, slot=None):
    """Dominant ``r``-dim eigenspace of ``Phi Phi^T``."""
    Phi = obs.Phi if isinstance(obs, EffectiveObservation) else np.asarray(obs)
    if r < 1:
        raise ValueError("r must be positive")
    if Phi.shape[1] < r:
        raise InsufficientSketches(
            f"{Phi.shape[1]} sketch columns cannot resolve an r={r} subspace; "
            f"keep streaming until t*M >= r")
    gammas, Q = eigh_descending(Phi @ Phi.T)
    slots = getattr(obs, "included_slots", ())
    if slot is None:
        slot = (max(slots) + 1) if slots else Phi.shape[1]
    return SubspaceEstimate(Q[:, :r], r, slot, gammas, Q, tuple(slots))


def ml_objective(Phi, basis, lam):
    """``Tr(Phi^T U Lambda^{-1} U^T Phi)`` for a full orthogonal ``basis``."""
    proj = basis.T @ Phi
    return float(np.sum((proj * proj).sum(axis=1) / np.asarray(lam)))


def detect(symbols, ctx, r, included_slots=None):
    """Aggregate, whiten and extract, using only ``included_slots`` (default all)."""
    if included_slots is None:
        included_slots = tuple(range(len(symbols)))
    included_slots = tuple(included_slots)
    if len(included_slots) * ctx.M < r:
        raise InsufficientSketches(
            f"{len(included_slots)} slots x M={ctx.M} < r={r}")
    Y_hat = accumulate([symbols[i] for i in included_slots])
    obs = whiten(Y_hat, right_covariance(ctx, included_slots), included_slots)
    return ml_subspace(obs, r, slot=len(symbols))
