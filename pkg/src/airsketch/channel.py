"""MIMO multiple-access channel and one over-the-air aggregation round.

Conventions
-----------
* Channels are complex ``N_r x N_t`` with i.i.d. CN(0, beta) entries, beta
  drawn from a Gamma(shape, scale) shadowing law.
* The receive beamformer is ``A = sqrt(eta) * U_A`` with ``U_A`` having
  orthonormal rows, so ``Tr(A^H A) = eta * M``.
* All Hermitian forms use the conjugate transpose.
"""

from dataclasses import dataclass

import numpy as np

from . import rng
from .tensor import eigh_descending

COND_LIMIT = 1e10


class IllConditionedChannel(ValueError):
    """Effective channel ``A H H^H A^H`` too close to singular for ZF."""

    def __init__(self, device, cond):
        super().__init__(f"device {device}: effective channel condition number {cond:.3g} "
                         f"exceeds {COND_LIMIT:.0e}")
        self.device = device
        self.cond = cond


@dataclass(frozen=True)
class ChannelRealization:
    slot: int
    device: int
    H: np.ndarray
    shadow_beta: float


@dataclass(frozen=True)
class ReceiveBeamformer:
    slot: int
    eta: float
    U_A: np.ndarray

    @property
    def A(self):
        return np.sqrt(self.eta) * self.U_A

    @property
    def M(self):
        return self.U_A.shape[0]


@dataclass
class ReceivedSymbol:
    slot: int
    Y: np.ndarray
    eta: float
    selected: bool = True


def sample_channel(root_seed, t, k, N_r, N_t, gamma_shape=1.2, gamma_scale=0.83, attempt=0):
    """Rayleigh channel with Gamma shadowing for device ``k`` in slot ``t``."""
    if not N_r >= N_t >= 1:
        raise ValueError(f"need N_r >= N_t >= 1, got N_r={N_r}, N_t={N_t}")
    gen = rng.substream(root_seed, rng.CHANNEL, t, k, attempt)
    beta = gen.gamma(gamma_shape, gamma_scale)
    h = (gen.standard_normal((N_r, N_t)) + 1j * gen.standard_normal((N_r, N_t))) / np.sqrt(2.0)
    return ChannelRealization(t, k, np.sqrt(beta) * h, float(beta))


def _stack(channels):
    return np.stack([c.H for c in channels])


def receive_unitary(channels, M):
    """Rows spanning the dominant M-dim subspace of the weighted channel projectors.

    Each device contributes ``lam_k * U_k U_k^H``, where ``U_k`` are the top
    ``N_t`` eigenvectors of ``H_k H_k^H`` and ``lam_k`` its ``N_t``-th
    eigenvalue. Returns an ``M x N_r`` matrix with orthonormal rows.
    """
    H = _stack(channels)
    K, N_r, N_t = H.shape
    if not 1 <= M <= N_t:
        raise ValueError(f"need 1 <= M <= N_t={N_t}, got M={M}")
    # left singular vectors of H = top-N_t eigenvectors of H H^H
    U, s, _ = np.linalg.svd(H, full_matrices=False)
    lam = s[:, -1] ** 2
    if np.any(lam <= np.finfo(float).eps * s[:, 0] ** 2):
        bad = int(np.argmin(lam))
        raise IllConditionedChannel(channels[bad].device, np.inf)
    avg = np.einsum("k,kij,klj->il", lam, U, U.conj()) / K
    avg = 0.5 * (avg + avg.conj().T)
    V = eigh_descending(avg)[1][:, :M]
    return V.conj().T


def effective_gram(U_A, channels):
    """Stack of ``U_A H_k H_k^H U_A^H`` over devices, shape ``(K, M, M)``."""
    G = U_A @ _stack(channels)
    return G @ np.conj(np.swapaxes(G, 1, 2))


def _inverse_traces(grams, channels):
    conds = np.linalg.cond(grams)
    bad = np.flatnonzero(~(conds <= COND_LIMIT))
    if bad.size:
        raise IllConditionedChannel(channels[bad[0]].device, float(conds[bad[0]]))
    return np.real(np.trace(np.linalg.inv(grams), axis1=1, axis2=2))


def denoising_factor(U_A, channels, local_traces, P, I):
    """Smallest ``eta`` meeting every device's power budget (weakest device binds)."""
    if P <= 0:
        raise ValueError(f"power budget must be positive, got {P}")
    local_traces = np.asarray(local_traces, dtype=float)
    if np.any(local_traces < 0):
        raise ValueError("local traces must be nonnegative")
    inv_tr = _inverse_traces(effective_gram(U_A, channels), channels)
    return float(np.max(local_traces * inv_tr) / (I * P))


def transmit_powers(A, channels, local_traces):
    """Expected per-device transmit energy ``Tr((A H H^H A^H)^{-1}) Tr(X_k^T X_k)``."""
    inv_tr = _inverse_traces(effective_gram(A, channels), channels)
    return np.asarray(local_traces, dtype=float) * inv_tr


def zf_beamformer(A, H):
    """Zero-forcing precoder ``(A H)^H (A H H^H A^H)^{-1}`` (``N_t x M``)."""
    AH = A @ H
    gram = AH @ AH.conj().T
    cond = np.linalg.cond(gram)
    if not cond <= COND_LIMIT:
        raise IllConditionedChannel(-1, float(cond))
    return AH.conj().T @ np.linalg.inv(gram)


def zf_beamformers(A, channels):
    """Vectorized :func:`zf_beamformer` over all devices, shape ``(K, N_t, M)``."""
    AH = A @ _stack(channels)
    AH_h = np.conj(np.swapaxes(AH, 1, 2))
    gram = AH @ AH_h
    _inverse_traces(gram, channels)
    return AH_h @ np.linalg.inv(gram)


def draw_slot(root_seed, t, K, N_r, N_t, M, local_traces, P, I,
              gamma_shape=1.2, gamma_scale=0.83, max_attempts=16):
    """Channels plus receive beamformer for one coherence block.

    Devices whose effective channel fails the ZF conditioning guard get a
    fresh realization (next attempt index). Returns
    ``(channels, beamformer, n_resampled)``.
    """
    attempts = [0] * K
    channels = [sample_channel(root_seed, t, k, N_r, N_t, gamma_shape, gamma_scale)
                for k in range(K)]
    resampled = 0
    while True:
        try:
            U_A = receive_unitary(channels, M)
            eta = denoising_factor(U_A, channels, local_traces, P, I)
            return channels, ReceiveBeamformer(t, eta, U_A), resampled
        except IllConditionedChannel as exc:
            k = exc.device
            attempts[k] += 1
            resampled += 1
            if attempts[k] >= max_attempts:
                raise
            channels[k] = sample_channel(root_seed, t, k, N_r, N_t, gamma_shape, gamma_scale,
                                         attempt=attempts[k])


def pinned_beamformer(t, M, N_r, sigma2):
    """Fixed receiver with ``A A^H = I / (10 sigma)``; used for bound validation."""
    if sigma2 <= 0:
        raise ValueError("pinned beamformer needs sigma2 > 0")
    U_A = np.eye(M, N_r, dtype=complex)
    return ReceiveBeamformer(t, 1.0 / (10.0 * np.sqrt(sigma2)), U_A)


def complex_noise(gen, shape, sigma2):
    """I.i.d. CN(0, sigma2) samples."""
    scale = np.sqrt(sigma2 / 2.0)
    return scale * (gen.standard_normal(shape) + 1j * gen.standard_normal(shape))


def aircomp_round(sketches, channels, beamformer, sigma2, noise):
    """Superpose ZF-precoded sketches over the channel and keep the in-phase part.

    ``sketches`` are per-device ``I x M`` real matrices (or LocalSketch).
    ``channels=None`` models ideal channel inversion (``A H B = I``).
    ``noise`` is a Generator or an int seed (NOISE substream of the slot).
    Returns a ReceivedSymbol holding ``Re{Y^T}`` of shape ``I x M``.
    """
    S = np.stack([getattr(s, "entries", s) for s in sketches])
    K, I, M = S.shape
    A = beamformer.A
    if A.shape[0] != M:
        raise ValueError(f"beamformer has {A.shape[0]} rows but sketches have {M} columns")
    St = np.swapaxes(S, 1, 2)
    if channels is None:
        Y = St.sum(axis=0).astype(complex)
    else:
        if len(channels) != K:
            raise ValueError(f"{len(channels)} channels for {K} sketches")
        B = zf_beamformers(A, channels)
        gains = (A @ _stack(channels)) @ B  # A H_k B_k, identity up to rounding
        Y = (gains @ St).sum(axis=0)
    if sigma2 > 0:
        gen = noise if isinstance(noise, np.random.Generator) else \
            rng.substream(noise, rng.NOISE, beamformer.slot)
        Y = Y + A @ complex_noise(gen, (A.shape[1], I), sigma2)
    return ReceivedSymbol(beamformer.slot, np.ascontiguousarray(Y.T.real), beamformer.eta)
