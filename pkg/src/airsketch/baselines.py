"""One-shot SVD benchmarks sharing the same over-the-air stack.

Each device computes its local top-``r`` eigenspace and uploads either its
projector (centroid scheme) or its Procrustes-aligned basis (alignment
scheme) as a sequence of ``I x M`` matrix symbols, one coherence block each.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy.linalg import orthogonal_procrustes

from . import rng
from .channel import aircomp_round, draw_slot, transmit_powers, ReceiveBeamformer
from .detector import SubspaceEstimate
from .tensor import eigh_descending, principal_eigenspace

CENTROID_TAG = 0
BOOTSTRAP_TAG = 1
ALIGNMENT_TAG = 2


@dataclass(frozen=True)
class LocalEigenspace:
    device: int
    U: np.ndarray


@dataclass(frozen=True)
class UploadChannel:
    """Channel settings for a one-shot upload; ``ideal`` skips fading entirely.

    When ``audit`` is a list, every faded block appends its per-device
    transmit power divided by the ``I P`` budget.
    """

    root_seed: int
    M: int
    sigma2: float = 0.0
    P: float = 1.0
    N_r: int = 16
    N_t: int = 4
    gamma_shape: float = 1.2
    gamma_scale: float = 0.83
    ideal: bool = False
    audit: list = field(default=None, compare=False, repr=False)


def local_eigenspaces(blocks, r):
    return [LocalEigenspace(k, principal_eigenspace(X_k @ X_k.T, r)) for k, X_k in enumerate(blocks)]


def one_shot_cost(I, cols, M):
    """Symbol slots to upload an ``I x cols`` payload as ``I x M`` matrix symbols."""
    return math.ceil(cols / M) * I


def aircomp_upload(payloads, ctx, tag=0):
    """Over-the-air sum of equally shaped real ``I x C`` payloads.

    Returns ``(aggregate, etas)``. Columns are sent ``M`` at a time; each
    block's power normalization uses the payload block's Gram trace.
    """
    P_all = np.stack(payloads)
    K, I, C = P_all.shape
    M = ctx.M
    nblocks = math.ceil(C / M)
    padded = np.zeros((K, I, nblocks * M))
    padded[:, :, :C] = P_all
    chan_seed = rng.derive_seed(ctx.root_seed, rng.BASELINE_CHANNEL, tag)
    noise_seed = rng.derive_seed(ctx.root_seed, rng.BASELINE_NOISE, tag)
    out, etas = [], []
    for b in range(nblocks):
        sym = padded[:, :, b * M:(b + 1) * M]
        if ctx.ideal:
            channels = None
            bf = ReceiveBeamformer(b, 1.0, np.eye(M, ctx.N_r, dtype=complex))
        else:
            traces = np.einsum("kij,kij->k", sym, sym)
            channels, bf, _ = draw_slot(chan_seed, b, K, ctx.N_r, ctx.N_t, M, traces, ctx.P, I,
                                        ctx.gamma_shape, ctx.gamma_scale)
            if ctx.audit is not None:
                ctx.audit.append(transmit_powers(bf.A, channels, traces) / (I * ctx.P))
        rx = aircomp_round(list(sym), channels, bf, 0.0 if ctx.ideal else ctx.sigma2,
                           rng.substream(noise_seed, rng.NOISE, b))
        out.append(rx.Y)
        etas.append(bf.eta)
    return np.hstack(out)[:, :C], etas


def _estimate(S, r, slots):
    gammas, Q = eigh_descending(0.5 * (S + S.T))
    return SubspaceEstimate(Q[:, :r], r, slots, gammas, Q)


def centroid_svd_dtd(locals_, ctx, r, tag=CENTROID_TAG):
    """Top-``r`` eigenspace of the received average of local projectors."""
    _check(locals_, r)
    K = len(locals_)
    agg, etas = aircomp_upload([L.U @ L.U.T for L in locals_], ctx, tag)
    return _estimate(agg / K, r, len(etas))


def alignment_matrices(locals_, reference):
    return [orthogonal_procrustes(L.U, reference)[0] for L in locals_]


def alignment_svd_dtd(locals_, ctx, r, reference, tag=ALIGNMENT_TAG):
    """Average of Procrustes-aligned local bases, then its dominant eigenspace."""
    _check(locals_, r)
    reference = np.asarray(reference)
    if reference.shape != locals_[0].U.shape:
        raise ValueError(f"reference shape {reference.shape} != local basis shape {locals_[0].U.shape}")
    K = len(locals_)
    Js = alignment_matrices(locals_, reference)
    agg, etas = aircomp_upload([L.U @ J for L, J in zip(locals_, Js)], ctx, tag)
    P = agg / K
    return _estimate(P @ P.T, r, len(etas))


def _check(locals_, r):
    if not locals_:
        raise ValueError("no local eigenspaces")
    shapes = {L.U.shape for L in locals_}
    if len(shapes) != 1 or next(iter(shapes))[1] != r:
        raise ValueError(f"local eigenspaces must all be I x r={r}, got {shapes}")
