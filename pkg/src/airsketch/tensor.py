"""Dense tensors, mode-n unfolding and planted-spectrum test data.

Linearization is first-mode-fastest (Fortran order) and the unfolding follows
the Kolda-Bader convention, so ``unfold(T, n)`` has shape
``(I_n, prod_{j != n} I_j)`` with the remaining modes ordered increasingly,
earliest fastest. Modes are 0-based, like numpy axes.
"""

from dataclasses import dataclass, field

import numpy as np

from . import rng


@dataclass(frozen=True)
class DenseTensor:
    """An N-mode real tensor (N >= 2)."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim < 2:
            raise ValueError(f"a tensor needs at least 2 modes, got {data.ndim}")
        object.__setattr__(self, "data", data)

    @classmethod
    def from_flat(cls, dims, flat):
        dims = tuple(int(d) for d in dims)
        flat = np.asarray(flat, dtype=float)
        if any(d < 1 for d in dims):
            raise ValueError(f"dimensions must be positive, got {dims}")
        if flat.size != int(np.prod(dims)):
            raise ValueError(f"{flat.size} entries cannot fill a tensor of shape {dims}")
        return cls(flat.reshape(dims, order="F"))

    @property
    def dims(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def flat(self):
        """Entries in first-mode-fastest order."""
        return self.data.ravel(order="F")


def _check_mode(mode, ndim):
    if not 0 <= mode < ndim:
        raise IndexError(f"mode {mode} out of range for a {ndim}-mode tensor")


def unfold(tensor, mode):
    """Mode-``mode`` matricization of ``tensor`` (a DenseTensor or ndarray)."""
    data = tensor.data if isinstance(tensor, DenseTensor) else np.asarray(tensor)
    _check_mode(mode, data.ndim)
    return np.reshape(np.moveaxis(data, mode, 0), (data.shape[mode], -1), order="F")


def refold(matrix, mode, dims):
    """Inverse of :func:`unfold` for a tensor of shape ``dims``."""
    dims = tuple(dims)
    _check_mode(mode, len(dims))
    moved = (dims[mode],) + dims[:mode] + dims[mode + 1:]
    matrix = np.asarray(matrix)
    if matrix.shape != (dims[mode], int(np.prod(moved[1:]))):
        raise ValueError(f"matrix of shape {matrix.shape} is not a mode-{mode} unfolding of {dims}")
    return DenseTensor(np.moveaxis(np.reshape(matrix, moved, order="F"), 0, mode))


def _fix_signs(vecs):
    # largest-magnitude entry of each column made real positive
    idx = np.argmax(np.abs(vecs), axis=0)
    pivot = vecs[idx, np.arange(vecs.shape[1])]
    phase = pivot / np.abs(pivot)
    phase[np.abs(pivot) == 0] = 1.0
    return vecs / phase


def eigh_descending(M, hermitian_tol=1e-8):
    """Eigenvalues (descending) and matching eigenvectors of a Hermitian matrix.

    Eigenvectors carry a deterministic phase: the largest-magnitude entry of
    every column is real and positive.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix has non-finite entries")
    scale = max(np.abs(M).max(), 1.0)
    if np.abs(M - M.conj().T).max() > hermitian_tol * scale:
        raise ValueError("matrix is not symmetric/Hermitian")
    vals, vecs = np.linalg.eigh(M)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    return vals, _fix_signs(vecs)


def principal_eigenspace(M, r):
    """Top-``r`` eigenvectors of a symmetric PSD matrix as orthonormal columns."""
    M = np.asarray(M)
    if not 1 <= r <= M.shape[0]:
        raise ValueError(f"r={r} must lie in [1, {M.shape[0]}]")
    return eigh_descending(M)[1][:, :r]


def projector(U):
    return U @ U.conj().T


def orthonormal_basis(G):
    """Q factor of ``G`` with a nonnegative R diagonal (unique for full rank)."""
    q, r = np.linalg.qr(G)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


@dataclass(frozen=True)
class GroundTruth:
    """Planted SVD ``X = U_X diag(s) V_X^T`` with equal top-``r`` values."""

    left_basis: np.ndarray
    singular_values: np.ndarray
    right_basis: np.ndarray
    principal_dim: int

    @property
    def matrix(self):
        return (self.left_basis * self.singular_values) @ self.right_basis.T

    @property
    def principal(self):
        return self.left_basis[:, :self.principal_dim]

    @property
    def residual(self):
        """Sum of non-principal squared singular values."""
        return float(np.sum(self.singular_values[self.principal_dim:] ** 2))

    @property
    def total_energy(self):
        return float(np.sum(self.singular_values ** 2))


def planted_spectrum(I, r, xi):
    """``r`` ones followed by ``1/2^xi, 1/3^xi, ..., 1/(I-r+1)^xi``."""
    if not 1 <= r < I:
        raise ValueError(f"need 1 <= r < I, got r={r}, I={I}")
    if xi <= 0:
        raise ValueError(f"decay exponent must be positive, got {xi}")
    tail = 1.0 / np.arange(2, I - r + 2, dtype=float) ** xi
    return np.concatenate([np.ones(r), tail])


def synth_unfolding(I, J, r, xi, seed):
    """Random ``I x J`` unfolding with polynomially decaying residual spectrum.

    Returns ``(X, truth)``. Both singular bases are orthonormalized Gaussian
    matrices drawn from the DATA substream of ``seed``.
    """
    if I > J:
        raise ValueError(f"need I <= J, got I={I}, J={J}")
    s = planted_spectrum(I, r, xi)
    gen = rng.substream(seed, rng.DATA)
    U = orthonormal_basis(gen.standard_normal((I, I)))
    V = orthonormal_basis(gen.standard_normal((J, I)))
    truth = GroundTruth(U, s, V, r)
    return truth.matrix, truth


@dataclass(frozen=True)
class Partition:
    """Column split of a global unfolding across devices."""

    blocks: list
    permutation: np.ndarray
    traces: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "traces", np.array([float(np.sum(b * b)) for b in self.blocks]))

    @property
    def K(self):
        return len(self.blocks)

    @property
    def global_trace(self):
        return float(np.sum(self.traces))


def partition_columns(X, K, seed):
    """Shuffle the columns of ``X`` and deal them out in ``K`` near-equal blocks."""
    X = np.asarray(X)
    J = X.shape[1]
    if not 1 <= K <= J:
        raise ValueError(f"cannot spread {J} columns over K={K} devices")
    perm = rng.substream(seed, rng.PARTITION).permutation(J)
    chunks = np.array_split(perm, K)
    return Partition([X[:, c] for c in chunks], perm)
