"""Pure NumPy implementations of the hot kernels.

Used when the compiled extension is unavailable, or when ``FNES_KERNELS=python``.
Every function here has the same signature and semantics as its counterpart in
``_ckernels.pyx``; ``pairwise_sum`` is bit-identical between the two.
"""
import numpy as np


def pairwise_sum(values):
    """Sum a 1-D float64 array by a fixed binary tree (zero-padded to a power of two)."""
    a = np.ascontiguousarray(values, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    size = 1
    while size < a.size:
        size *= 2
    buf = np.zeros(size)
    buf[: a.size] = a
    while size > 1:
        half = size // 2
        buf[:half] = buf[:half] + buf[half:size]
        size = half
    return float(buf[0])


def invert_symbols(S, threads=1):
    """Batched inverse and determinant of real N x N matrices.

    Parameters
    ----------
    S : ndarray, shape (K, N, N)
    threads : int
        Ignored by this backend.

    Returns
    -------
    inv : ndarray, shape (K, N, N)
        Inverse of each matrix; zero where the matrix is exactly singular.
    det : ndarray, shape (K,)
    """
    S = np.ascontiguousarray(S, dtype=np.float64)
    det = np.linalg.det(S)
    inv = np.zeros_like(S)
    ok = det != 0.0
    if ok.any():
        inv[ok] = np.linalg.inv(S[ok])
    return inv, det


def apply_symbols(Sinv, rhs, scale=None, threads=1):
    """Return ``scale[k] * Sinv[k] @ rhs[k]`` for every k (complex rhs)."""
    out = np.einsum("kab,kb->ka", Sinv, rhs)
    if scale is not None:
        out *= np.asarray(scale)[:, None]
    return out
