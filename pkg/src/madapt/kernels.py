"""Hot numeric kernels with numba and pure-numpy implementations.

Each kernel exists as ``<name>_numba`` (explicit loops, compiled when numba
is available) and ``<name>_numpy`` (vectorized).  The unsuffixed names
dispatch to the active backend; see ``madapt._accel`` for selection.
"""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _accel
from .errors import NumericError

__all__ = [
    "im2col", "col2im", "jacobi_eigh", "set_backend", "backend",
    "im2col_numpy", "col2im_numpy", "jacobi_eigh_numpy",
    "im2col_numba", "col2im_numba", "jacobi_eigh_numba",
]

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 60


# ---------------------------------------------------------------------------
# im2col / col2im
#
# xp is the already padded input (B, C, Hp, Wp); columns are laid out as
# (B, C*k*k, Ho*Wo) with row index (c*k + i)*k + j.
# ---------------------------------------------------------------------------

@_accel.optional_njit(cache=True)
def im2col_numba(xp, k, stride, ho, wo):
    B, C = xp.shape[0], xp.shape[1]
    cols = np.empty((B, C * k * k, ho * wo))
    for b in range(B):
        for c in range(C):
            for i in range(k):
                for j in range(k):
                    row = (c * k + i) * k + j
                    for y in range(ho):
                        yy = y * stride + i
                        base = y * wo
                        for x in range(wo):
                            cols[b, row, base + x] = xp[b, c, yy, x * stride + j]
    return cols


def im2col_numpy(xp, k, stride, ho, wo):
    B, C = xp.shape[:2]
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    # (B, C, Ho, Wo, k, k) -> (B, C, k, k, Ho, Wo)
    return np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(B, C * k * k, ho * wo)


@_accel.optional_njit(cache=True)
def col2im_numba(cols, B, C, hp, wp, k, stride, ho, wo):
    xp = np.zeros((B, C, hp, wp))
    for b in range(B):
        for c in range(C):
            for i in range(k):
                for j in range(k):
                    row = (c * k + i) * k + j
                    for y in range(ho):
                        yy = y * stride + i
                        base = y * wo
                        for x in range(wo):
                            xp[b, c, yy, x * stride + j] += cols[b, row, base + x]
    return xp


def col2im_numpy(cols, B, C, hp, wp, k, stride, ho, wo):
    xp = np.zeros((B, C, hp, wp))
    c6 = cols.reshape(B, C, k, k, ho, wo)
    for i in range(k):
        for j in range(k):
            xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += c6[:, :, i, j]
    return xp


# ---------------------------------------------------------------------------
# Cyclic Jacobi eigendecomposition of a symmetric matrix.
# Returns (eigenvalues, eigenvectors as columns, sweeps); sweeps == -1 means
# the off-diagonal norm never fell below tol * ||A||_F.
# ---------------------------------------------------------------------------

@_accel.optional_njit(cache=True)
def _jacobi_numba(a, tol, max_sweeps):
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    scale = 0.0
    for p in range(n):
        for q in range(n):
            scale += A[p, q] * A[p, q]
    scale = math.sqrt(scale)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for p in range(n):
            for q in range(p + 1, n):
                off += A[p, q] * A[p, q]
        if math.sqrt(2.0 * off) <= tol * scale:
            return np.diag(A).copy(), V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                for r in range(n):
                    arp = A[r, p]
                    arq = A[r, q]
                    A[r, p] = c * arp - s * arq
                    A[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = A[p, r]
                    aqr = A[q, r]
                    A[p, r] = c * apr - s * aqr
                    A[q, r] = s * apr + c * aqr
                A[p, q] = 0.0
                A[q, p] = 0.0
                for r in range(n):
                    vrp = V[r, p]
                    vrq = V[r, q]
                    V[r, p] = c * vrp - s * vrq
                    V[r, q] = s * vrp + c * vrq
    return np.diag(A).copy(), V, -1


def _jacobi_numpy(a, tol, max_sweeps):
    n = a.shape[0]
    A = a.copy()
    V = np.eye(n)
    scale = np.sqrt(np.sum(A * A))
    iu = np.triu_indices(n, 1)
    for sweep in range(max_sweeps + 1):
        off = np.sqrt(2.0 * np.sum(A[iu] ** 2))
        if off <= tol * scale:
            return np.diag(A).copy(), V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                elif theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                else:
                    t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                cp, cq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V, -1


def _jacobi_driver(impl, a, tol, max_sweeps):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"jacobi_eigh needs a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NumericError("jacobi_eigh: matrix contains non-finite entries")
    sym = 0.5 * (a + a.T)
    w, v, sweeps = impl(np.ascontiguousarray(sym), tol, max_sweeps)
    if sweeps < 0:
        raise NumericError(
            f"Jacobi eigendecomposition did not converge in {max_sweeps} sweeps"
        )
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def jacobi_eigh_numba(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    return _jacobi_driver(_jacobi_numba, a, tol, max_sweeps)


def jacobi_eigh_numpy(a, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    return _jacobi_driver(_jacobi_numpy, a, tol, max_sweeps)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

_BACKENDS = {
    "numba": (im2col_numba, col2im_numba, jacobi_eigh_numba),
    "numpy": (im2col_numpy, col2im_numpy, jacobi_eigh_numpy),
}
_active = "numba" if _accel.USE_NUMBA else "numpy"
im2col, col2im, jacobi_eigh = _BACKENDS[_active]


def backend():
    return _active


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"`` kernels; returns the previous name."""
    global _active, im2col, col2im, jacobi_eigh
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not _accel.HAVE_NUMBA:
        raise RuntimeError("numba is not installed")
    prev = _active
    _active = name
    im2col, col2im, jacobi_eigh = _BACKENDS[name]
    return prev
