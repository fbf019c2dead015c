"""ZCA whitening of feature maps.

Two routes to the inverse square root of the channel covariance:

* ``iterative``: coupled Newton-Schulz iteration built from tensor ops, so
  gradients flow through it (used for training);
* ``exact``: Jacobi eigendecomposition, treated as a constant (inference).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionError, NumericError
from .tensor import Tensor, as_tensor, no_grad, sqrt


@dataclass(frozen=True)
class WhitenConfig:
    eps: float = 1e-5
    ns_iters: int = 15
    mode: str = "iterative"

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"whitening eps must be > 0, got {self.eps}")
        if self.ns_iters < 1:
            raise ConfigError(f"ns_iters must be >= 1, got {self.ns_iters}")
        if self.mode not in ("iterative", "exact"):
            raise ConfigError(f"whitening mode must be 'iterative' or 'exact', got {self.mode!r}")


def _center(x):
    return x - x.mean(axis=-1, keepdims=True)


def _gram(xc):
    n = xc.shape[-1]
    s = (xc @ xc.mT) * (1.0 / n)
    # exact symmetry regardless of BLAS reduction order
    return (s + s.mT) * 0.5


def covariance(x):
    """Channel covariance of (..., C, N) features, divide-by-N convention."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] < 1:
        raise DimensionError(f"covariance expects (..., C, N) with N >= 1, got {x.shape}")
    return _gram(_center(x))


def isqrt_newton_schulz(a, iters=15):
    """Inverse square root of SPD ``a`` (..., C, C) by coupled Newton-Schulz.

    The input is scaled internally by its largest absolute row sum, an upper
    bound on the top eigenvalue, so the spectrum lies in (0, 1] where the
    iteration converges. Identity-like inputs stay exact fixed points.
    """
    a = as_tensor(a)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"isqrt_newton_schulz expects square matrices, got {a.shape}")
    c = a.shape[-1]
    eye = np.eye(c)
    if not np.all(np.isfinite(a.data)):
        raise NumericError("Newton-Schulz input must be finite")
    sign = np.sign(a.data)
    rowsum = np.abs(a.data).sum(axis=-1)
    pick = (np.arange(c) == rowsum.argmax(axis=-1)[..., None])[..., None]
    scale = (a * (sign * pick)).sum(axis=(-2, -1), keepdims=True)
    if np.any(scale.data <= 0):
        raise NumericError("Newton-Schulz input must not be the zero matrix")
    y = a / scale
    z = Tensor(np.broadcast_to(eye, a.shape))
    # a diverging iteration overflows; that is reported below, not warned about
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(iters):
            t = (3.0 * eye - z @ y) * 0.5
            y = y @ t
            z = t @ z
        out = z / sqrt(scale)

    scaled = a.data / scale.data
    r0 = np.linalg.norm(scaled - eye, axis=(-2, -1))
    with np.errstate(over="ignore", invalid="ignore"):
        r = np.linalg.norm(out.data @ a.data @ out.data - eye, axis=(-2, -1))
    if not np.all(np.isfinite(r)) or np.any(r > r0 * (1 + 1e-9) + 1e-9):
        raise NumericError(
            "Newton-Schulz iteration diverged (input not positive definite?); "
            "try a larger whitening eps"
        )
    return out


def isqrt_exact(a):
    """Inverse square root of SPD matrices (..., C, C) via Jacobi rotations."""
    a = np.asarray(a, dtype=np.float64)
    flat = a.reshape(-1, a.shape[-2], a.shape[-1])
    out = np.empty_like(flat)
    for i, m in enumerate(flat):
        w, v = kernels.jacobi_eigh(m)
        if w[0] <= 0:
            raise NumericError("matrix is not positive definite; increase whitening eps")
        out[i] = (v / np.sqrt(w)) @ v.T
    return out.reshape(a.shape)


def zca_whiten(x, cfg=WhitenConfig()):
    """Center each channel and decorrelate channels of (C, H, W) or (B, C, H, W).

    The channel means are removed and not restored.
    """
    x = as_tensor(x)
    if x.ndim not in (3, 4) or x.shape[-3] < 1:
        raise DimensionError(f"zca_whiten expects (C, H, W) or (B, C, H, W), got {x.shape}")
    shape = x.shape
    flat = x.reshape(*shape[:-2], shape[-2] * shape[-1])
    xc = _center(flat)
    eye = np.eye(shape[-3])
    if cfg.mode == "iterative":
        w = isqrt_newton_schulz(_gram(xc) + cfg.eps * eye, cfg.ns_iters)
    else:
        with no_grad():
            cov = _gram(xc).data + cfg.eps * eye
        w = Tensor(isqrt_exact(cov))
    return (w @ xc).reshape(shape)
