"""Central finite-difference verification of analytic gradients."""

import numpy as np

from .errors import NumericError
from .tensor import Tensor


def _relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic))


def _eval(f):
    val = float(f().data)
    if not np.isfinite(val):
        raise NumericError("function evaluation is not finite")
    return val


def numerical_gradient(f, x, h=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x.data``."""
    flat = x.data.reshape(-1)
    num = np.empty(flat.size)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = _eval(f)
        flat[i] = old - h
        fm = _eval(f)
        flat[i] = old
        num[i] = (fp - fm) / (2.0 * h)
    return num.reshape(x.shape)


def finite_diff_check(f, x, h=1e-5):
    """Max over coordinates of |analytic - numeric| / max(1, |analytic|).

    ``f`` maps a Tensor to a scalar Tensor.  ``x`` is perturbed in place and
    restored afterwards.
    """
    if not isinstance(x, Tensor):
        x = Tensor(x)
    x.requires_grad = True
    x.grad = None
    loss = f(x)
    if not np.isfinite(loss.data).all():
        raise NumericError("function evaluation is not finite")
    loss.backward()
    analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
    numeric = numerical_gradient(lambda: f(x), x, h)
    return float(np.max(_relative_error(analytic, numeric), initial=0.0))


def check_parameters(loss_fn, params, h=1e-5):
    """Gradient check every tensor in ``params`` (name -> Tensor).

    ``loss_fn()`` rebuilds the loss from the current parameter values.
    Returns name -> max relative error.
    """
    for t in params.values():
        t.grad = None
    loss = loss_fn()
    loss.backward()
    report = {}
    for name, t in params.items():
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_gradient(loss_fn, t, h)
        report[name] = float(np.max(_relative_error(analytic, numeric), initial=0.0))
    return report
