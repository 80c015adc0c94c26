"""Central finite-difference stencils with optional Richardson extrapolation.

Step sizes follow the convention ``h = scale * (1 + |x|)`` so that stencils
stay well conditioned away from the origin.
"""

import numpy as np

DEFAULT_SCALE = 1e-5


def step_size(x, scale=DEFAULT_SCALE):
    return scale * (1.0 + float(np.linalg.norm(x)))


def partial(func, x, j, h):
    """d(func)/dx_j by the two-point central stencil; func may be array valued."""
    xp = np.array(x, dtype=float)
    xm = np.array(x, dtype=float)
    xp[j] += h
    xm[j] -= h
    return (np.asarray(func(xp)) - np.asarray(func(xm))) / (2.0 * h)


def gradient(f, x, h=None):
    x = np.asarray(x, dtype=float)
    if h is None:
        h = step_size(x)
    return np.array([partial(f, x, j, h) for j in range(x.size)])


def jacobian(func, x, h=None):
    """Jacobian J[i, j] = d(func_i)/dx_j of a vector-valued map."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = step_size(x)
    cols = [partial(func, x, j, h) for j in range(x.size)]
    return np.stack(cols, axis=-1)


def _hessian_once(f, x, h):
    d = x.size
    out = np.empty((d, d))
    f0 = f(x)
    for i in range(d):
        ei = np.zeros(d)
        ei[i] = h
        out[i, i] = (f(x + ei) - 2.0 * f0 + f(x - ei)) / h**2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = h
            val = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * h**2)
            out[i, j] = val
            out[j, i] = val
    return out


def hessian(f, x, h=None, richardson=True):
    """Dense Hessian of a scalar function. One Richardson level by default."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = step_size(x)
    coarse = _hessian_once(f, x, h)
    if not richardson:
        return coarse
    fine = _hessian_once(f, x, h / 2.0)
    return (4.0 * fine - coarse) / 3.0


def hessian_map(func, x, h=None, richardson=True):
    """Stack of Hessians, one per output component of a vector-valued map."""
    x = np.asarray(x, dtype=float)
    out_dim = np.asarray(func(x)).size
    tensors = []
    for i in range(out_dim):
        tensors.append(hessian(lambda y, i=i: float(np.asarray(func(y))[i]), x, h, richardson))
    return np.stack(tensors, axis=0)


def richardson_partial(func, x, j, h):
    """First partial with one Richardson level, error O(h^4)."""
    coarse = partial(func, x, j, h)
    fine = partial(func, x, j, h / 2.0)
    return (4.0 * fine - coarse) / 3.0
