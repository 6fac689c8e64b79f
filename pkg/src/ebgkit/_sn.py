"""Low-level comparison functions shared by the model-space and bound code.

Everything here is vectorised over numpy arrays and has no dependency on the
rest of the package.
"""

from __future__ import annotations

from functools import lru_cache
import math

import numpy as np
from scipy.special import gammaln

# Below this value of sqrt(|k|) * t the series branch of sn is used.
_SERIES_CUTOFF = 1e-3

_GL_ORDER = 8
_PANEL_WIDTH = 0.05
_MIN_PANELS = 50
_CHUNK = 256


def sphere_area(n: int) -> float:
    """Area of the unit ``n``-sphere in R^(n+1); ``sphere_area(0) == 2``."""
    if n < 0:
        raise ValueError(f"sphere dimension must be >= 0, got {n}")
    m = 0.5 * (n + 1)
    return 2.0 * math.pi**m / math.gamma(m)


def sn(k, t):
    """The constant-curvature comparison function.

    ``sin(sqrt(k) t)/sqrt(k)`` for ``k > 0`` (clamped to 0 from the conjugate
    time ``pi/sqrt(k)`` on), ``t`` for ``k == 0`` and ``sinh(sqrt(-k) t)/sqrt(-k)``
    for ``k < 0``.  Broadcasts over ``k`` and ``t``; returns a float for scalar
    input.
    """
    k_arr, t_arr = np.broadcast_arrays(np.asarray(k, dtype=float),
                                       np.asarray(t, dtype=float))
    a = np.sqrt(np.abs(k_arr))
    x = a * t_arr
    out = np.empty(k_arr.shape, dtype=float)

    small = x < _SERIES_CUTOFF
    if np.any(small):
        ts, ks = t_arr[small], k_arr[small]
        z = ks * ts * ts
        out[small] = ts * (1.0 - z / 6.0 + z * z / 120.0 - z**3 / 5040.0)

    pos = (~small) & (k_arr > 0)
    if np.any(pos):
        xp = x[pos]
        val = np.sin(xp) / a[pos]
        val[xp >= math.pi] = 0.0
        out[pos] = val

    neg = (~small) & (k_arr < 0)
    if np.any(neg):
        out[neg] = np.sinh(x[neg]) / a[neg]

    if out.ndim == 0:
        return float(out)
    return out


def conjugate_time(k):
    """First zero of ``sn(k, .)``; ``inf`` for ``k <= 0``."""
    k = np.asarray(k, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(k > 0, math.pi / np.sqrt(np.where(k > 0, k, 1.0)), np.inf)
    return float(out) if out.ndim == 0 else out


def _full_sine_power_integral(k: np.ndarray, n: int) -> np.ndarray:
    # int_0^{pi/sqrt(k)} (sin(sqrt(k) s)/sqrt(k))^n ds for k > 0
    log_beta = 0.5 * math.log(math.pi) + gammaln(0.5 * (n + 1)) - gammaln(0.5 * n + 1)
    return np.exp(log_beta - 0.5 * (n + 1) * np.log(k))


@lru_cache(maxsize=None)
def _gauss_legendre_unit(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _panel_nodes(times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Quadrature nodes covering [0, times[-1]] with panel edges at every time.

    Returns ``(nodes, weights, owner)`` where ``owner[i]`` is the index of the
    time interval the node belongs to.
    """
    t_max = float(times[-1])
    width = min(_PANEL_WIDTH, t_max / _MIN_PANELS) if t_max > 0 else _PANEL_WIDTH
    u, wu = _gauss_legendre_unit(_GL_ORDER)
    edges = np.concatenate(([0.0], times))
    nodes, weights, owner = [], [], []
    for i in range(len(times)):
        a, b = edges[i], edges[i + 1]
        if b <= a:
            continue
        npan = max(1, int(math.ceil((b - a) / width - 1e-9)))
        left = a + (b - a) * np.arange(npan) / npan
        h = (b - a) / npan
        nodes.append((left[:, None] + h * u[None, :]).ravel())
        weights.append(np.tile(h * wu, npan))
        owner.append(np.full(npan * _GL_ORDER, i))
    if not nodes:
        empty = np.empty(0)
        return empty, empty, np.empty(0, dtype=int)
    return np.concatenate(nodes), np.concatenate(weights), np.concatenate(owner)


def radial_power_integral(k, n: int, times) -> np.ndarray:
    """``int_0^t sn(k, s)^n ds`` for every ``k`` in ``k`` and ``t`` in ``times``.

    Composite Gauss-Legendre on uniform panels of width ``min(0.05, t_max/50)``.
    Past the conjugate time of a positive ``k`` the closed-form full integral is
    used, so the clamp never falls inside a panel.

    Returns an array of shape ``(len(k), len(times))``.
    """
    ks = np.atleast_1d(np.asarray(k, dtype=float))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("times must be nonnegative")
    if np.any(np.diff(times) < 0):
        raise ValueError("times must be ascending")
    out = np.zeros((ks.size, times.size))
    if times.size == 0 or times[-1] == 0.0:
        return out

    nodes, weights, owner = _panel_nodes(times)
    counts = np.bincount(owner, minlength=times.size)
    # index of the last node of each interval, -1 if the interval is empty
    last = np.cumsum(counts) - 1

    for start in range(0, ks.size, _CHUNK):
        kc = ks[start:start + _CHUNK]
        vals = sn(kc[:, None], nodes[None, :]) ** n * weights[None, :]
        cum = np.cumsum(vals, axis=1)
        block = np.where(last[None, :] >= 0, cum[:, np.maximum(last, 0)], 0.0)
        out[start:start + _CHUNK] = block

    positive = ks > 0
    if np.any(positive):
        kp = ks[positive]
        tc = math.pi / np.sqrt(kp)
        full = _full_sine_power_integral(kp, n)
        past = times[None, :] >= tc[:, None]
        out[positive] = np.where(past, full[:, None], out[positive])
    return out
