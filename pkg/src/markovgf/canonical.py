"""The two-parameter canonical model theta = (e, w), with and without the bias b.

With tied embeddings the logit of the canonical model is affine in the current
bit ``x`` and its slope is the scalar *signal*

    D(e, w) = e**2 * (1 + 2 w |w|).

After minimizing over the bias, the loss depends on (e, w) only through D, so
every first- and second-order quantity here is assembled from two logits
``z1`` (x = 1) and ``z0`` (x = 0) with ``z1 - z0 = D``.

Gradient conventions follow ``f1 = sigma(z1) - sigma(z0) + p + q - 1`` and
``f2 = sigma(z0) - p``, so that ``dL/db = E[f1 X + f2]`` with X ~ Bern(pi1).
"""

from enum import Enum
import math
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from ._numerics import as_float, log_quadratic_root, sigmoid, softplus_neg
from .errors import AmbiguousClass, DomainError, NegativeRadicand, NoBracket

INV_SQRT2 = 1.0 / math.sqrt(2.0)

#: Energy of the saddle point (0, -1/sqrt(2)).
E_SAD = -(1.0 + math.log(2.0)) / 2.0

CLASSIFY_TOL = 1e-7
BOUNDARY_TOL = 1e-9


class Params2(NamedTuple):
    e: float
    w: float


class BiasedParams(NamedTuple):
    e: float
    w: float
    b: float


class F12Terms(NamedTuple):
    f1: float
    f2: float


class CriticalClass(str, Enum):
    GLOBAL_MIN = "GlobalMin"
    LOCAL_MIN = "LocalMin"
    LOCAL_MAX = "LocalMax"
    SADDLE = "Saddle"
    STATION = "Station"
    NOT_CRITICAL = "NotCritical"

    def __str__(self):
        return self.value


class BasinClass(str, Enum):
    TO_GLOBAL = "ToGlobal"
    TO_LOCAL_MIN = "ToLocalMin"
    TO_SADDLE = "ToSaddle"
    TO_LOCAL_MAX = "ToLocalMax"

    def __str__(self):
        return self.value

    @property
    def critical_class(self):
        return _BASIN_TO_CRITICAL[self]


_BASIN_TO_CRITICAL = {
    BasinClass.TO_GLOBAL: CriticalClass.GLOBAL_MIN,
    BasinClass.TO_LOCAL_MIN: CriticalClass.LOCAL_MIN,
    BasinClass.TO_SADDLE: CriticalClass.SADDLE,
    BasinClass.TO_LOCAL_MAX: CriticalClass.LOCAL_MAX,
}


def _wabs(w):
    w = np.asarray(w, dtype=float)
    return w * np.abs(w)


# --------------------------------------------------------------------------
# Shared machinery in terms of the logits (z1, z0)
# --------------------------------------------------------------------------


def expected_loss(kernel, z1, z0):
    """Exact cross-entropy given the two logits, as a four-term sum."""
    p, q = kernel.p, kernel.q
    return as_float(
        kernel.pi0 * ((1.0 - p) * softplus_neg(-z0) + p * softplus_neg(z0))
        + kernel.pi1 * (q * softplus_neg(-z1) + (1.0 - q) * softplus_neg(z1))
    )


def optimal_logits(kernel, signal):
    """Logits ``(z1, z0)`` at the loss-minimizing bias for a given signal D.

    Solves the stationarity condition in b, a quadratic in exp(z1).
    """
    signal = np.asarray(signal, dtype=float)
    z1 = log_quadratic_root(kernel.p / kernel.q, signal)
    return z1, z1 - signal


def f12_from_logits(kernel, z1, z0):
    s1, s0 = sigmoid(z1), sigmoid(z0)
    f1 = s1 - s0 + kernel.p + kernel.q - 1.0
    f2 = s0 - kernel.p
    return F12Terms(as_float(f1), as_float(f2))


def signal_slope(kernel, signal):
    """dL/dD at the optimal bias, i.e. E[(f1 X + f2)(X - 1/2)]."""
    z1, z0 = optimal_logits(kernel, signal)
    s1, s0 = sigmoid(z1), sigmoid(z0)
    return as_float(0.5 * (kernel.pi1 * (s1 - (1.0 - kernel.q)) - kernel.pi0 * (s0 - kernel.p)))


def signal(params):
    e, w = params[0], params[1]
    e = np.asarray(e, dtype=float)
    return e * e * (1.0 + 2.0 * _wabs(w))


# --------------------------------------------------------------------------
# Loss, bias and gradients
# --------------------------------------------------------------------------


def logit(x, params):
    """Logit ``e^2 (1 + 2 w|w|) x + b - e^2/2`` for a bit x."""
    e, w, b = params
    e2 = np.asarray(e, dtype=float) ** 2
    return as_float(e2 * (1.0 + 2.0 * _wabs(w)) * x + b - e2 / 2.0)


def loss_with_bias(kernel, params):
    """Exact next-token cross-entropy L(e, w, b)."""
    return expected_loss(kernel, logit(1, params), logit(0, params))


def optimal_bias(kernel, params):
    """Closed-form minimizer of L(e, w, b) over b."""
    e, w = params[0], params[1]
    d = signal(params)
    z1, _ = optimal_logits(kernel, d)
    return as_float(z1 - d + np.asarray(e, dtype=float) ** 2 / 2.0)


def loss(kernel, params):
    """Bias-optimized loss L(e, w) = min_b L(e, w, b)."""
    z1, z0 = optimal_logits(kernel, signal(params))
    return expected_loss(kernel, z1, z0)


def f12_terms(kernel, params):
    """f1, f2 at an explicit bias ``params = (e, w, b)``."""
    return f12_from_logits(kernel, logit(1, params), logit(0, params))


def f12_at_optimum(kernel, params):
    z1, z0 = optimal_logits(kernel, signal(params))
    return f12_from_logits(kernel, z1, z0)


def grad_with_bias(kernel, params):
    """Gradient (dL/de, dL/dw, dL/db) of the loss with explicit bias."""
    e, w, b = params
    e = np.asarray(e, dtype=float)
    f1, f2 = f12_terms(kernel, params)
    pi1 = kernel.pi1
    u = 1.0 + 2.0 * _wabs(w)
    m1 = pi1 * (f1 + f2)  # E[(f1 X + f2) X]
    m0 = pi1 * f1 + f2  # E[f1 X + f2]
    de = (2.0 * u * m1 - m0) * e
    dw = m1 * 4.0 * e * e * np.abs(w)
    return tuple(as_float(g) for g in (de, dw, m0))


def grad(kernel, params):
    """Gradient (dL/de, dL/dw) of the bias-optimized loss."""
    e, w = params
    e = np.asarray(e, dtype=float)
    g = signal_slope(kernel, signal(params))
    u = 1.0 + 2.0 * _wabs(w)
    return as_float(g * 2.0 * u * e), as_float(g * 4.0 * e * e * np.abs(w))


def grad_norm(kernel, params):
    de, dw = grad(kernel, params)
    return as_float(np.hypot(de, dw))


# --------------------------------------------------------------------------
# Hessians
# --------------------------------------------------------------------------


def hessian_with_bias(kernel, params):
    """Analytic Hessian of L(e, w, b) in the ordering (b, e, w).

    The loss is C^2 away from w = 0; at w = 0 the one-sided value with
    sign(0) := 0 is returned.
    """
    e, w, b = (float(v) for v in params)
    p, q = kernel.p, kernel.q
    aw, sw = abs(w), float(np.sign(w))
    u = 1.0 + 2.0 * w * aw
    h = np.zeros((3, 3))
    for x, pix, p1 in ((0, kernel.pi0, p), (1, kernel.pi1, 1.0 - q)):
        z = e * e * (u * x - 0.5) + b
        s = float(sigmoid(z))
        dz = np.array([1.0, 2.0 * e * (u * x - 0.5), 4.0 * e * e * aw * x])
        d2z = np.zeros((3, 3))
        d2z[1, 1] = 2.0 * (u * x - 0.5)
        d2z[1, 2] = d2z[2, 1] = 8.0 * e * aw * x
        d2z[2, 2] = 4.0 * e * e * sw * x
        h += pix * (s * (1.0 - s) * np.outer(dz, dz) + (s - p1) * d2z)
    return h


def hessian_with_bias_on_axis(kernel, w):
    """Closed-form Hessian at (b, e, w) = (log(p/q), 0, w), ordering (b, e, w)."""
    p, q = kernel.p, kernel.q
    k = kernel.pi0 * kernel.pi1
    u = 1.0 + 2.0 * w * abs(w)
    return k * np.diag([1.0, 2.0 * (p + q - 1.0) * u, 0.0])


def schur_reduce(h_full):
    """Hessian of the bias-minimized loss from the full Hessian (bias first).

    Implements H_tt - H_bt^T H_bb^{-1} H_bt.
    """
    h_full = np.asarray(h_full, dtype=float)
    hbb = h_full[0, 0]
    hbt = h_full[0, 1:]
    return h_full[1:, 1:] - np.outer(hbt, hbt) / hbb


def reduced_hessian(kernel, params):
    """Hessian of L(e, w) via the Schur complement at the optimal bias."""
    e, w = params
    b = optimal_bias(kernel, params)
    return schur_reduce(hessian_with_bias(kernel, BiasedParams(e, w, b)))


def reduced_hessian_on_axis(kernel, w):
    """Closed form pi0 pi1 diag(2 (p+q-1)(1+2w|w|), 0) at e = 0."""
    p, q = kernel.p, kernel.q
    u = 1.0 + 2.0 * w * abs(w)
    return kernel.pi0 * kernel.pi1 * np.diag([2.0 * (p + q - 1.0) * u, 0.0])


# --------------------------------------------------------------------------
# Critical points
# --------------------------------------------------------------------------


def _single(result, candidates):
    if len(candidates) > 1:
        raise AmbiguousClass(f"point satisfies several critical-set tests: {candidates}")
    return candidates[0] if candidates else result


def classify_critical(kernel, params, tol=CLASSIFY_TOL):
    """Label a point of R^2 by the critical set it belongs to (within ``tol``).

    The saddle test takes precedence over the local min/max sign tests, since
    the saddle is the common boundary of both families. A point that passes
    both the global-minimum test and the axis test raises AmbiguousClass.
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    kernel.require_nondegenerate()
    e, w = float(params[0]), float(params[1])
    u = 1.0 + 2.0 * w * abs(w)
    hits = []
    if abs(e * e * u - kernel.global_level) < tol:
        hits.append(CriticalClass.GLOBAL_MIN)
    if abs(e) < tol:
        hits.append(_axis_class(kernel, w, u, tol))
    hits = [h for h in hits if h is not CriticalClass.NOT_CRITICAL]
    return _single(CriticalClass.NOT_CRITICAL, hits)


def _axis_class(kernel, w, u, tol):
    if abs(w + INV_SQRT2) < tol:
        return CriticalClass.SADDLE
    sgn = (kernel.switching - 1.0) * u
    if sgn > tol:
        return CriticalClass.LOCAL_MIN
    if sgn < -tol:
        return CriticalClass.LOCAL_MAX
    return CriticalClass.NOT_CRITICAL


def classify_with_bias(kernel, params, tol=CLASSIFY_TOL):
    """Label a point (e, w, b) of R^3 among the global / local-min / saddle sets.

    No local-maximum family exists for the loss with explicit bias; the
    saddle family uses the non-strict inequality (p+q-1)(1+2w|w|) <= 0.
    """
    kernel.require_nondegenerate()
    e, w, b = (float(v) for v in params)
    p = kernel.p
    u = 1.0 + 2.0 * w * abs(w)
    hits = []
    if abs(e * e * u - kernel.global_level) < tol and abs(
        b - e * e / 2.0 - math.log(p / (1.0 - p))
    ) < tol:
        hits.append(CriticalClass.GLOBAL_MIN)
    if abs(e) < tol and abs(b - math.log(p / kernel.q)) < tol:
        if (kernel.switching - 1.0) * u > tol:
            hits.append(CriticalClass.LOCAL_MIN)
        else:
            hits.append(CriticalClass.SADDLE)
    return _single(CriticalClass.NOT_CRITICAL, hits)


def global_min_point(kernel, w, sign=1.0):
    """The point of the global-minimum set with given w, or None if there is none."""
    u = 1.0 + 2.0 * w * abs(w)
    ratio = kernel.global_level / u if u != 0 else -1.0
    if ratio <= 0:
        return None
    return Params2(math.copysign(math.sqrt(ratio), sign), float(w))


# --------------------------------------------------------------------------
# Energy and basins
# --------------------------------------------------------------------------


def energy_values(e, w, a=0.0):
    """Vectorized energy with NaN on w = 0 (no exception)."""
    e = np.asarray(e, dtype=float)
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = e * e - (w * w + np.sign(w) * np.log(np.abs(w))) - 2.0 * a * a
    return as_float(np.where(w == 0, np.nan, val))


def energy(params):
    """Conserved quantity e^2 - (w^2 + sign(w) log|w|) of the 2D gradient flow."""
    e, w = params
    if np.any(np.asarray(w) == 0):
        raise DomainError("energy is undefined on w = 0 (energy barrier)")
    return energy_values(e, w)


def saddle_contour(w):
    """Half-width g(w) = sqrt(w^2 - log(-w) + E_sad) of the saddle contour, w < 0."""
    w = float(w)
    if w >= 0:
        raise DomainError("saddle_contour requires w < 0")
    rad = w * w - math.log(-w) + E_SAD
    if rad < 0:
        if rad > -1e-15:
            return 0.0
        raise NegativeRadicand(f"radicand {rad!r} < 0 at w={w!r}")
    return math.sqrt(rad)


def basin(kernel, init, tol=BOUNDARY_TOL):
    """Predicted destination class of the 2D gradient flow started at ``init``.

    Boundary sets (the saddle contour |e| = g(w) and the e = 0 axis) are
    matched with absolute tolerance ``tol``.
    """
    kernel.require_nondegenerate()
    e, w = float(init[0]), float(init[1])
    ae = abs(e)
    on_axis = ae <= tol
    if kernel.switching > 1.0:
        if w >= 0:
            return BasinClass.TO_LOCAL_MIN
        if w < -INV_SQRT2:
            return BasinClass.TO_LOCAL_MAX if on_axis else BasinClass.TO_GLOBAL
        g = saddle_contour(w)
        if abs(ae - g) <= tol:
            return BasinClass.TO_SADDLE
        return BasinClass.TO_LOCAL_MIN if ae < g else BasinClass.TO_GLOBAL
    # p + q < 1
    if w > -INV_SQRT2:
        if on_axis:
            return BasinClass.TO_LOCAL_MAX
        # off-axis contours with w > -1/sqrt(2) all reach the global set
        return BasinClass.TO_GLOBAL
    g = saddle_contour(w)
    if abs(ae - g) <= tol:
        return BasinClass.TO_SADDLE
    return BasinClass.TO_LOCAL_MIN if ae < g else BasinClass.TO_GLOBAL


def _axis_energy(w):
    """f(w) = E(0, w) for w != 0."""
    return -(w * w + math.copysign(1.0, w) * math.log(abs(w)))


def _solve(fn, lo, hi, what):
    """Root of ``fn`` on [lo, hi]; ``lo``/``hi`` must bracket a sign change."""
    flo, fhi = fn(lo), fn(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        raise NoBracket(f"could not bracket {what} on [{lo!r}, {hi!r}]")
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    return brentq(fn, lo, hi, xtol=1e-15, rtol=4.0 * np.finfo(float).eps, maxiter=500)


def _expand(fn, inner, step, target_sign, limit=1e6):
    """Walk from ``inner`` by growing steps until ``fn`` has sign ``target_sign``."""
    x = inner + step
    while abs(x) < limit:
        v = fn(x)
        if np.isfinite(v) and np.sign(v) == target_sign:
            return x
        step *= 2.0
        x = inner + step
    raise NoBracket("bracket expansion left the search window")


def _toward(fn, edge, inside, target_sign):
    """Approach a singular endpoint ``edge`` from ``inside`` until sign matches."""
    gap = inside - edge
    for _ in range(200):
        x = edge + gap
        v = fn(x)
        if np.isfinite(v) and np.sign(v) == target_sign:
            return x
        gap /= 4.0
        if gap == 0 or edge + gap == edge:
            break
    raise NoBracket("bracket search toward singular endpoint failed")


def predicted_limit(kernel, init):
    """Limit point of the 2D flow predicted from energy conservation.

    The limit is the intersection of the contour E = E(init) with the critical
    set selected by :func:`basin`, found by bracketed root finding along the
    monotone branch of the relevant one-dimensional restriction.
    """
    e0, w0 = float(init[0]), float(init[1])
    cls = basin(kernel, init)
    sign_e = 1.0 if e0 >= 0 else -1.0
    if cls is BasinClass.TO_LOCAL_MAX:
        return Params2(e0, w0)
    if cls is BasinClass.TO_SADDLE:
        return Params2(0.0, -INV_SQRT2)
    c = kernel.global_level
    if w0 == 0.0:
        if cls is BasinClass.TO_LOCAL_MIN:
            return Params2(0.0, 0.0)
        return Params2(sign_e * math.sqrt(c), 0.0)
    e_target = float(energy_values(e0, w0))

    if cls is BasinClass.TO_LOCAL_MIN:
        fn = lambda w: _axis_energy(w) - e_target
        if w0 > 0:
            # f decreasing from +inf to -inf on (0, inf)
            lo = _toward(fn, 0.0, min(w0, 1.0), 1.0)
            hi = _expand(fn, 0.0, max(w0, 1.0), -1.0)
        elif w0 > -INV_SQRT2:
            # f decreasing from E_sad to -inf on (-1/sqrt(2), 0)
            lo = -INV_SQRT2
            hi = _toward(fn, 0.0, -INV_SQRT2 / 2.0, -1.0)
        else:
            # f increasing from -inf to E_sad on (-inf, -1/sqrt(2))
            lo = _expand(fn, -INV_SQRT2, -1.0, -1.0)
            hi = -INV_SQRT2
        w = _solve(fn, lo, hi, "local-minimum limit")
        return Params2(0.0, w)

    # global minimum: e^2 = c / u(w) on the contour
    def fn(w):
        u = 1.0 + 2.0 * w * abs(w)
        return c / u + _axis_energy(w) - e_target

    if w0 > 0:
        lo = _toward(fn, 0.0, min(w0, 1.0), 1.0)
        hi = _expand(fn, 0.0, max(w0, 1.0), -1.0)
    elif c > 0:
        # global set lies in (-1/sqrt(2), 0); fn decreasing from +inf to -inf
        lo = _toward(fn, -INV_SQRT2, -INV_SQRT2 / 2.0, 1.0)
        hi = _toward(fn, 0.0, -INV_SQRT2 / 2.0, -1.0)
    else:
        # global set lies in (-inf, -1/sqrt(2)); fn increasing from -inf to +inf
        lo = _expand(fn, -INV_SQRT2, -1.0, -1.0)
        hi = _toward(fn, -INV_SQRT2, -INV_SQRT2 - 0.5, 1.0)
    w = _solve(fn, lo, hi, "global-minimum limit")
    u = 1.0 + 2.0 * w * abs(w)
    return Params2(sign_e * math.sqrt(c / u), w)
