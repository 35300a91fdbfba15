"""The three-parameter model theta = (e, w, a) with the linear-attention scalar a.

The logit for bit x is

    e^2 [ (x - 1/2)(1 + a e^2)(1 + 2 w|w|) + w |w (1 + a e^2)| ] + b,

so the x-slope (the signal) is D = e^2 (1 + a e^2)(1 + 2 w|w|) and the
bias-optimized loss is the same function of D as in :mod:`markovgf.canonical`.
The x-independent term (which carries the |1 + a e^2| kink) is absorbed by
the optimal bias and therefore drops out of the bias-optimized gradients.

Functions acting on R^4 take parameters in the order (e, w, b, a); Hessians
are returned in the order (b, e, w, a).
"""

import math
from typing import NamedTuple

import numpy as np

from ._numerics import as_float, sigmoid
from .canonical import (
    CLASSIFY_TOL,
    INV_SQRT2,
    CriticalClass,
    _single,
    energy_values,
    expected_loss,
    optimal_logits,
    schur_reduce,
    signal_slope,
)
from .errors import DomainError, HessianUndefined

#: |1 + a e^2| below this (with e != 0, w != 0) makes the R^4 Hessian undefined.
STATION_GUARD = 1e-9


class Params3(NamedTuple):
    e: float
    w: float
    a: float


class AttnTerms(NamedTuple):
    z1: float
    z2: float
    phi0: float
    phi1: float
    f1: float
    f2: float


def _wabs(w):
    w = np.asarray(w, dtype=float)
    return w * np.abs(w)


def attn_signal(e, w, a):
    e2 = np.asarray(e, dtype=float) ** 2
    return as_float(e2 * (1.0 + a * e2) * (1.0 + 2.0 * _wabs(w)))


def _offset(e, w, a):
    """x-independent part e^2 w |w (1 + a e^2)| of the logit."""
    e2 = np.asarray(e, dtype=float) ** 2
    return e2 * _wabs(w) * np.abs(1.0 + a * e2)


def attn_logit(x, e, w, a, b):
    e2 = np.asarray(e, dtype=float) ** 2
    s = 1.0 + a * e2
    u = 1.0 + 2.0 * _wabs(w)
    return as_float(e2 * ((x - 0.5) * s * u + _wabs(w) * np.abs(s)) + b)


def attn_optimal_bias(kernel, e, w, a):
    d = attn_signal(e, w, a)
    z1, _ = optimal_logits(kernel, d)
    return as_float(z1 - 0.5 * np.asarray(d) - _offset(e, w, a))


def attn_terms(kernel, e, w, a, b=None):
    """Intermediate logits and residuals; ``b=None`` uses the optimal bias.

    ``z1``/``z2`` are the logits for x = 1 / x = 0.
    """
    if b is None:
        z1, z2 = optimal_logits(kernel, attn_signal(e, w, a))
    else:
        z1, z2 = attn_logit(1, e, w, a, b), attn_logit(0, e, w, a, b)
    phi1, phi0 = sigmoid(z1), sigmoid(z2)
    f1 = phi1 - phi0 + kernel.p + kernel.q - 1.0
    f2 = phi0 - kernel.p
    return AttnTerms(*(as_float(v) for v in (z1, z2, phi0, phi1, f1, f2)))


def attn_loss_with_bias(kernel, e, w, b, a):
    return expected_loss(kernel, attn_logit(1, e, w, a, b), attn_logit(0, e, w, a, b))


def attn_loss(kernel, e, w, a):
    z1, z0 = optimal_logits(kernel, attn_signal(e, w, a))
    return expected_loss(kernel, z1, z0)


def attn_grad(kernel, e, w, a):
    """(dL/de, dL/dw, dL/da) of the bias-optimized loss.

    All three components share the factor E[(f1 X + f2)(X - 1/2)].
    """
    e = np.asarray(e, dtype=float)
    e2 = e * e
    g = signal_slope(kernel, attn_signal(e, w, a))
    s = 1.0 + a * e2
    u = 1.0 + 2.0 * _wabs(w)
    de = g * 2.0 * e * u * (s + a * e2)
    dw = g * 4.0 * e2 * s * np.abs(w)
    da = g * e2 * e2 * u
    return as_float(de), as_float(dw), as_float(da)


def attn_grad_with_bias(kernel, e, w, b, a):
    """(dL/de, dL/dw, dL/db, dL/da) of the loss with explicit bias.

    Uses sign(1 + a e^2) for the kinked offset term; at 1 + a e^2 = 0 the
    returned value is the one with sign(0) := 0.
    """
    grads = np.zeros(4)
    for x, pix, p1 in _rows(kernel):
        z = attn_logit(x, e, w, a, b)
        dz, _ = _logit_derivs(x, e, w, a)
        grads += pix * (float(sigmoid(z)) - p1) * dz
    # dz is ordered (b, e, w, a); return (e, w, b, a)
    return float(grads[1]), float(grads[2]), float(grads[0]), float(grads[3])


def _rows(kernel):
    return ((0, kernel.pi0, kernel.p), (1, kernel.pi1, 1.0 - kernel.q))


def _logit_derivs(x, e, w, a):
    """First and second derivatives of the logit in the order (b, e, w, a).

    The logit is Q (m u + sgn(s) k) + b with Q = e^2 + a e^4, m = x - 1/2,
    k = w|w|, u = 1 + 2k and s = 1 + a e^2; sgn(s) is locally constant.
    """
    e, w, a = float(e), float(w), float(a)
    m = x - 0.5
    ss = float(np.sign(1.0 + a * e * e))
    aw, sw = abs(w), float(np.sign(w))
    k = w * aw
    u = 1.0 + 2.0 * k
    c = m * u + ss * k
    c_w = m * 4.0 * aw + ss * 2.0 * aw
    c_ww = (m * 4.0 + ss * 2.0) * sw
    q = e * e + a * e ** 4
    q_e = 2.0 * e + 4.0 * a * e ** 3
    q_a = e ** 4
    q_ee = 2.0 + 12.0 * a * e * e
    q_ea = 4.0 * e ** 3
    dz = np.array([1.0, q_e * c, q * c_w, q_a * c])
    d2z = np.zeros((4, 4))
    d2z[1, 1] = q_ee * c
    d2z[1, 2] = d2z[2, 1] = q_e * c_w
    d2z[1, 3] = d2z[3, 1] = q_ea * c
    d2z[2, 2] = q * c_ww
    d2z[2, 3] = d2z[3, 2] = q_a * c_w
    return dz, d2z


def attn_hessian_with_bias(kernel, e, w, b, a):
    """Analytic Hessian of L(e, w, b, a), ordering (b, e, w, a).

    Raises HessianUndefined on the kink 1 + a e^2 = 0 (with e, w != 0),
    which contains the stationary manifold.
    """
    e, w, b, a = (float(v) for v in (e, w, b, a))
    if e != 0.0 and w != 0.0 and abs(1.0 + a * e * e) < STATION_GUARD:
        raise HessianUndefined("loss is not twice differentiable where 1 + a e^2 = 0")
    h = np.zeros((4, 4))
    for x, pix, p1 in _rows(kernel):
        s = float(sigmoid(attn_logit(x, e, w, a, b)))
        dz, d2z = _logit_derivs(x, e, w, a)
        h += pix * (s * (1.0 - s) * np.outer(dz, dz) + (s - p1) * d2z)
    return h


def attn_hessian_on_axis(kernel, w, a):
    """Closed-form Hessian at (b, e, w, a) = (log(p/q), 0, w, a)."""
    p, q = kernel.p, kernel.q
    u = 1.0 + 2.0 * w * abs(w)
    return kernel.pi0 * kernel.pi1 * np.diag([1.0, 2.0 * (p + q - 1.0) * u, 0.0, 0.0])


def attn_reduced_hessian(kernel, e, w, a):
    """Hessian of the bias-optimized loss in the order (e, w, a)."""
    b = attn_optimal_bias(kernel, e, w, a)
    return schur_reduce(attn_hessian_with_bias(kernel, e, w, b, a))


def _attn_hits(kernel, e, w, a, tol):
    u = 1.0 + 2.0 * w * abs(w)
    s = 1.0 + a * e * e
    hits = []
    if abs(e * e * s * u - kernel.global_level) < tol:
        hits.append(CriticalClass.GLOBAL_MIN)
    if abs(e) < tol:
        if abs(w + INV_SQRT2) < tol:
            hits.append(CriticalClass.SADDLE)
        else:
            sgn = (kernel.switching - 1.0) * u
            if sgn > tol:
                hits.append(CriticalClass.LOCAL_MIN)
            elif sgn < -tol:
                hits.append(CriticalClass.LOCAL_MAX)
    elif abs(s) < tol and abs(u) < tol:
        hits.append(CriticalClass.STATION)
    return hits


def attn_classify(kernel, e, w, a, tol=CLASSIFY_TOL):
    """Critical-set label of a point (e, w, a) of R^3."""
    if tol <= 0:
        raise DomainError("tol must be positive")
    kernel.require_nondegenerate()
    hits = _attn_hits(kernel, float(e), float(w), float(a), tol)
    return _single(CriticalClass.NOT_CRITICAL, hits)


def attn_classify_r4(kernel, e, w, b, a, tol=CLASSIFY_TOL):
    """Critical-set label of a point (e, w, b, a) of R^4.

    Adds the bias conditions: the global set needs the offset equation
    e^2 w|w(1+ae^2)| + b = log(p(1-q)/(q(1-p)))/2, the axis and stationary
    families need b = log(p/q).
    """
    if tol <= 0:
        raise DomainError("tol must be positive")
    kernel.require_nondegenerate()
    e, w, b, a = (float(v) for v in (e, w, b, a))
    p, q = kernel.p, kernel.q
    hits = _attn_hits(kernel, e, w, a, tol)
    offset_target = 0.5 * math.log(p * (1.0 - q) / (q * (1.0 - p)))
    axis_bias_ok = abs(b - math.log(p / q)) < tol
    keep = []
    for h in hits:
        if h is CriticalClass.GLOBAL_MIN:
            if abs(float(_offset(e, w, a)) + b - offset_target) < tol:
                keep.append(h)
        elif axis_bias_ok:
            keep.append(h)
    return _single(CriticalClass.NOT_CRITICAL, keep)


def attn_energy(e, w, a):
    """Conserved quantity e^2 - (w^2 + sign(w) log|w|) - 2 a^2 of the 3D flow."""
    if np.any(np.asarray(w) == 0):
        raise DomainError("energy is undefined on the plane w = 0")
    return energy_values(e, w, a)
