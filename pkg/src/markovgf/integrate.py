"""Batched Dormand-Prince 5(4) integrator for autonomous ODE systems.

Every row of the state array is an independent trajectory ("lane") with its
own step size, clock and termination status, so a grid of initial conditions
is advanced with a handful of vectorized numpy calls per stage.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np

# Butcher tableau (Dormand & Prince 1980), 5th-order solution with FSAL.
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
# difference between the 5th- and embedded 4th-order weights
_E = np.array(
    [71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class Termination(str, Enum):
    GRAD_STOP = "GradStop"
    T_MAX = "TMax"
    STEP_LIMIT = "StepLimit"

    def __str__(self):
        return self.value


@dataclass
class BatchResult:
    t: np.ndarray
    y: np.ndarray
    f: np.ndarray
    status: list
    n_accepted: np.ndarray
    n_rejected: np.ndarray


def dopri5(
    rhs,
    y0,
    *,
    t_max,
    rtol,
    atol,
    h0,
    max_steps,
    converged=None,
    on_accept=None,
    tighten=None,
    tighten_factor=1e-2,
):
    """Integrate ``y' = rhs(y, lanes)`` for every row of ``y0``.

    ``rhs`` receives the current states of the active lanes and their indices.
    ``converged(y, f, lanes)`` returns a mask of lanes to stop with
    GradStop; it is also checked at t = 0. ``on_accept(lanes, t, y, f)`` is
    called after every accepted step. ``max_steps`` bounds the number of
    attempted steps per lane.

    ``tighten(y, f, lanes)`` marks lanes whose tolerances are multiplied once
    by ``tighten_factor``. Near a stable fixed point with a stiff normal
    direction the step size is stability-limited and the state hovers at the
    tolerance scale; tightening lets such lanes settle below a small
    gradient threshold.
    """
    y = np.array(y0, dtype=float, copy=True)
    if y.ndim != 2:
        raise ValueError("y0 must have shape (lanes, dim)")
    nl, dim = y.shape
    t = np.zeros(nl)
    h = np.full(nl, float(h0))
    n_acc = np.zeros(nl, dtype=np.int64)
    n_rej = np.zeros(nl, dtype=np.int64)
    status = [None] * nl
    tol_scale = np.ones(nl)
    all_lanes = np.arange(nl)
    f = rhs(y, all_lanes)
    active = np.ones(nl, dtype=bool)
    if converged is not None:
        done = converged(y, f, all_lanes)
        for i in np.flatnonzero(done):
            status[i] = Termination.GRAD_STOP
        active &= ~done

    while active.any():
        idx = np.flatnonzero(active)
        yi, fi = y[idx], f[idx]
        hi = np.minimum(h[idx], t_max - t[idx])[:, None]
        ks = [fi]
        for stage in range(1, 7):
            incr = sum(c * kk for c, kk in zip(_A[stage], ks) if c != 0.0)
            ks.append(rhs(yi + hi * incr, idx))
        y_new = yi + hi * sum(c * kk for c, kk in zip(_A[6], ks) if c != 0.0)
        f_new = ks[6]
        err_vec = hi * sum(c * kk for c, kk in zip(_E, ks) if c != 0.0)
        ts = tol_scale[idx][:, None]
        scale = ts * (atol + rtol * np.maximum(np.abs(yi), np.abs(y_new)))
        err = np.sqrt(np.mean((err_vec / scale) ** 2, axis=1))
        finite = np.all(np.isfinite(y_new), axis=1) & np.isfinite(err)
        ok = finite & (err <= 1.0)

        with np.errstate(divide="ignore"):
            factor = np.where(err > 0, _SAFETY * err ** -0.2, _MAX_FACTOR)
        factor = np.clip(factor, _MIN_FACTOR, _MAX_FACTOR)
        factor = np.where(ok, factor, np.minimum(factor, 1.0))
        factor = np.where(finite, factor, _MIN_FACTOR)
        hstep = hi[:, 0]

        acc = idx[ok]
        if acc.size:
            y[acc] = y_new[ok]
            f[acc] = f_new[ok]
            t[acc] = t[acc] + hstep[ok]
            n_acc[acc] += 1
            if on_accept is not None:
                on_accept(acc, t[acc], y[acc], f[acc])
        n_rej[idx[~ok]] += 1
        h[idx] = hstep * factor

        if acc.size and converged is not None:
            done = converged(y[acc], f[acc], acc)
            for i in acc[done]:
                status[i] = Termination.GRAD_STOP
                active[i] = False
        if acc.size and tighten is not None:
            fresh = acc[(tol_scale[acc] == 1.0) & active[acc]]
            if fresh.size:
                mark = tighten(y[fresh], f[fresh], fresh)
                tol_scale[fresh[mark]] = tighten_factor
        for i in idx:
            if not active[i]:
                continue
            if t[i] >= t_max * (1.0 - 1e-15):
                status[i] = Termination.T_MAX
                active[i] = False
            elif n_acc[i] + n_rej[i] >= max_steps:
                status[i] = Termination.STEP_LIMIT
                active[i] = False
    return BatchResult(t=t, y=y, f=f, status=status, n_accepted=n_acc, n_rejected=n_rej)
