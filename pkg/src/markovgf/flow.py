"""Gradient flow of the bias-optimized loss in R^2 and R^3.

Trajectories are integrated in the coordinates (e, log|w|[, a]) with the sign
of w held fixed per trajectory. The flow never crosses w = 0, so this is a
global chart on each half-plane, and it keeps uniform relative precision in w.
The energy contains log|w| as a term, so that precision is what keeps the
energy drift small as w approaches 0. Initial points with w = 0 are pinned
to the plane w = 0.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import math

import numpy as np

from .attention import Params3, attn_classify, attn_loss
from .canonical import (
    INV_SQRT2,
    BasinClass,
    CriticalClass,
    Params2,
    basin,
    classify_critical,
    loss,
    saddle_contour,
    signal_slope,
)
from .errors import AmbiguousClass, DomainError, EnergyViolation
from .integrate import Termination, dopri5

#: Gradient threshold below which a TMax trajectory may be reported as saddle-suspect.
SADDLE_SUSPECT_GRAD = 1e-6

#: Lanes with |grad L| below this multiple of grad_stop get 100x tighter tolerances.
ENDGAME_FACTOR = 100.0

#: Tolerances tried in turn when labelling a limit point; the tightest match wins.
_CLASSIFY_LADDER = (1e-7, 1e-6, 1e-5, 1e-4)
_SUSPECT_LADDER = _CLASSIFY_LADDER + (1e-3,)

TerminatedBy = Termination


class Mode(str, Enum):
    CANONICAL2D = "canonical2d"
    ATTENTION3D = "attention3d"

    def __str__(self):
        return self.value

    @property
    def dim(self):
        return 2 if self is Mode.CANONICAL2D else 3


@dataclass(frozen=True)
class FlowConfig:
    initial_step: float = 1e-2
    rel_tol: float = 1e-10
    abs_tol: float = 1e-10
    grad_stop: float = 1e-9
    t_max: float = 1e4
    max_steps: int = 1_000_000

    def __post_init__(self):
        for name in ("initial_step", "rel_tol", "abs_tol", "grad_stop", "t_max", "max_steps"):
            v = getattr(self, name)
            if not (v > 0) or not math.isfinite(v):
                raise DomainError(f"FlowConfig.{name} must be positive and finite, got {v!r}")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    losses: np.ndarray
    energies: np.ndarray
    grad_norms: np.ndarray
    terminated_by: Termination
    mode: Mode
    kernel: object
    config: FlowConfig
    n_steps: int = 0
    n_rejected: int = 0

    def __len__(self):
        return len(self.times)

    @property
    def init(self):
        return self.point(0)

    @property
    def final(self):
        return self.point(-1)

    def point(self, i):
        row = self.states[i]
        if self.mode is Mode.CANONICAL2D:
            return Params2(float(row[0]), float(row[1]))
        return Params3(float(row[0]), float(row[1]), float(row[2]))


@dataclass
class LimitReport:
    theta_lim: tuple
    critical_class: CriticalClass
    energy_drift: float
    grad_norm_final: float
    loss_final: float
    terminated_by: Termination
    saddle_suspect: bool = False
    flag: str = ""


# --------------------------------------------------------------------------
# vector field in (e, log|w|, a) coordinates
# --------------------------------------------------------------------------


class _Field:
    """Right-hand side for a batch of lanes sharing one kernel and mode."""

    def __init__(self, kernel, mode, sw):
        self.kernel = kernel
        self.mode = mode
        self.sw = np.asarray(sw, dtype=float)

    def w_of(self, y, lanes):
        sw = self.sw[lanes]
        return np.where(sw != 0, sw * np.exp(np.where(sw != 0, y[:, 1], 0.0)), 0.0)

    def __call__(self, y, lanes):
        sw = self.sw[lanes]
        e = y[:, 0]
        w = self.w_of(y, lanes)
        e2 = e * e
        u = 1.0 + 2.0 * w * np.abs(w)
        out = np.empty_like(y)
        if self.mode is Mode.CANONICAL2D:
            g = signal_slope(self.kernel, e2 * u)
            out[:, 0] = -g * 2.0 * u * e
            out[:, 1] = -4.0 * g * e2 * sw
        else:
            a = y[:, 2]
            s = 1.0 + a * e2
            g = signal_slope(self.kernel, e2 * s * u)
            out[:, 0] = -g * 2.0 * e * u * (s + a * e2)
            out[:, 1] = -4.0 * g * e2 * s * sw
            out[:, 2] = -g * e2 * e2 * u
        return out

    def grad_norm(self, y, f, lanes):
        """|grad L| recovered from the coordinate velocities."""
        w = self.w_of(y, lanes)
        gw = f[:, 1] * w
        sq = f[:, 0] ** 2 + gw ** 2
        if f.shape[1] == 3:
            sq = sq + f[:, 2] ** 2
        return np.sqrt(sq)

    def energy(self, y, lanes):
        sw = self.sw[lanes]
        om = y[:, 1]
        val = y[:, 0] ** 2 - np.exp(2.0 * om) - sw * om
        if y.shape[1] == 3:
            val = val - 2.0 * y[:, 2] ** 2
        return np.where(sw != 0, val, np.nan)

    def to_theta(self, y, lanes):
        out = np.array(y, dtype=float, copy=True)
        out[:, 1] = self.w_of(y, lanes)
        return out


def _to_internal(inits):
    inits = np.array(inits, dtype=float, copy=True)
    sw = np.sign(inits[:, 1])
    y0 = inits.copy()
    with np.errstate(divide="ignore"):
        y0[:, 1] = np.where(sw != 0, np.log(np.abs(inits[:, 1])), 0.0)
    return y0, sw


def _batch_losses(kernel, mode, theta):
    if mode is Mode.CANONICAL2D:
        return np.asarray(loss(kernel, (theta[:, 0], theta[:, 1])), dtype=float).reshape(-1)
    return np.asarray(attn_loss(kernel, theta[:, 0], theta[:, 1], theta[:, 2]), dtype=float).reshape(-1)


def _check_init(mode, init):
    arr = np.asarray(init, dtype=float).reshape(-1)
    if arr.size != mode.dim:
        raise DomainError(f"{mode} expects {mode.dim} coordinates, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("initial point must be finite")
    return arr


# --------------------------------------------------------------------------
# single trajectories
# --------------------------------------------------------------------------


def _thin(n, max_samples):
    if max_samples is None or n <= max_samples:
        return np.arange(n)
    return np.unique(np.linspace(0, n - 1, max_samples).round().astype(int))


def _integrate_one(kernel, init, config, mode, max_samples):
    kernel.require_nondegenerate()
    config = config or FlowConfig()
    init = _check_init(mode, init)
    y0, sw = _to_internal(init[None, :])
    fld = _Field(kernel, mode, sw)
    ts, ys, fs = [0.0], [y0[0].copy()], [fld(y0, np.array([0]))[0]]

    def on_accept(lanes, t, y, f):
        ts.append(float(t[0]))
        ys.append(y[0].copy())
        fs.append(f[0].copy())

    res = dopri5(
        fld,
        y0,
        t_max=config.t_max,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        h0=config.initial_step,
        max_steps=config.max_steps,
        converged=lambda y, f, lanes: fld.grad_norm(y, f, lanes) < config.grad_stop,
        on_accept=on_accept,
        tighten=lambda y, f, lanes: fld.grad_norm(y, f, lanes) < ENDGAME_FACTOR * config.grad_stop,
    )
    y_all = np.array(ys)
    f_all = np.array(fs)
    lanes = np.zeros(len(ts), dtype=int)
    energies = fld.energy(y_all, lanes)
    grads = fld.grad_norm(y_all, f_all, lanes)
    keep = _thin(len(ts), max_samples)
    theta = fld.to_theta(y_all[keep], lanes[keep])
    return Trajectory(
        times=np.array(ts)[keep],
        states=theta,
        losses=_batch_losses(kernel, mode, theta),
        energies=energies[keep],
        grad_norms=grads[keep],
        terminated_by=res.status[0],
        mode=mode,
        kernel=kernel,
        config=config,
        n_steps=int(res.n_accepted[0]),
        n_rejected=int(res.n_rejected[0]),
    )


def integrate2d(kernel, init, config=None, max_samples=10_000):
    """Integrate d(e, w)/dt = -grad L(e, w) from ``init``.

    The trajectory is thinned to at most ``max_samples`` accepted steps (first
    and last always kept); pass ``max_samples=None`` for every step.
    """
    return _integrate_one(kernel, init, config, Mode.CANONICAL2D, max_samples)


def integrate3d(kernel, init, config=None, max_samples=10_000):
    """Integrate d(e, w, a)/dt = -grad L(e, w, a) from ``init``."""
    return _integrate_one(kernel, init, config, Mode.ATTENTION3D, max_samples)


# --------------------------------------------------------------------------
# limit classification
# --------------------------------------------------------------------------


def _classify(kernel, mode, theta, tol):
    if mode is Mode.CANONICAL2D:
        return classify_critical(kernel, (theta[0], theta[1]), tol)
    return attn_classify(kernel, theta[0], theta[1], theta[2], tol)


def classify_limit(kernel, mode, theta, ladder=_CLASSIFY_LADDER):
    """Label an approximate critical point with the tightest tolerance that matches."""
    mode = Mode(mode)
    for tol in ladder:
        try:
            cls = _classify(kernel, mode, theta, tol)
        except AmbiguousClass:
            continue
        if cls is not CriticalClass.NOT_CRITICAL:
            return cls
    return CriticalClass.NOT_CRITICAL


def _limit_label(kernel, mode, theta, status, grad_final):
    """(class, saddle_suspect, flag) for the endpoint of one trajectory."""
    if status is Termination.GRAD_STOP:
        cls = classify_limit(kernel, mode, theta)
    elif status is Termination.T_MAX and grad_final < SADDLE_SUSPECT_GRAD:
        cls = classify_limit(kernel, mode, theta, _SUSPECT_LADDER)
        if cls is CriticalClass.SADDLE:
            return cls, True, "saddle-suspect: slow approach, stopped at t_max"
    else:
        cls = CriticalClass.NOT_CRITICAL
    flag = "station: Hessian undefined, no stability claim" if cls is CriticalClass.STATION else ""
    return cls, False, flag


def verify_trajectory(traj, kernel=None, drift_threshold=None):
    """Summarize a trajectory's endpoint and check it against theory.

    ``energy_drift`` is the largest deviation of the energy from its initial
    value (NaN for w0 = 0, where the energy is undefined). EnergyViolation is
    raised when it exceeds ``drift_threshold``.
    """
    kernel = kernel or traj.kernel
    mode = Mode(traj.mode)
    theta = traj.states[-1]
    grad_final = float(traj.grad_norms[-1])
    if np.isnan(traj.energies[0]):
        drift = math.nan
    else:
        drift = float(np.max(np.abs(traj.energies - traj.energies[0])))
    if drift_threshold is not None and drift > drift_threshold:
        raise EnergyViolation(
            f"energy drift {drift:.3e} exceeds {drift_threshold:.3e}; tighten the integrator tolerances"
        )
    cls, suspect, flag = _limit_label(kernel, mode, theta, traj.terminated_by, grad_final)
    return LimitReport(
        theta_lim=traj.point(-1),
        critical_class=cls,
        energy_drift=drift,
        grad_norm_final=grad_final,
        loss_final=float(traj.losses[-1]),
        terminated_by=traj.terminated_by,
        saddle_suspect=suspect,
        flag=flag,
    )


# --------------------------------------------------------------------------
# batches and sweeps
# --------------------------------------------------------------------------


@dataclass
class BatchFlow:
    """Endpoints of many trajectories integrated together (no per-step storage)."""

    inits: np.ndarray
    finals: np.ndarray
    terminated_by: list
    losses: np.ndarray
    grad_norms: np.ndarray
    energy_drift: np.ndarray
    max_loss_increase: np.ndarray
    sign_flips: np.ndarray
    mode: Mode
    reports: list = field(default_factory=list)


def integrate_batch(kernel, inits, mode=Mode.CANONICAL2D, config=None):
    """Integrate every row of ``inits`` and report endpoints and invariants.

    Each lane has its own adaptive step, so the results match separate calls
    to :func:`integrate2d` / :func:`integrate3d` up to integrator tolerance.
    Recorded per lane: max energy drift, largest single-step loss increase and
    whether w ever changed sign.
    """
    kernel.require_nondegenerate()
    mode = Mode(mode)
    config = config or FlowConfig()
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    if inits.shape[1] != mode.dim:
        raise DomainError(f"{mode} expects {mode.dim} coordinates per init")
    n = inits.shape[0]
    y0, sw = _to_internal(inits)
    fld = _Field(kernel, mode, sw)
    all_lanes = np.arange(n)
    e0 = fld.energy(y0, all_lanes)
    drift = np.where(np.isnan(e0), np.nan, 0.0)
    last_loss = _batch_losses(kernel, mode, inits)
    rise = np.zeros(n)
    flips = np.zeros(n, dtype=bool)

    def on_accept(lanes, t, y, f):
        en = fld.energy(y, lanes)
        d = np.abs(en - e0[lanes])
        drift[lanes] = np.fmax(drift[lanes], d)
        theta = fld.to_theta(y, lanes)
        ls = _batch_losses(kernel, mode, theta)
        rise[lanes] = np.maximum(rise[lanes], ls - last_loss[lanes])
        last_loss[lanes] = ls
        flips[lanes] |= np.sign(theta[:, 1]) != sw[lanes]

    res = dopri5(
        fld,
        y0,
        t_max=config.t_max,
        rtol=config.rel_tol,
        atol=config.abs_tol,
        h0=config.initial_step,
        max_steps=config.max_steps,
        converged=lambda y, f, lanes: fld.grad_norm(y, f, lanes) < config.grad_stop,
        on_accept=on_accept,
        tighten=lambda y, f, lanes: fld.grad_norm(y, f, lanes) < ENDGAME_FACTOR * config.grad_stop,
    )
    finals = fld.to_theta(res.y, all_lanes)
    grads = fld.grad_norm(res.y, res.f, all_lanes)
    out = BatchFlow(
        inits=inits,
        finals=finals,
        terminated_by=list(res.status),
        losses=_batch_losses(kernel, mode, finals),
        grad_norms=grads,
        energy_drift=drift,
        max_loss_increase=rise,
        sign_flips=flips,
        mode=mode,
    )
    for i in range(n):
        cls, suspect, flag = _limit_label(kernel, mode, finals[i], res.status[i], grads[i])
        theta = Params2(*finals[i]) if mode is Mode.CANONICAL2D else Params3(*finals[i])
        out.reports.append(
            LimitReport(
                theta_lim=theta,
                critical_class=cls,
                energy_drift=float(drift[i]),
                grad_norm_final=float(grads[i]),
                loss_final=float(out.losses[i]),
                terminated_by=res.status[i],
                saddle_suspect=suspect,
                flag=flag,
            )
        )
    return out


def lattice(bounds, shape):
    """Points of a rectangular lattice, ``bounds=[(lo, hi), ...]``, ``shape=(n1, ...)``.

    Ordering is row-major with the first coordinate varying slowest.
    """
    if len(bounds) != len(shape):
        raise DomainError("bounds and shape must have the same length")
    axes = [np.linspace(lo, hi, int(k)) for (lo, hi), k in zip(bounds, shape)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def in_boundary_band(kernel, init, band=1e-3):
    """Whether a 2D init lies within ``band`` of a predicted basin boundary.

    The relevant boundary is the part of the saddle contour |e| = g(w) that
    separates local-minimum from global-minimum basins: w in [-1/sqrt(2), 0)
    for p + q > 1 and w <= -1/sqrt(2) for p + q < 1. The e = 0 axis is a
    set of fixed points and needs no band.
    """
    e, w = float(init[0]), float(init[1])
    if w >= 0:
        return False
    if kernel.switching > 1.0 and w < -INV_SQRT2:
        return False
    if kernel.switching < 1.0 and w > -INV_SQRT2:
        return False
    return abs(abs(e) - saddle_contour(w)) < band


@dataclass
class SweepRow:
    init: tuple
    predicted: BasinClass
    integrated: CriticalClass
    agree: bool
    report: LimitReport


@dataclass
class SweepResult:
    rows: list
    n_excluded: int
    mode: Mode

    @property
    def agreement_rate(self):
        judged = [r for r in self.rows if r.agree is not None]
        if not judged:
            return math.nan
        return sum(bool(r.agree) for r in judged) / len(judged)

    @property
    def n_disagree(self):
        return sum(r.agree is False for r in self.rows)


def basin_sweep(kernel, grid, config=None, band=1e-3, mode=Mode.CANONICAL2D, predicted_only=False):
    """Compare predicted basins with integrated limits over a set of inits.

    Inits inside the boundary band are dropped and counted in ``n_excluded``.
    In 3D there is no prediction: ``predicted`` and ``agree`` are None.
    With ``predicted_only`` no trajectory is integrated.
    """
    kernel.require_nondegenerate()
    mode = Mode(mode)
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if mode is Mode.CANONICAL2D:
        keep = np.array([not in_boundary_band(kernel, g, band) for g in grid], dtype=bool)
    else:
        keep = np.ones(len(grid), dtype=bool)
    pts = grid[keep]
    preds = [basin(kernel, g) for g in pts] if mode is Mode.CANONICAL2D else [None] * len(pts)
    rows = []
    if predicted_only:
        for g, pr in zip(pts, preds):
            rows.append(SweepRow(tuple(map(float, g)), pr, None, None, None))
        return SweepResult(rows=rows, n_excluded=int((~keep).sum()), mode=mode)
    batch = integrate_batch(kernel, pts, mode, config)
    for g, pr, rep in zip(pts, preds, batch.reports):
        agree = None if pr is None else rep.critical_class is pr.critical_class
        rows.append(SweepRow(tuple(map(float, g)), pr, rep.critical_class, agree, rep))
    return SweepResult(rows=rows, n_excluded=int((~keep).sum()), mode=mode)


def with_overrides(config, **kw):
    """Copy of ``config`` with the given fields replaced (None values ignored)."""
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
