"""Verification suite: one measured check per acceptance criterion.

Every check returns a :class:`CheckResult` holding the worst measured value,
the threshold it is compared against and a few diagnostic numbers. The
results are deterministic for a given seed. Timings are not part of the
result, so reports are byte-identical across runs.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .attention import (
    attn_grad,
    attn_grad_with_bias,
    attn_hessian_on_axis,
    attn_logit,
    attn_loss,
    attn_loss_with_bias,
    attn_optimal_bias,
    attn_terms,
)
from .canonical import (
    E_SAD,
    INV_SQRT2,
    BiasedParams,
    energy,
    f12_at_optimum,
    grad,
    grad_with_bias,
    hessian_with_bias_on_axis,
    logit,
    loss,
    loss_with_bias,
    optimal_bias,
    reduced_hessian_on_axis,
)
from .flow import Mode, basin_sweep, integrate2d, integrate_batch, lattice
from .markov import SwitchKernel, binary_entropy, entropy_rate, marginal_entropy
from .oracle import (
    FD_GRAD_STEP,
    FD_HESS_STEP,
    FullModelSpec,
    attention_predictor,
    canonical_predictor,
    fd_gradient,
    fd_hessian,
    full_forward_all,
    mc_loss,
    relative_error,
)

SADDLE_ENERGY_LITERAL = -0.8465735903


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.value:.3e} threshold={self.threshold:.3e}"

    def as_dict(self):
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "value": float(self.value),
            "threshold": float(self.threshold),
            "detail": {k: _plain(v) for k, v in self.detail.items()},
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def random_kernel(rng, margin=0.05, lo=0.02, hi=0.98):
    """A kernel with |p + q - 1| > margin, p and q uniform on [lo, hi]."""
    while True:
        p, q = rng.uniform(lo, hi, 2)
        if abs(p + q - 1.0) > margin:
            return SwitchKernel(p, q)


def _result(name, worst, threshold, strict=True, **detail):
    ok = worst < threshold if strict else worst <= threshold
    return CheckResult(name, bool(ok), float(worst), float(threshold), detail)


# --------------------------------------------------------------------------
# 1. saddle energy
# --------------------------------------------------------------------------


def check_saddle_energy():
    val = float(energy((0.0, -INV_SQRT2)))
    err_formula = abs(val - (-(1.0 + math.log(2.0)) / 2.0))
    err_literal = abs(val - SADDLE_ENERGY_LITERAL)
    worst = max(err_formula, abs(E_SAD - val))
    res = _result("saddle_energy", worst, 1e-12, value=val, literal_error=err_literal)
    # the literal has 10 decimals, so it is checked at its own precision
    res.passed = res.passed and err_literal < 1e-10
    return res


# --------------------------------------------------------------------------
# 2. loss ordering
# --------------------------------------------------------------------------


def global_points(kernel, rng, n):
    """``n`` random points of the global-minimum set e^2 (1 + 2w|w|) = c."""
    c = kernel.global_level
    pts = []
    while len(pts) < n:
        w = rng.uniform(-INV_SQRT2 + 0.05, 2.0) if c > 0 else rng.uniform(-3.0, -INV_SQRT2 - 0.05)
        u = 1.0 + 2.0 * w * abs(w)
        e = math.copysign(math.sqrt(c / u), rng.uniform(-1.0, 1.0))
        pts.append((e, w))
    return pts


def check_loss_ordering(seed=0, n_kernels=200, n_points=5):
    rng = np.random.default_rng(seed)
    worst_global = worst_axis = 0.0
    gap_min = math.inf
    for _ in range(n_kernels):
        k = random_kernel(rng)
        h_rate, h_marg = entropy_rate(k), marginal_entropy(k)
        gap_min = min(gap_min, h_marg - h_rate)
        for pt in global_points(k, rng, n_points):
            worst_global = max(worst_global, abs(loss(k, pt) - h_rate))
        for w in rng.uniform(-3.0, 3.0, n_points):
            worst_axis = max(worst_axis, abs(loss(k, (0.0, w)) - h_marg))
    passed = worst_global < 1e-9 and worst_axis < 1e-12 and gap_min > 0
    return CheckResult(
        "loss_ordering",
        passed,
        worst_global,
        1e-9,
        {"axis_worst": worst_axis, "axis_threshold": 1e-12, "min_entropy_gap": gap_min},
    )


# --------------------------------------------------------------------------
# 3. derivative oracles
# --------------------------------------------------------------------------

#: Sampling box for the gradient checks (every coordinate in [-1, 1]).
FD_BOX = 1.0


def _draw_w(rng, box):
    w = rng.uniform(-box, box)
    while abs(w) < 1e-3:
        w = rng.uniform(-box, box)
    return w


def check_derivatives(seed=0, n_points=1000, n_hessian=50, h=FD_GRAD_STEP, h_hess=FD_HESS_STEP):
    rng = np.random.default_rng(seed)
    worst = {"grad2d_bias": 0.0, "grad2d": 0.0, "grad3d": 0.0}
    for _ in range(n_points):
        k = random_kernel(rng)
        e, b, a = rng.uniform(-FD_BOX, FD_BOX, 3)
        w = _draw_w(rng, FD_BOX)
        fd = fd_gradient(lambda x: loss_with_bias(k, x), [e, w, b], h)
        worst["grad2d_bias"] = max(worst["grad2d_bias"], relative_error(fd, grad_with_bias(k, (e, w, b))))
        fd = fd_gradient(lambda x: loss(k, x), [e, w], h)
        worst["grad2d"] = max(worst["grad2d"], relative_error(fd, grad(k, (e, w))))
        fd = fd_gradient(lambda x: attn_loss(k, *x), [e, w, a], h)
        worst["grad3d"] = max(worst["grad3d"], relative_error(fd, attn_grad(k, e, w, a)))

    hess = {"hess3": 0.0, "hess2_schur": 0.0, "hess4": 0.0}
    for _ in range(n_hessian):
        k = random_kernel(rng)
        w = _draw_w(rng, 2.0)
        a = rng.uniform(-2.0, 2.0)
        b0 = math.log(k.p / k.q)
        # ordering (b, e, w) for the explicit-bias loss
        fd = fd_hessian(lambda x: loss_with_bias(k, (x[1], x[2], x[0])), [b0, 0.0, w], h_hess)
        hess["hess3"] = max(hess["hess3"], float(np.max(np.abs(fd - hessian_with_bias_on_axis(k, w)))))
        fd = fd_hessian(lambda x: loss(k, x), [0.0, w], h_hess)
        hess["hess2_schur"] = max(hess["hess2_schur"], float(np.max(np.abs(fd - reduced_hessian_on_axis(k, w)))))
        fd = fd_hessian(lambda x: attn_loss_with_bias(k, x[1], x[2], x[0], x[3]), [b0, 0.0, w, a], h_hess)
        hess["hess4"] = max(hess["hess4"], float(np.max(np.abs(fd - attn_hessian_on_axis(k, w, a)))))

    grad_worst = max(worst.values())
    hess_worst = max(hess.values())
    passed = grad_worst < 1e-5 and hess_worst < 1e-4
    return CheckResult(
        "derivative_oracles",
        passed,
        grad_worst,
        1e-5,
        {**worst, **hess, "hessian_threshold": 1e-4, "fd_h": h},
    )


# --------------------------------------------------------------------------
# 4. energy conservation
# --------------------------------------------------------------------------

ENERGY_KERNELS = ((0.9, 0.9), (0.1, 0.1), (0.2, 0.3), (0.7, 0.6))


def _inits_away_from_plane(rng, n, dim, box=2.0, wmin=0.01):
    x = rng.uniform(-box, box, (n, dim))
    for i in range(n):
        while abs(x[i, 1]) < wmin:
            x[i, 1] = rng.uniform(-box, box)
    return x


def check_energy_conservation(seed=0, n_per_mode=100, config=None):
    rng = np.random.default_rng(seed)
    worst = {}
    statuses = {}
    per_kernel = n_per_mode // len(ENERGY_KERNELS)
    for mode in (Mode.CANONICAL2D, Mode.ATTENTION3D):
        drift = 0.0
        for p, q in ENERGY_KERNELS:
            x = _inits_away_from_plane(rng, per_kernel, mode.dim)
            batch = integrate_batch(SwitchKernel(p, q), x, mode, config)
            drift = max(drift, float(np.nanmax(batch.energy_drift)))
            for s in batch.terminated_by:
                statuses[str(s)] = statuses.get(str(s), 0) + 1
        worst[str(mode)] = drift
    return _result("energy_conservation", max(worst.values()), 1e-6, **worst, terminations=statuses)


# --------------------------------------------------------------------------
# 5. basin reproduction
# --------------------------------------------------------------------------


def check_basins(grid_n=41, bound=2.0, band=1e-3, config=None):
    grid = lattice([(-bound, bound), (-bound, bound)], (grid_n, grid_n))
    rates = {}
    info = {}
    for p in (0.9, 0.1):
        sweep = basin_sweep(SwitchKernel(p, p), grid, config, band=band)
        rates[p] = sweep.agreement_rate
        info[f"agreement_p{p}"] = sweep.agreement_rate
        info[f"excluded_p{p}"] = sweep.n_excluded
        info[f"disagree_p{p}"] = sweep.n_disagree
    worst = min(rates.values())
    return CheckResult("basin_reproduction", worst >= 0.99, worst, 0.99, info)


# --------------------------------------------------------------------------
# 6. small-initialization regime
# --------------------------------------------------------------------------


def check_small_init(seed=0, count=200, sigma=0.01, config=None):
    rng = np.random.default_rng(seed)
    fractions = {}
    for p in (0.9, 0.1):
        k = SwitchKernel(p, p)
        target = math.log(2.0) if p == 0.9 else binary_entropy(0.1)
        for mode in (Mode.CANONICAL2D, Mode.ATTENTION3D):
            x = rng.normal(0.0, sigma, (count, mode.dim))
            batch = integrate_batch(k, x, mode, config)
            fractions[f"{mode}_p{p}"] = float(np.mean(np.abs(batch.losses - target) < 1e-6))
    req = {f"canonical2d_p{p}": 1.0 for p in (0.9, 0.1)}
    req.update({f"attention3d_p{p}": 0.95 for p in (0.9, 0.1)})
    passed = all(fractions[key] >= need for key, need in req.items())
    worst = min(fractions[key] - need for key, need in req.items())
    return CheckResult("small_init_regime", passed, worst, 0.0, fractions)


# --------------------------------------------------------------------------
# 7. common initialization region
# --------------------------------------------------------------------------


def check_common_region(init=(1.5, -0.3), config=None):
    errs = {}
    for p in (0.9, 0.1):
        k = SwitchKernel(p, p)
        tr = integrate2d(k, init, config)
        errs[f"p{p}"] = abs(float(tr.losses[-1]) - entropy_rate(k))
    return _result("common_region", max(errs.values()), 1e-6, **errs)


# --------------------------------------------------------------------------
# 8. full-model collapse
# --------------------------------------------------------------------------


def check_full_model(seed=0, n_specs=100, dims=(4, 8, 16), length=32):
    rng = np.random.default_rng(seed)
    worst = {"no_attention": 0.0, "attention": 0.0}
    for d in dims:
        for _ in range(n_specs):
            e, w, b, a = rng.uniform(-2.0, 2.0, 4)
            bits = rng.integers(0, 2, length)
            plain = FullModelSpec.random(d, rng, e, w, b, attention=False)
            ref = logit(bits.astype(float), BiasedParams(e, w, b))
            worst["no_attention"] = max(worst["no_attention"], float(np.max(np.abs(full_forward_all(plain, bits) - ref))))
            spec = FullModelSpec.random(d, rng, e, w, b, a=a)
            ref = attn_logit(bits.astype(float), e, w, a, b)
            worst["attention"] = max(worst["attention"], float(np.max(np.abs(full_forward_all(spec, bits) - ref))))
    return _result("full_model_collapse", max(worst.values()), 1e-10, **worst)


# --------------------------------------------------------------------------
# 9. bias optimality and the f-identity
# --------------------------------------------------------------------------


def check_bias_identity(seed=0, n_points=1000):
    rng = np.random.default_rng(seed)
    worst = {"db_2d": 0.0, "f_identity_2d": 0.0, "db_3d": 0.0, "f_identity_3d": 0.0}
    for _ in range(n_points):
        k = random_kernel(rng)
        e, w, a = rng.uniform(-2.0, 2.0, 3)
        b = optimal_bias(k, (e, w))
        worst["db_2d"] = max(worst["db_2d"], abs(grad_with_bias(k, (e, w, b))[2]))
        f1, f2 = f12_at_optimum(k, (e, w))
        worst["f_identity_2d"] = max(worst["f_identity_2d"], abs(k.pi1 * f1 + f2))
        b3 = attn_optimal_bias(k, e, w, a)
        worst["db_3d"] = max(worst["db_3d"], abs(attn_grad_with_bias(k, e, w, b3, a)[2]))
        t = attn_terms(k, e, w, a)
        worst["f_identity_3d"] = max(worst["f_identity_3d"], abs(k.pi1 * t.f1 + t.f2))
    return _result("bias_optimality", max(worst.values()), 1e-10, **worst)


# --------------------------------------------------------------------------
# 10. Monte-Carlo consistency
# --------------------------------------------------------------------------


def check_monte_carlo(seed=0, n_configs=20, n_samples=1_000_000):
    rng = np.random.default_rng(seed)
    worst_z = 0.0
    for i in range(n_configs):
        k = random_kernel(rng)
        e, w, b, a = rng.uniform(-1.5, 1.5, 4)
        if i % 2 == 0:
            exact = loss_with_bias(k, (e, w, b))
            pred = canonical_predictor(e, w, b)
        else:
            exact = attn_loss_with_bias(k, e, w, b, a)
            pred = attention_predictor(e, w, a, b)
        est, se = mc_loss(k, pred, n_samples, seed=int(rng.integers(2 ** 32)))
        worst_z = max(worst_z, abs(est - exact) / se)
    return _result("monte_carlo", worst_z, 3.0, strict=False, max_z_score=worst_z)


# --------------------------------------------------------------------------


CHECKS = (
    ("saddle_energy", lambda seed, fd_h: check_saddle_energy()),
    ("loss_ordering", lambda seed, fd_h: check_loss_ordering(seed)),
    ("derivative_oracles", lambda seed, fd_h: check_derivatives(seed, h=fd_h or FD_GRAD_STEP)),
    ("energy_conservation", lambda seed, fd_h: check_energy_conservation(seed)),
    ("basin_reproduction", lambda seed, fd_h: check_basins()),
    ("small_init_regime", lambda seed, fd_h: check_small_init(seed)),
    ("common_region", lambda seed, fd_h: check_common_region()),
    ("full_model_collapse", lambda seed, fd_h: check_full_model(seed)),
    ("bias_optimality", lambda seed, fd_h: check_bias_identity(seed)),
    ("monte_carlo", lambda seed, fd_h: check_monte_carlo(seed)),
)


def run_all(seed=0, fd_h=None, only=None):
    """Run every check (or those named in ``only``) and return the results in order."""
    out = []
    for name, fn in CHECKS:
        if only is None or name in only:
            out.append(fn(seed, fd_h))
    return out
