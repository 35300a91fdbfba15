import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markovgf.canonical import (
    BasinClass,
    CriticalClass,
    basin,
    energy,
    predicted_limit,
    saddle_contour,
)
from markovgf.errors import DegenerateKernel, DomainError, EnergyViolation
from markovgf.flow import (
    FlowConfig,
    Mode,
    TerminatedBy,
    basin_sweep,
    classify_limit,
    in_boundary_band,
    integrate2d,
    integrate3d,
    integrate_batch,
    lattice,
    verify_trajectory,
    with_overrides,
)
from markovgf.integrate import Termination, dopri5
from markovgf.markov import SwitchKernel, entropy_rate, marginal_entropy


def random_inits(rng, kernel, n, box=2.0):
    """Uniform 2D inits away from w = 0 and from the separating contour."""
    out = []
    while len(out) < n:
        e, w = rng.uniform(-box, box, 2)
        if abs(w) < 0.01 or abs(e) < 1e-3 or in_boundary_band(kernel, (e, w), 1e-3):
            continue
        out.append((e, w))
    return np.array(out)


class TestIntegrator:
    def test_exponential_decay(self):
        rates = np.array([1.0, 3.0, 0.1])
        res = dopri5(
            lambda y, lanes: -rates[lanes, None] * y,
            np.ones((3, 1)),
            t_max=2.0,
            rtol=1e-10,
            atol=1e-12,
            h0=1e-2,
            max_steps=10_000,
        )
        np.testing.assert_allclose(res.t, 2.0)
        np.testing.assert_allclose(res.y[:, 0], np.exp(-2.0 * rates), rtol=1e-8)
        assert all(s is Termination.T_MAX for s in res.status)

    def test_harmonic_oscillator_lanes_independent(self):
        y0 = np.array([[1.0, 0.0], [0.0, 2.0]])
        res = dopri5(
            lambda y, lanes: np.stack([y[:, 1], -y[:, 0]], axis=1),
            y0,
            t_max=math.pi,
            rtol=1e-11,
            atol=1e-12,
            h0=0.1,
            max_steps=10_000,
        )
        np.testing.assert_allclose(res.y, -y0, atol=1e-8)

    def test_step_limit_and_convergence(self):
        res = dopri5(
            lambda y, lanes: -y,
            np.array([[1.0], [1e-12]]),
            t_max=1e6,
            rtol=1e-8,
            atol=1e-14,
            h0=1e-3,
            max_steps=5,
            converged=lambda y, f, lanes: np.abs(f[:, 0]) < 1e-9,
        )
        assert res.status == [Termination.STEP_LIMIT, Termination.GRAD_STOP]
        assert res.n_accepted[1] == 0

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            dopri5(lambda y, lanes: y, np.ones(3), t_max=1.0, rtol=1e-6, atol=1e-6, h0=0.1, max_steps=10)


class TestConfig:
    def test_defaults(self):
        c = FlowConfig()
        assert (c.initial_step, c.rel_tol, c.abs_tol, c.grad_stop, c.t_max, c.max_steps) == (
            1e-2, 1e-10, 1e-10, 1e-9, 1e4, 1_000_000,
        )

    @pytest.mark.parametrize("field", ["initial_step", "rel_tol", "abs_tol", "grad_stop", "t_max", "max_steps"])
    def test_rejects_non_positive(self, field):
        with pytest.raises(DomainError):
            FlowConfig(**{field: 0})

    def test_with_overrides_ignores_none(self):
        c = with_overrides(FlowConfig(), t_max=5.0, rel_tol=None)
        assert c.t_max == 5.0 and c.rel_tol == 1e-10


class TestSingleTrajectories:
    def test_origin_basin(self, k9):
        traj = integrate2d(k9, (0.3, 0.0))
        rep = verify_trajectory(traj)
        assert traj.terminated_by is TerminatedBy.GRAD_STOP
        assert rep.critical_class is CriticalClass.LOCAL_MIN
        assert rep.loss_final == pytest.approx(math.log(2.0), abs=1e-8)
        assert np.all(traj.states[:, 1] == 0.0)
        assert math.isnan(rep.energy_drift)

    def test_positive_w_to_axis(self, k9):
        traj = integrate2d(k9, (0.01, 0.5))
        rep = verify_trajectory(traj, drift_threshold=1e-8)
        assert rep.critical_class is CriticalClass.LOCAL_MIN
        assert rep.energy_drift < 1e-8
        np.testing.assert_allclose(rep.theta_lim, predicted_limit(k9, (0.01, 0.5)), atol=1e-4)

    @pytest.mark.parametrize("p", [0.9, 0.1])
    def test_common_region_reaches_entropy_rate(self, p):
        k = SwitchKernel(p, p)
        rep = verify_trajectory(integrate2d(k, (1.5, -0.3)))
        assert rep.critical_class is CriticalClass.GLOBAL_MIN
        assert rep.loss_final == pytest.approx(entropy_rate(k), abs=1e-8)
        np.testing.assert_allclose(rep.theta_lim, predicted_limit(k, (1.5, -0.3)), atol=1e-6)

    def test_saddle_contour_start_is_reported_as_suspect(self, k9):
        w0 = -0.5
        traj = integrate2d(k9, (saddle_contour(w0), w0))
        rep = verify_trajectory(traj)
        assert basin(k9, (saddle_contour(w0), w0)) is BasinClass.TO_SADDLE
        assert rep.critical_class is CriticalClass.SADDLE
        # a slow approach is only ever a suspicion
        if rep.terminated_by is Termination.T_MAX:
            assert rep.saddle_suspect and rep.flag

    def test_trajectory_invariants(self, k23):
        traj = integrate2d(k23, (1.2, -0.6), max_samples=None)
        assert np.all(np.diff(traj.times) > 0)
        assert np.all(np.diff(traj.losses) <= 1e-12)
        assert np.all(traj.states[:, 1] < 0)
        assert np.max(np.abs(traj.energies - traj.energies[0])) < 1e-8
        assert traj.init == (1.2, -0.6)
        assert len(traj) == traj.n_steps + 1

    def test_thinning_keeps_endpoints(self, k23):
        full = integrate2d(k23, (1.2, -0.6), max_samples=None)
        thin = integrate2d(k23, (1.2, -0.6), max_samples=50)
        assert len(thin) <= 50
        assert thin.times[0] == 0.0 and thin.times[-1] == full.times[-1]
        np.testing.assert_array_equal(thin.states[-1], full.states[-1])

    def test_step_limit_reported(self, k23):
        traj = integrate2d(k23, (1.2, -0.6), FlowConfig(max_steps=3))
        rep = verify_trajectory(traj)
        assert traj.terminated_by is Termination.STEP_LIMIT
        assert rep.critical_class is CriticalClass.NOT_CRITICAL

    def test_t_max_reported(self, k23):
        traj = integrate2d(k23, (1.2, -0.6), FlowConfig(t_max=0.5))
        assert traj.terminated_by is Termination.T_MAX
        assert traj.times[-1] == pytest.approx(0.5)

    def test_energy_violation(self, k23):
        loose = FlowConfig(rel_tol=1e-2, abs_tol=1e-2, initial_step=0.5)
        traj = integrate2d(k23, (1.9, -1.9), loose)
        with pytest.raises(EnergyViolation):
            verify_trajectory(traj, drift_threshold=1e-13)

    def test_input_validation(self, k23):
        with pytest.raises(DomainError):
            integrate2d(k23, (1.0, 2.0, 3.0))
        with pytest.raises(DomainError):
            integrate3d(k23, (1.0, float("nan"), 0.0))
        with pytest.raises(DegenerateKernel):
            integrate2d(SwitchKernel(0.4, 0.6), (0.1, 0.1))


class TestThreeDimensional:
    def test_small_init_local_min(self, k9):
        rep = verify_trajectory(integrate3d(k9, (0.01, 0.01, 0.01)))
        assert rep.critical_class is CriticalClass.LOCAL_MIN
        assert rep.loss_final == pytest.approx(marginal_entropy(k9), abs=1e-8)

    def test_small_init_global(self, k1):
        rep = verify_trajectory(integrate3d(k1, (0.01, 0.01, 0.01)))
        assert rep.critical_class is CriticalClass.GLOBAL_MIN
        assert rep.loss_final == pytest.approx(entropy_rate(k1), abs=1e-8)

    def test_w_zero_plane_is_invariant(self, k1):
        traj = integrate3d(k1, (0.5, 0.0, 0.2))
        assert np.all(traj.states[:, 1] == 0.0)

    def test_energy_conserved(self, k23):
        traj = integrate3d(k23, (0.8, -0.4, 0.3))
        rep = verify_trajectory(traj, drift_threshold=1e-8)
        assert rep.energy_drift < 1e-8
        assert np.all(np.diff(traj.losses) <= 1e-12)

    def test_limit_classification_ladder(self, k1):
        # a point 1e-5 off the global level is caught by the looser rungs
        c = k1.global_level
        theta = (1.0, 0.0, c - 1.0 + 5e-6)
        assert classify_limit(k1, Mode.ATTENTION3D, theta) is CriticalClass.GLOBAL_MIN
        assert classify_limit(k1, "attention3d", (1.0, 0.0, 0.0)) is CriticalClass.NOT_CRITICAL


class TestBatch:
    @pytest.mark.parametrize("p", [0.9, 0.1])
    def test_matches_predicted_limit(self, p, rng):
        k = SwitchKernel(p, p)
        inits = random_inits(rng, k, 100)
        batch = integrate_batch(k, inits)
        assert all(s is Termination.GRAD_STOP for s in batch.terminated_by)
        pred = np.array([predicted_limit(k, x) for x in inits])
        assert np.max(np.abs(batch.finals - pred)) < 1e-4
        assert np.nanmax(batch.energy_drift) < 1e-8
        assert not batch.sign_flips.any()
        assert np.max(batch.max_loss_increase) <= 1e-12
        for x, rep in zip(inits, batch.reports):
            assert rep.critical_class is basin(k, x).critical_class

    def test_agrees_with_single_integration(self, k23):
        inits = np.array([[1.2, -0.6], [0.3, 0.8]])
        batch = integrate_batch(k23, inits)
        for x, fin in zip(inits, batch.finals):
            np.testing.assert_allclose(integrate2d(k23, x).states[-1], fin, atol=1e-7)

    def test_three_dimensional_batch(self, rng, k23):
        inits = rng.uniform(-2, 2, (50, 3))
        batch = integrate_batch(k23, inits, Mode.ATTENTION3D)
        assert all(s is Termination.GRAD_STOP for s in batch.terminated_by)
        assert np.nanmax(batch.energy_drift) < 1e-8
        assert not batch.sign_flips.any()

    def test_dimension_checked(self, k23):
        with pytest.raises(DomainError):
            integrate_batch(k23, np.zeros((3, 3)), Mode.CANONICAL2D)


class TestSweep:
    def test_lattice_ordering(self):
        pts = lattice([(0, 1), (10, 12)], (2, 3))
        np.testing.assert_array_equal(pts, [[0, 10], [0, 11], [0, 12], [1, 10], [1, 11], [1, 12]])
        with pytest.raises(DomainError):
            lattice([(0, 1)], (2, 2))

    def test_band_only_on_separating_part(self, k9, k1):
        w = -0.4
        g = saddle_contour(w)
        assert in_boundary_band(k9, (g + 1e-4, w))
        assert not in_boundary_band(k1, (g + 1e-4, w))
        w = -1.2
        g = saddle_contour(w)
        assert in_boundary_band(k1, (g, w))
        assert not in_boundary_band(k9, (g, w))
        assert not in_boundary_band(k9, (0.0, 0.3))

    @pytest.mark.parametrize("p", [0.9, 0.1])
    def test_grid_agreement(self, p):
        k = SwitchKernel(p, p)
        res = basin_sweep(k, lattice([(-2, 2), (-2, 2)], (21, 21)))
        assert len(res.rows) + res.n_excluded == 441
        assert res.agreement_rate == 1.0
        assert res.n_disagree == 0

    def test_predicted_only(self, k9):
        res = basin_sweep(k9, lattice([(-1, 1), (-1, 1)], (5, 5)), predicted_only=True)
        assert all(r.integrated is None and r.agree is None for r in res.rows)
        assert math.isnan(res.agreement_rate)
        assert all(isinstance(r.predicted, BasinClass) for r in res.rows)

    def test_three_dimensional_sweep_has_no_prediction(self, k9):
        res = basin_sweep(k9, lattice([(-1, 1), (-1, 1), (-1, 1)], (3, 3, 3)), mode=Mode.ATTENTION3D)
        assert len(res.rows) == 27
        assert all(r.predicted is None and r.agree is None for r in res.rows)
        assert all(isinstance(r.integrated, CriticalClass) for r in res.rows)


@settings(max_examples=15)
@given(
    st.sampled_from([(0.9, 0.9), (0.1, 0.1), (0.2, 0.3), (0.7, 0.6)]),
    st.floats(-2, 2),
    st.floats(-2, 2).filter(lambda w: abs(w) > 0.01),
)
def test_energy_is_conserved_along_random_flows(pq, e, w):
    k = SwitchKernel(*pq)
    traj = integrate2d(k, (e, w))
    assert np.max(np.abs(traj.energies - energy((e, w)))) < 1e-8
    assert np.all(np.sign(traj.states[:, 1]) == np.sign(w))
    assert np.all(np.diff(traj.losses) <= 1e-12)
