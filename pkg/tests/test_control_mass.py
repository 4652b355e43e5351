"""Mass-budget control synthesis: step geometry, contraction, strategies."""

import math

import numpy as np
import pytest

from flockctrl import (
    AlreadyFlockedSignal,
    DegenerateMeasureError,
    Ensemble,
    ExponentialKernel,
    PowerLawKernel,
    TabulatedKernel,
    axis_step_params,
    build_control_piece_1d,
    complete_strategy_1d,
    complete_strategy_multi_d,
    fundamental_step_1d,
    grid_ensemble,
    normalized,
    step_params_1d,
    support_box,
    theorem4_threshold,
    uniform_box_ensemble,
)

CONSTANT_KERNEL = TabulatedKernel((0.0, 1000.0), (1.0, 1.0))


def _normalized_uniform(n=400, seed=7, hi=1.0):
    e = uniform_box_ensemble(n, 0.0, hi, 0.0, hi, seed=seed)
    return normalized(e)


class TestStepParams:
    def test_slice_count_and_cuts(self):
        e = normalized(grid_ensemble(0.0, 1.0, 0.0, 1.0, 200, 10))
        p = step_params_1d(PowerLawKernel(1.0, 1.0), e, 0.5)
        assert p.n == 4
        np.testing.assert_allclose(p.cuts, [0.0, 0.25, 0.5, 0.75, 1.0], atol=0.01)
        np.testing.assert_allclose(p.slice_masses, 0.25, atol=0.01)

    def test_widening_approaches_continuum_value(self):
        # extended slab mass 0.25 + 6 eps <= 0.5 gives eps = 1/24 in the limit
        e = normalized(grid_ensemble(0.0, 1.0, 0.0, 1.0, 400, 5))
        p = step_params_1d(PowerLawKernel(1.0, 1.0), e, 0.5)
        assert p.eps0 == pytest.approx(1.0 / 24.0, abs=5e-3)

    def test_symmetric_support_balances_alpha_beta(self):
        # velocities mirror-symmetric about W/2, so both sides give the max
        x = np.linspace(0.0, 1.0, 50)
        v = np.concatenate([np.linspace(0.0, 1.0, 25), np.linspace(1.0, 0.0, 25)])
        e = normalized(Ensemble.from_points(x, v))
        p = step_params_1d(ExponentialKernel(1.0, 1.0), e, 0.5)
        assert p.vbar0 == pytest.approx(p.W0 / 2.0, abs=1e-9)
        phid = ExponentialKernel(1.0, 1.0).phi(p.diam)
        assert p.alpha0 == pytest.approx(1.0 / (1.0 + phid) * p.W0 / 2.0, rel=1e-9)

    def test_constant_kernel_factors(self):
        e = _normalized_uniform(n=100, seed=1)
        p = step_params_1d(CONSTANT_KERNEL, e, 0.5)
        width = max(p.W0 - p.vbar0, p.vbar0)
        assert p.alpha0 == pytest.approx(width / 2.0)
        assert p.beta0 == pytest.approx(width / 6.0)

    def test_t0_formula(self):
        e = _normalized_uniform(n=200, seed=2)
        c = 0.5
        p = step_params_1d(PowerLawKernel(1.0, 1.0), e, c)
        assert p.T0 == pytest.approx(min(p.eps0 / p.W0, p.beta0 / (2.0 * c), 1.0))

    def test_flocked_axis_signals(self):
        e = Ensemble.from_points([0.0, 1.0], [0.5, 0.5])
        with pytest.raises(AlreadyFlockedSignal):
            step_params_1d(PowerLawKernel(), normalized(e), 0.5)

    def test_heavy_atom_cluster_rejected(self):
        # all spatial mass at one point: no widened column can stay under c
        e = Ensemble.from_points([0.0, 0.0, 0.0], [0.0, 0.5, 1.0])
        with pytest.raises(DegenerateMeasureError):
            step_params_1d(PowerLawKernel(), e, 0.5)

    def test_widened_columns_respect_budget(self):
        e = _normalized_uniform(n=300, seed=3)
        c = 0.4
        p = step_params_1d(PowerLawKernel(1.0, 1.0), e, c)
        coords = e.x[:, 0]
        for i in range(p.n):
            lo = p.cuts[i] - 3.0 * p.eps0
            hi = p.cuts[i + 1] + 3.0 * p.eps0
            mass = e.w[(coords >= lo) & (coords <= hi)].sum()
            assert mass <= c + 1e-9


class TestControlPieceGeometry:
    def test_plateau_and_boundary(self):
        e = _normalized_uniform(n=150, seed=4)
        p = step_params_1d(PowerLawKernel(1.0, 1.0), e, 0.5)
        piece = build_control_piece_1d(p, 1, 0.0)
        x_mid = 0.5 * (p.cuts[0] + p.cuts[1])
        x = np.array([[x_mid]])
        # upper plateau: force -1
        v = np.array([[p.vbar0 + p.alpha0 + 2.5 * p.beta0]])
        assert piece.force(x, v, 0.0)[0, 0] == pytest.approx(-1.0)
        # lower plateau: force +1
        v = np.array([[p.vbar0 - p.alpha0 - 2.5 * p.beta0]])
        assert piece.force(x, v, 0.0)[0, 0] == pytest.approx(1.0)
        # inner band edge: continuous zero (up to roundoff in the ramp)
        v = np.array([[p.vbar0 + p.alpha0 + p.beta0]])
        assert piece.force(x, v, 0.0)[0, 0] == pytest.approx(0.0, abs=1e-12)
        # far outside
        v = np.array([[p.vbar0 + p.alpha0 + 10.0 * p.beta0]])
        assert piece.force(x, v, 0.0)[0, 0] == 0.0

    def test_slice_index_bounds(self):
        e = _normalized_uniform(n=50, seed=5)
        p = step_params_1d(PowerLawKernel(), e, 0.5)
        with pytest.raises(ValueError):
            build_control_piece_1d(p, 0, 0.0)
        with pytest.raises(ValueError):
            build_control_piece_1d(p, p.n + 1, 0.0)


class TestFundamentalStep:
    def test_contraction_and_audits(self):
        e = uniform_box_ensemble(400, 0.0, 1.0, 0.0, 1.0, seed=7)
        c = 0.5
        e1, rec, frag, traj = fundamental_step_1d(PowerLawKernel(1.0, 1.0), e, c)
        assert rec.W_after[0] <= rec.W_before[0] - rec.params.T0 / rec.params.n + 1e-6
        assert rec.max_mass_in_omega <= c + 2.0 * e.w.max()
        assert rec.max_u_sup <= 1.0 + 1e-12
        assert rec.max_vbar_drift <= rec.params.beta0 / 2.0 + 1e-6
        assert rec.div_v_bound == pytest.approx(1.0 / rec.params.beta0 + 1.0)
        assert frag.total_control_time() == pytest.approx(rec.params.T0)

    def test_dimension_guard(self):
        e = uniform_box_ensemble(20, [0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], seed=1)
        with pytest.raises(ValueError):
            fundamental_step_1d(PowerLawKernel(), e, 0.5)


@pytest.fixture(scope="module")
def small_run():
    k = ExponentialKernel(1.0, 1.0)
    e0 = uniform_box_ensemble(100, 0.0, 0.3, 0.0, 0.3, seed=12)
    return k, e0, complete_strategy_1d(k, e0, 0.5)


@pytest.fixture(scope="module")
def small_run_2d():
    k = PowerLawKernel(1.0, 1.0)
    e0 = uniform_box_ensemble(
        100, [0.0, 0.0], [0.3, 0.3], [0.0, 0.0], [0.3, 0.3], seed=21
    )
    return k, e0, complete_strategy_multi_d(k, e0, 0.5)


class TestCompleteStrategy1D:
    def test_terminates_below_eta(self, small_run):
        _, e0, res = small_run
        assert support_box(res.final).w[0] <= res.eta

    def test_default_eta_formula(self, small_run):
        k, e0, res = small_run
        box = support_box(e0)
        assert res.eta == pytest.approx(
            theorem4_threshold(k, float(box.y[0]), float(box.w[0]), 0.5)
        )

    def test_time_and_spread_bounds(self, small_run):
        _, e0, res = small_run
        box = support_box(e0)
        n = math.ceil(2.0 / 0.5)
        assert res.total_control_time <= float(box.w[0]) * n + 1e-9
        assert support_box(res.final).y[0] <= float(box.y[0]) + n * float(box.w[0]) ** 2 + 1e-6

    def test_strictly_monotone_contraction(self, small_run):
        _, _, res = small_run
        ws = [r.W_before[0] for r in res.records] + [res.records[-1].W_after[0]]
        assert all(b < a for a, b in zip(ws, ws[1:]))

    def test_mass_constraint_throughout(self, small_run):
        _, e0, res = small_run
        assert max(r.max_mass_in_omega for r in res.records) <= 0.5 + 2.0 * e0.w.max()

    def test_terminal_certificate(self, small_run):
        _, _, res = small_run
        assert res.terminal_verdict.in_region

    def test_plan_contiguous_zero_after(self, small_run):
        _, _, res = small_run
        assert res.plan.piece_index_at(res.plan.t_end + 1.0) == -1

    def test_already_flocked_empty_plan(self):
        e = Ensemble.from_points([0.0, 0.5, 1.0], [0.2, 0.2, 0.2])
        res = complete_strategy_1d(ExponentialKernel(1.0, 1.0), e, 0.5)
        assert len(res.records) == 0
        assert res.plan.pieces == ()
        assert res.total_control_time == 0.0

    def test_divergent_kernel_needs_no_control(self):
        e = uniform_box_ensemble(50, 0.0, 1.0, 0.0, 1.0, seed=3)
        res = complete_strategy_1d(PowerLawKernel(1.0, 0.4), e, 0.5)
        assert len(res.records) == 0  # eta is infinite


class TestMultiD:
    def test_axis_membership_ignores_other_coordinates(self):
        e = uniform_box_ensemble(80, [0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], seed=9)
        en = normalized(e)
        p = axis_step_params(PowerLawKernel(1.0, 1.0), en, 0, 0.5)
        from flockctrl import build_control_piece

        piece = build_control_piece(p, 1, 0.0, support_box(e))
        x = e.x.copy()
        v = e.v.copy()
        f1 = piece.force(x, v, 0.0)
        x2, v2 = x.copy(), v.copy()
        x2[:, 1] += 100.0
        v2[:, 1] -= 50.0
        f2 = piece.force(x2, v2, 0.0)
        np.testing.assert_array_equal(f1, f2)
        assert np.all(f1[:, 1] == 0.0)

    def test_constant_kernel_factor_any_dimension(self):
        e = normalized(
            uniform_box_ensemble(60, [0.0, 0.0], [1.0, 2.0], [0.0, 0.0], [1.0, 1.0], seed=2)
        )
        p = axis_step_params(CONSTANT_KERNEL, e, 1, 0.5)
        width = max(p.W0 - p.vbar0, p.vbar0)
        assert p.alpha0 == pytest.approx(width / 2.0)

    def test_both_axes_reach_eta(self, small_run_2d):
        _, _, res = small_run_2d
        box = support_box(res.final)
        assert np.all(box.w <= res.eta + 1e-12)

    def test_completed_axis_stays_small(self, small_run_2d):
        _, _, res = small_run_2d
        # find the time axis 0 finished: last record on axis 0
        t0_done = max(r.t_end for r in res.records if r.params.axis == 0)
        for s in res.trajectory.samples:
            if s.t >= t0_done:
                assert s.box.w[0] <= res.eta + 1e-6

    def test_total_time_bound(self, small_run_2d):
        _, e0, res = small_run_2d
        box = support_box(e0)
        n = math.ceil(2.0 / 0.5)
        assert res.total_control_time <= n * float(box.w.sum()) + 1e-9
