"""Volume-budget control synthesis: band geometry, contraction, strategy."""

import math

import numpy as np
import pytest

from flockctrl import (
    AlreadyFlockedSignal,
    Ensemble,
    ExponentialKernel,
    PowerLawKernel,
    TabulatedKernel,
    complete_strategy_space,
    fundamental_step_space,
    normalized,
    space_force,
    space_step_params,
    support_box,
    theorem6_threshold,
    uniform_box_ensemble,
)

CONSTANT_KERNEL = TabulatedKernel((0.0, 1000.0), (1.0, 1.0))


def _normalized_uniform(n=200, seed=7, x_hi=1.0, v_hi=1.0):
    e = uniform_box_ensemble(n, 0.0, x_hi, 0.0, v_hi, seed=seed)
    return normalized(e)


class TestSpaceStepParams:
    def test_constant_kernel_band_offsets(self):
        # phi0 = phid = 1: alpha = (W - vbar)/2, beta = (W - vbar)/6
        e = _normalized_uniform(seed=1)
        p = space_step_params(CONSTANT_KERNEL, e, 1.0)
        assert p.alpha0 == pytest.approx((p.W0 - p.vbar0) / 2.0)
        assert p.beta0 == pytest.approx((p.W0 - p.vbar0) / 6.0)

    def test_eps_closed_form_when_beta_binds(self):
        # large budget: eps = beta/2 and the band area is well under c
        e = _normalized_uniform(seed=2)
        p = space_step_params(ExponentialKernel(1.0, 1.0), e, 50.0)
        assert p.eps0 == pytest.approx(p.beta0 / 2.0)
        assert p.omega_area <= 50.0

    def test_area_never_exceeds_budget(self):
        for seed in range(8):
            for c in (0.05, 0.3, 1.0, 3.0):
                e = _normalized_uniform(seed=seed)
                p = space_step_params(PowerLawKernel(1.0, 1.0), e, c)
                assert p.omega_area <= c
                # rectangle area recomputed independently
                area = (p.Y0 + p.eps0 * p.W0 + 2.0 * p.eps0) * 4.0 * p.eps0
                assert p.omega_area == pytest.approx(area)

    def test_step_duration_equals_band_width(self):
        e = _normalized_uniform(seed=3)
        p = space_step_params(PowerLawKernel(1.0, 1.0), e, 0.5)
        assert p.T0 == p.eps0

    def test_flocked_signals(self):
        e = Ensemble.from_points([0.0, 1.0], [0.0, 0.0])
        with pytest.raises(AlreadyFlockedSignal):
            space_step_params(PowerLawKernel(), e, 1.0)

    def test_rejects_nonpositive_budget_and_wrong_dimension(self):
        e = _normalized_uniform(seed=4)
        with pytest.raises(ValueError):
            space_step_params(PowerLawKernel(), e, 0.0)
        e2 = uniform_box_ensemble(
            10, [0.0, 0.0], [1.0, 1.0], [0.0, 0.0], [1.0, 1.0], seed=0
        )
        with pytest.raises(ValueError):
            space_step_params(PowerLawKernel(), e2, 1.0)


class TestSpaceForce:
    @pytest.fixture()
    def params(self):
        e = _normalized_uniform(seed=5)
        return space_step_params(PowerLawKernel(1.0, 1.0), e, 1.0)

    def test_plateau_core_is_minus_one(self, params):
        x = 0.5 * params.Y0
        assert space_force(params, x, params.W0) == pytest.approx(-1.0)

    def test_zero_below_band(self, params):
        x = 0.5 * params.Y0
        assert space_force(params, x, params.W0 - 3.0 * params.eps0) == 0.0
        assert space_force(params, x, 0.0) == 0.0

    def test_spatial_ramp_half_height(self, params):
        assert space_force(params, -params.eps0 / 2.0, params.W0) == pytest.approx(-0.5)

    def test_bounded_by_one_everywhere(self, params):
        rng = np.random.default_rng(0)
        x = rng.uniform(-1.0, params.Y0 + 1.0, size=500)
        v = rng.uniform(-1.0, params.W0 + 1.0, size=500)
        f = space_force(params, x, v)
        assert np.all(f <= 0.0) and np.all(f >= -1.0)


class TestFundamentalStepSpace:
    def test_contraction_and_audit(self):
        e = uniform_box_ensemble(200, 0.0, 0.4, 0.0, 0.6, seed=7)
        e1, rec, frag, traj = fundamental_step_space(ExponentialKernel(1.0, 1.0), e, 1.0)
        p = rec["params"]
        assert rec["omega_area"] <= 1.0
        assert rec["max_u_sup"] <= 1.0 + 1e-12
        assert rec["W_after"] <= p["W0"] - p["eps0"] + 1e-6
        assert rec["Y_after"] <= p["Y0"] + p["eps0"] * p["W0"] + 1e-6
        assert frag.total_control_time() == pytest.approx(p["T0"])
        assert support_box(e1).w[0] == pytest.approx(rec["W_after"])


@pytest.fixture(scope="module")
def run():
    k = ExponentialKernel(1.0, 1.0)
    e0 = uniform_box_ensemble(120, 0.0, 0.2, 0.0, 0.5, seed=9)
    return k, e0, complete_strategy_space(k, e0, 1.0)


class TestCompleteStrategySpace:
    def test_threshold_closed_form(self):
        # 0.5 * int_a^inf e^{-2x} dx at a = 2(Y + W^2) = 0.9 -> e^{-1.8}/4
        k = ExponentialKernel(1.0, 1.0)
        assert theorem6_threshold(k, 0.2, 0.5) == pytest.approx(
            0.25 * math.exp(-1.8)
        )

    def test_reaches_eta_with_certificate(self, run):
        _, _, res = run
        assert support_box(res.final).w[0] <= res.eta
        assert res.terminal_verdict.in_region

    def test_per_step_contraction_chain(self, run):
        _, _, res = run
        for a, b in zip(res.records, res.records[1:]):
            assert b["W_before"] <= a["W_after"] + 1e-12
            assert a["W_after"] <= a["W_before"] - a["params"]["eps0"] + 1e-6

    def test_budget_bounds(self, run):
        _, e0, res = run
        box = support_box(e0)
        W0, Y0 = float(box.w[0]), float(box.y[0])
        assert res.total_control_time <= W0 + 1e-9
        assert support_box(res.final).y[0] <= Y0 + W0 * W0 + 1e-6
        assert max(r["omega_area"] for r in res.records) <= 1.0

    def test_plan_is_contiguous(self, run):
        _, _, res = run
        for a, b in zip(res.plan.pieces, res.plan.pieces[1:]):
            assert b.t_start == pytest.approx(a.t_end, abs=1e-9)
