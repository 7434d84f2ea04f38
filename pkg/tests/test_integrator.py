"""Time integration: exact linear propagation, scheme orders, adaptive
control, blow-up escalation, and bit-exact resumability.

Oracles: scalar exponentials for single modes, scipy's DOP853 at tight
tolerance for the constant-field ODE, and self-convergence for orders.
"""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from llbar.diagnostics import blowup_monitor, monotonicity_audit
from llbar.errors import BlowUpError, UsageError
from llbar.grid import (
    Field,
    Grid,
    constant_field,
    norm,
    random_band_limited_field,
    to_physical,
    to_spectral,
)
from llbar.integrator import (
    IntegrationResult,
    LinearPropagator,
    OrderReport,
    SchemeConfig,
    SchemeState,
    Stepper,
    fit_order,
    integrate,
    measure_temporal_order,
    step,
)
from llbar.mollifier import make_mollifier
from llbar.physics import DEFAULT_PARAMS, EffectiveFieldParams, linear_symbol

SCHEMES = ("etd1", "etd_rk2", "imex_bdf2")


def single_mode(grid, mode, amplitude, component=2):
    """amplitude * sin(mode . x) on the given component."""
    phase = np.zeros(grid.shape)
    for axis, m in enumerate(mode):
        shape = [1] * grid.dim
        shape[axis] = grid.n
        phase = phase + m * grid.x1.reshape(shape)
    data = np.zeros((3,) + grid.shape)
    data[component] = amplitude * np.sin(phase)
    return Field(grid, data, "physical")


class TestSchemeConfig:
    def test_defaults_valid(self):
        cfg = SchemeConfig()
        assert cfg.scheme == "etd_rk2"
        assert cfg.order == 2
        assert SchemeConfig(scheme="etd1").order == 1
        assert SchemeConfig(scheme="imex_bdf2").order == 2

    def test_rejects_unknown_scheme(self):
        with pytest.raises(UsageError, match="scheme"):
            SchemeConfig(scheme="rk4")

    def test_rejects_bad_dt_ordering(self):
        with pytest.raises(UsageError, match="dt"):
            SchemeConfig(dt=1e-3, dt_min=1e-2)
        with pytest.raises(UsageError, match="dt"):
            SchemeConfig(dt=2.0, dt_max=1.0)
        with pytest.raises(UsageError, match="dt"):
            SchemeConfig(dt=-1e-3)

    def test_rejects_bad_safety_and_tol(self):
        with pytest.raises(UsageError, match="safety"):
            SchemeConfig(safety=0.0)
        with pytest.raises(UsageError, match="safety"):
            SchemeConfig(safety=1.5)
        with pytest.raises(UsageError, match="tol"):
            SchemeConfig(tol=0.0)

    def test_adaptive_needs_single_step_scheme(self):
        with pytest.raises(UsageError, match="adaptive"):
            SchemeConfig(scheme="imex_bdf2", adaptive=True)
        SchemeConfig(scheme="etd_rk2", adaptive=True)  # fine


class TestLinearPropagator:
    def test_zero_mode_values(self, grid32_2d):
        dt = 1e-3
        full = LinearPropagator.build(grid32_2d, dt, splitting="full")
        cons = LinearPropagator.build(grid32_2d, dt, splitting="conservative")
        # the k=0 entry sits at the flat index 0 in fft ordering
        assert full.exp.flat[0] == pytest.approx(math.exp(2 * dt), rel=1e-14)
        assert cons.exp.flat[0] == 1.0
        assert np.all(np.isfinite(full.exp)) and np.all(np.isfinite(cons.exp))

    def test_tables_match_scalar_formulas(self, grid32_2d):
        dt = 2e-3
        lp = LinearPropagator.build(grid32_2d, dt)
        z = dt * lp.symbol
        # sample a spread of z values against direct scalar evaluation
        flat_z = z.reshape(-1)
        idx = np.argsort(np.abs(flat_z))[[0, 5, 50, 200, -1]]
        for i in idx:
            zz = flat_z[i]
            if abs(zz) > 1e-3:
                assert lp.phi1.reshape(-1)[i] == pytest.approx(
                    math.expm1(zz) / zz, rel=1e-13
                )
                assert lp.phi2.reshape(-1)[i] == pytest.approx(
                    (math.expm1(zz) - zz) / zz**2, rel=1e-12
                )
            assert lp.exp.reshape(-1)[i] == pytest.approx(math.exp(zz), rel=1e-13)

    def test_phi_branches_agree_at_series_crossover(self):
        # at the switch points the 3-term series and the expm1 form must
        # coincide (series truncation error ~ z^3 is below roundoff there)
        for z0 in (1e-5, -1e-5):
            series = 1.0 + z0 / 2.0 + z0 * z0 / 6.0
            direct = math.expm1(z0) / z0
            assert series == pytest.approx(direct, rel=1e-13)
        for z0 in (1e-4, -1e-4):
            series = 0.5 + z0 / 6.0 + z0 * z0 / 24.0
            direct = (math.expm1(z0) - z0) / z0**2
            assert series == pytest.approx(direct, rel=1e-11)
        from llbar.integrator import _phi1, _phi2

        assert _phi1(np.array([0.0]))[0] == 1.0
        assert _phi2(np.array([0.0]))[0] == 0.5

    def test_neutral_mode_full_splitting(self, grid32_2d):
        # |k|^2 = 2 is a root of the full symbol: propagator exactly 1
        dt = 1e-2
        lp = LinearPropagator.build(grid32_2d, dt)
        neutral = np.isclose(grid32_2d.ksq, 2.0)
        assert neutral.any()
        assert np.all(lp.exp[neutral] == 1.0)


class TestStep:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_unit_constant_stationary(self, grid32_2d, scheme):
        u = constant_field(grid32_2d, (0.0, 0.0, 1.0))
        out = step(u, SchemeConfig(scheme=scheme, dt=1e-2))
        assert norm(to_physical(out) - u, "linf") <= 1e-13

    def test_single_mode_etd1_matches_exponential(self, grid64_2d):
        # amplitude 1e-8: nonlinear contribution ~ 1e-16, pure linear flow
        amp, dt = 1e-8, 1e-3
        for mode, ksq in (((1, 0), 1.0), ((2, 0), 4.0), ((2, 1), 5.0)):
            u = single_mode(grid64_2d, mode, amp)
            out = to_physical(step(u, SchemeConfig(scheme="etd1", dt=dt)))
            sigma = -(ksq**2) + ksq + 2.0
            expect = math.exp(sigma * dt)
            err = norm(out - u * expect, "linf") / amp
            assert err <= 1e-8, (mode, err)

    def test_single_mode_with_mollifier_uses_damped_symbol(self, grid32_2d):
        amp, dt = 1e-8, 1e-3
        J = make_mollifier(grid32_2d, 0.3, "gaussian")
        u = single_mode(grid32_2d, (2, 0), amp)
        out = step(u, SchemeConfig(scheme="etd1", dt=dt), J=J)
        sig = linear_symbol(grid32_2d, DEFAULT_PARAMS, "full", J)
        expect = Field(
            grid32_2d, np.exp(sig * dt) * to_spectral(u).data, "spectral"
        )
        assert norm(to_physical(out) - to_physical(expect), "linf") / amp <= 1e-10

    def test_representation_preserved(self, grid16_2d):
        u = random_band_limited_field(grid16_2d, seed=0, amplitude=0.3, kmax=4)
        out_p = step(u, SchemeConfig(dt=1e-3))
        assert out_p.representation == "physical"
        out_s = step(to_spectral(u), SchemeConfig(dt=1e-3))
        assert out_s.representation == "spectral"

    def test_mollifier_grid_mismatch_rejected(self, grid16_2d, grid32_2d):
        J = make_mollifier(grid32_2d, 0.3, "gaussian")
        u = constant_field(grid16_2d, (0.0, 0.0, 1.0))
        with pytest.raises(UsageError, match="grid"):
            step(u, SchemeConfig(dt=1e-3), J=J)


class TestConstantOde:
    """Spatially constant data reduces to c' = 2c(1-c^2) exactly."""

    @staticmethod
    def reference(t_end, c0=0.5):
        sol = solve_ivp(
            lambda t, c: 2 * c * (1 - c * c),
            (0.0, t_end),
            [c0],
            rtol=1e-12,
            atol=1e-14,
            method="DOP853",
        )
        return float(sol.y[0, -1])

    @pytest.mark.parametrize("scheme", ["etd_rk2", "imex_bdf2"])
    def test_matches_reference_to_1em6(self, scheme):
        g = Grid(1, 8)  # the dynamics are grid-independent for constants
        u0 = constant_field(g, (0.0, 0.0, 0.5))
        res = integrate(u0, 1.0, SchemeConfig(scheme=scheme, dt=1e-3), report_every=10**9)
        c = float(to_physical(res.field).data[2].flat[0])
        assert abs(c - self.reference(1.0)) <= 1e-6

    def test_etd1_first_order_error_scaling(self):
        # coarse etd1 error shrinks ~2x when dt halves, extrapolating to
        # the same reference value
        g = Grid(1, 8)
        u0 = constant_field(g, (0.0, 0.0, 0.5))
        ref = self.reference(1.0)
        errs = []
        for dt in (2e-3, 1e-3):
            res = integrate(u0, 1.0, SchemeConfig(scheme="etd1", dt=dt), report_every=10**9)
            errs.append(abs(float(to_physical(res.field).data[2].flat[0]) - ref))
        assert errs[1] / errs[0] == pytest.approx(0.5, abs=0.1)


class TestIntegrate:
    def test_t_end_zero_returns_u0_and_reports_initial_state(self, grid16_2d):
        u0 = random_band_limited_field(grid16_2d, seed=1, amplitude=0.4, kmax=4)
        res = integrate(u0, 0.0, SchemeConfig())
        assert len(res.series) == 1  # the initial diagnostics, nothing else
        assert res.series.reports[0].t == 0.0
        assert res.state.step == 0
        assert np.array_equal(res.field.data, to_spectral(u0).data)

    def test_negative_t_end_rejected(self, grid16_2d):
        u0 = constant_field(grid16_2d, (0.0, 0.0, 1.0))
        with pytest.raises(UsageError, match="t_end"):
            integrate(u0, -1.0, SchemeConfig())

    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_stationary_over_unit_time(self, grid32_2d, scheme):
        u0 = constant_field(grid32_2d, (0.0, 0.0, 1.0))
        res = integrate(u0, 1.0, SchemeConfig(scheme=scheme, dt=1e-2))
        assert norm(to_physical(res.field) - u0, "linf") <= 1e-12

    def test_report_cadence_first_every_tenth_last(self, grid16_2d):
        u0 = random_band_limited_field(grid16_2d, seed=2, amplitude=0.3, kmax=4)
        res = integrate(u0, 0.025, SchemeConfig(dt=1e-3), report_every=10)
        # 25 steps: reports at steps 0, 10, 20, 25
        assert np.allclose(res.series.times, [0.0, 0.010, 0.020, 0.025])

    def test_observer_called_at_cadence(self, grid16_2d):
        u0 = random_band_limited_field(grid16_2d, seed=2, amplitude=0.3, kmax=4)
        seen = []
        integrate(
            u0,
            0.02,
            SchemeConfig(dt=1e-3),
            observer=lambda u, t, k: seen.append(k),
            report_every=5,
        )
        assert seen == [0, 5, 10, 15, 20]

    def test_deterministic_rerun_bit_exact(self, grid32_2d):
        u0 = random_band_limited_field(grid32_2d, seed=3, amplitude=0.5, kmax=8)
        cfg = SchemeConfig(scheme="etd_rk2", dt=1e-3)
        a = integrate(u0, 0.05, cfg)
        b = integrate(u0, 0.05, cfg)
        assert np.array_equal(a.field.data, b.field.data)
        assert [r.row() for r in a.series.reports] == [
            r.row() for r in b.series.reports
        ]

    def test_short_final_step_lands_on_t_end(self, grid16_2d):
        u0 = random_band_limited_field(grid16_2d, seed=1, amplitude=0.3, kmax=4)
        for scheme in SCHEMES:
            res = integrate(u0, 0.0105, SchemeConfig(scheme=scheme, dt=1e-3))
            assert res.state.t == pytest.approx(0.0105, abs=1e-15)
            assert res.state.step == 11

    def test_metadata_carried_into_series(self, grid16_2d):
        u0 = constant_field(grid16_2d, (0.0, 0.0, 1.0))
        res = integrate(
            u0, 0.01, SchemeConfig(dt=1e-3), metadata={"seed": "7", "scheme": "etd_rk2"}
        )
        assert res.series.metadata == {"seed": "7", "scheme": "etd_rk2"}


class TestEnergyBehaviour:
    def test_resolved_run_energy_monotone_and_audited(self, grid32_2d):
        u0 = random_band_limited_field(grid32_2d, seed=3, amplitude=0.5, kmax=8)
        for scheme in SCHEMES:
            res = integrate(u0, 0.25, SchemeConfig(scheme=scheme, dt=1e-3), report_every=1)
            audit = monotonicity_audit(res.series)
            assert audit.passed, (scheme, audit)
            assert blowup_monitor(res.series).healthy

    def test_dissipation_balance_halves_with_dt(self, grid32_2d):
        # left-rectangle balance |E_N - E_0 + sum dt D_n| is first order
        u0 = random_band_limited_field(grid32_2d, seed=3, amplitude=0.5, kmax=8)

        def balance(dt):
            res = integrate(u0, 0.25, SchemeConfig(scheme="etd_rk2", dt=dt), report_every=1)
            e = res.series.column("energy")
            d = res.series.column("dissipation")
            dts = np.diff(res.series.times)
            return abs(e[-1] - e[0] + float(np.sum(dts * d[:-1])))

        b_coarse, b_fine = balance(2e-3), balance(1e-3)
        assert 0.3 <= b_fine / b_coarse <= 0.7

    def test_overstepped_run_fails_audit(self, grid32_2d):
        # ten times the stable step: energy climbs, the audit has teeth
        u0 = random_band_limited_field(grid32_2d, seed=3, amplitude=0.5, kmax=8)
        res = integrate(u0, 2.0, SchemeConfig(scheme="etd1", dt=0.2), report_every=1)
        audit = monotonicity_audit(res.series)
        assert not audit.passed
        assert audit.max_energy_jump > 1.0


class TestTemporalOrder:
    @pytest.mark.parametrize(
        "scheme,dts,window",
        [
            ("etd1", (1e-5, 2.5e-4, 5e-4, 1e-3), (0.8, 1.3)),
            ("etd_rk2", (1.25e-4, 5e-4, 1e-3, 2e-3), (1.8, 2.3)),
            ("imex_bdf2", (1.25e-4, 5e-4, 1e-3, 2e-3), (1.8, 2.3)),
        ],
    )
    def test_nonlinear_orders(self, grid32_2d, scheme, dts, window):
        u0 = random_band_limited_field(
            grid32_2d, seed=5, decay_r=5.0, amplitude=0.5, kmax=6
        )
        rep = measure_temporal_order(
            u0, SchemeConfig(scheme=scheme, dt=1e-3), dts, t_end=0.04
        )
        assert rep.reliable, rep
        assert window[0] <= rep.order <= window[1], rep

    def test_richardson_consistent_with_nominal_order(self, grid32_2d):
        # two-run self-convergence: error(dt)/error(dt/2) ~ 2^order
        u0 = random_band_limited_field(
            grid32_2d, seed=5, decay_r=5.0, amplitude=0.5, kmax=6
        )
        for scheme in SCHEMES:
            cfg = SchemeConfig(scheme=scheme, dt=1e-3)
            nominal = cfg.order
            runs = {
                dt: integrate(u0, 0.04, SchemeConfig(scheme=scheme, dt=dt), report_every=10**9).field
                for dt in (1e-5, 5e-4, 1e-3)
            }
            e_fine = norm(runs[5e-4] - runs[1e-5], "l2")
            e_coarse = norm(runs[1e-3] - runs[1e-5], "l2")
            measured = math.log2(e_coarse / e_fine)
            assert measured >= nominal - 0.2, (scheme, measured)

    def test_linear_only_flagged_exact(self, grid32_2d):
        u0 = random_band_limited_field(grid32_2d, seed=4, amplitude=0.5, kmax=6)
        cfg = SchemeConfig(scheme="etd1", nonlinear=False, dt=1e-3)
        rep = measure_temporal_order(u0, cfg, [1e-4, 5e-4, 1e-3, 2e-3], t_end=0.02)
        assert rep.flag == "exact"
        assert math.isnan(rep.order)

    def test_linear_only_matches_exact_propagator(self, grid32_2d):
        # n steps of the pure linear flow = one application of e^{sigma t}
        u0 = random_band_limited_field(grid32_2d, seed=4, amplitude=0.5, kmax=6)
        cfg = SchemeConfig(scheme="etd_rk2", nonlinear=False, dt=1e-3)
        res = integrate(u0, 0.05, cfg, report_every=10**9)
        sig = linear_symbol(grid32_2d, DEFAULT_PARAMS, "full")
        expect = Field(grid32_2d, np.exp(0.05 * sig) * to_spectral(u0).data, "spectral")
        assert norm(res.field - expect, "l2") <= 1e-12 * max(1.0, norm(expect, "l2"))

    def test_needs_three_step_sizes(self, grid16_2d):
        u0 = constant_field(grid16_2d, (0.0, 0.0, 0.5))
        with pytest.raises(UsageError, match="three"):
            measure_temporal_order(u0, SchemeConfig(), [1e-3, 2e-3])

    def test_fit_order_flags(self):
        rep = fit_order([1e-3, 2e-3, 4e-3], [1e-6, 2e-6, 4e-6])
        assert rep.reliable and rep.order == pytest.approx(1.0, abs=1e-12)
        bad = fit_order([1e-3, 2e-3, 4e-3], [2e-6, 1e-6, 4e-6])
        assert bad.flag == "unreliable" and not bad.reliable
        tiny = fit_order([1e-3, 2e-3, 4e-3], [1e-15, 2e-15, 3e-15], scale=1.0)
        assert tiny.flag == "exact"
        with pytest.raises(UsageError, match="order fit"):
            fit_order([1e-3], [1e-6])


class TestCheckpointResume:
    @pytest.mark.parametrize("scheme", SCHEMES)
    def test_split_run_bit_exact(self, grid32_2d, scheme):
        u0 = random_band_limited_field(grid32_2d, seed=7, amplitude=0.5, kmax=10)
        cfg = SchemeConfig(scheme=scheme, dt=1e-3)
        full = integrate(u0, 0.1, cfg)
        half = integrate(u0, 0.05, cfg)
        resumed = integrate(half.field, 0.1, cfg, state=half.state)
        assert np.array_equal(full.field.data, resumed.field.data)
        assert resumed.state.step == full.state.step
        assert resumed.state.t == full.state.t

    def test_bdf2_history_required_for_exact_resume(self, grid32_2d):
        # dropping the two-step history falls back to a bootstrap step:
        # still accurate, but no longer the identical float sequence
        u0 = random_band_limited_field(grid32_2d, seed=7, amplitude=0.5, kmax=10)
        cfg = SchemeConfig(scheme="imex_bdf2", dt=1e-3)
        full = integrate(u0, 0.1, cfg)
        half = integrate(u0, 0.05, cfg)
        fresh = SchemeState(t=half.state.t, step=half.state.step)
        resumed = integrate(half.field, 0.1, cfg, state=fresh)
        assert not np.array_equal(full.field.data, resumed.field.data)
        assert norm(full.field - resumed.field, "l2") <= 1e-6


class TestAdaptive:
    def test_tracks_fixed_fine_reference(self, grid32_2d):
        u0 = random_band_limited_field(grid32_2d, seed=3, amplitude=0.5, kmax=8)
        ref = integrate(
            u0, 0.1, SchemeConfig(scheme="etd_rk2", dt=1e-5), report_every=10**9
        ).field
        res = integrate(
            u0,
            0.1,
            SchemeConfig(scheme="etd_rk2", dt=1e-3, adaptive=True, tol=1e-7, dt_max=0.05),
        )
        assert norm(res.field - ref, "l2") <= 1e-4
        # error control should not need more steps than the tolerance demands
        assert res.state.step < 100

    def test_collapse_below_dt_min_raises_blowup(self, grid32_2d):
        u0 = random_band_limited_field(grid32_2d, seed=3, amplitude=0.5, kmax=8)
        cfg = SchemeConfig(
            scheme="etd_rk2", dt=1e-4, adaptive=True, tol=1e-18, dt_min=1e-5
        )
        with pytest.raises(BlowUpError, match="dt_min"):
            integrate(u0, 0.01, cfg)


class TestBlowUpEscalation:
    def test_unstable_run_raises_with_partial_series(self, grid32_2d):
        u0 = random_band_limited_field(
            grid32_2d, seed=2, decay_r=1.0, amplitude=40.0, kmax=10
        )
        with pytest.raises(BlowUpError) as exc:
            integrate(u0, 10.0, SchemeConfig(scheme="etd1", dt=0.5), report_every=1)
        err = exc.value
        assert err.t is not None and err.step is not None
        assert err.series is not None and len(err.series) >= 2
        assert not err.series.reports[-1].is_finite
        verdict = blowup_monitor(err.series)
        assert verdict.status == "blown-up"
        assert math.isfinite(verdict.first_t)

    def test_non_finite_initial_data_trips_immediately(self, grid16_2d):
        data = np.zeros((3,) + grid16_2d.shape)
        data[0, 1, 1] = float("nan")
        u0 = Field(grid16_2d, data, "physical")
        with pytest.raises(BlowUpError) as exc:
            integrate(u0, 0.01, SchemeConfig(dt=1e-3))
        assert exc.value.step == 0
        assert len(exc.value.series) == 1
        assert not exc.value.series.reports[0].is_finite
        with pytest.raises(BlowUpError):
            step(u0, SchemeConfig(dt=1e-3))
