"""Time integration of u_t = F(u) with the stiff linear symbol exact.

The linear part sigma(xi) (full: -|xi|^4 + |xi|^2 + 2, or conservative:
-|xi|^4) is integrated by its exponential; the remaining nonlinearity is
advanced by exponential Euler (etd1), the two-stage exponential
Runge-Kutta scheme (etd_rk2), or the semi-implicit two-step backward
differentiation formula (imex_bdf2, bootstrapped by one etd_rk2 step).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from .diagnostics import TimeSeries, report
from .errors import BlowUpError, UsageError
from .grid import SPECTRAL, Field, Grid, norm, to_spectral
from .mollifier import MollifierSymbol
from .physics import DEFAULT_PARAMS, EffectiveFieldParams, linear_symbol, nonlinear_rhs

SCHEMES = ("etd1", "etd_rk2", "imex_bdf2")
SCHEME_ORDER = {"etd1": 1, "etd_rk2": 2, "imex_bdf2": 2}


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "etd_rk2"
    dt: float = 1e-3
    adaptive: bool = False
    dt_min: float = 1e-10
    dt_max: float = 1.0
    safety: float = 0.9
    tol: float = 1e-6
    splitting: str = "full"
    nonlinear: bool = True

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise UsageError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not (0 < self.dt_min <= self.dt <= self.dt_max):
            raise UsageError(
                f"need 0 < dt_min <= dt <= dt_max, got "
                f"({self.dt_min}, {self.dt}, {self.dt_max})"
            )
        if not (0 < self.safety <= 1):
            raise UsageError(f"safety must lie in (0, 1], got {self.safety}")
        if self.tol <= 0:
            raise UsageError(f"tol must be positive, got {self.tol}")
        if self.adaptive and self.scheme == "imex_bdf2":
            raise UsageError("adaptive stepping supports the single-step schemes")

    @property
    def order(self) -> int:
        return SCHEME_ORDER[self.scheme]


@dataclass(frozen=True)
class LinearPropagator:
    """Tabulated e^{dt sigma}, phi1(dt sigma), phi2(dt sigma) on the lattice."""

    grid: Grid
    dt: float
    splitting: str
    symbol: np.ndarray
    exp: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray

    @classmethod
    def build(
        cls,
        grid: Grid,
        dt: float,
        p: EffectiveFieldParams = DEFAULT_PARAMS,
        splitting: str = "full",
        J: MollifierSymbol | None = None,
    ) -> "LinearPropagator":
        sigma = linear_symbol(grid, p, splitting, J)
        z = dt * sigma
        return cls(grid, dt, splitting, sigma, np.exp(z), _phi1(z), _phi2(z))


def _phi1(z):
    """(e^z - 1)/z, series near zero."""
    small = np.abs(z) < 1e-5
    zs = np.where(small, 1.0, z)
    direct = np.expm1(zs) / zs
    series = 1.0 + z / 2.0 + z * z / 6.0
    return np.where(small, series, direct)


def _phi2(z):
    """(e^z - 1 - z)/z^2, series near zero."""
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    direct = (np.expm1(zs) - zs) / (zs * zs)
    series = 0.5 + z / 6.0 + z * z / 24.0
    return np.where(small, series, direct)


@dataclass
class SchemeState:
    """Everything beyond the field needed to continue a run bit-exactly."""

    t: float = 0.0
    step: int = 0
    prev_field: Field | None = None  # u_{n-1}, spectral (imex_bdf2)
    prev_nonlinear: Field | None = None  # N(u_{n-1}), spectral


@dataclass
class IntegrationResult:
    field: Field
    series: TimeSeries
    state: SchemeState


class Stepper:
    """Stateful single-run driver; owns the propagator tables and, for the
    two-step scheme, the history pair."""

    def __init__(
        self,
        grid: Grid,
        cfg: SchemeConfig,
        p: EffectiveFieldParams = DEFAULT_PARAMS,
        J: MollifierSymbol | None = None,
        state: SchemeState | None = None,
    ):
        if J is not None and not J.grid.compatible(grid):
            raise UsageError("mollifier grid does not match the run grid")
        self.grid = grid
        self.cfg = cfg
        self.p = p
        self.J = J
        self.state = state if state is not None else SchemeState()
        self._tables: dict[float, LinearPropagator] = {}

    def _prop(self, dt: float) -> LinearPropagator:
        if dt not in self._tables:
            if len(self._tables) > 8:
                self._tables.clear()
            self._tables[dt] = LinearPropagator.build(
                self.grid, dt, self.p, self.cfg.splitting, self.J
            )
        return self._tables[dt]

    def _nonlinear(self, uhat: Field) -> Field:
        if not self.cfg.nonlinear:
            return Field(self.grid, np.zeros_like(uhat.data), SPECTRAL)
        return nonlinear_rhs(uhat, self.p, self.J, self.cfg.splitting)

    def _etd1(self, uhat: Field, dt: float) -> Field:
        lp = self._prop(dt)
        nhat = self._nonlinear(uhat)
        data = lp.exp * uhat.data + dt * lp.phi1 * nhat.data
        return Field(self.grid, data, SPECTRAL)

    def _etd_rk2(self, uhat: Field, dt: float) -> Field:
        lp = self._prop(dt)
        nhat = self._nonlinear(uhat)
        a = Field(self.grid, lp.exp * uhat.data + dt * lp.phi1 * nhat.data, SPECTRAL)
        na = self._nonlinear(a)
        data = a.data + dt * lp.phi2 * (na.data - nhat.data)
        return Field(self.grid, data, SPECTRAL)

    def _bdf2(self, uhat: Field, dt: float) -> Field:
        st = self.state
        lp = self._prop(dt)
        nhat = self._nonlinear(uhat)
        if st.prev_field is None:
            new = self._etd_rk2(uhat, dt)
        else:
            num = (
                4.0 * uhat.data
                - st.prev_field.data
                + 2.0 * dt * (2.0 * nhat.data - st.prev_nonlinear.data)
            )
            new = Field(self.grid, num / (3.0 - 2.0 * dt * lp.symbol), SPECTRAL)
        st.prev_field = uhat
        st.prev_nonlinear = nhat
        return new

    def advance(self, uhat: Field, dt: float) -> Field:
        # Overflow in a diverging run is detected downstream as a non-finite
        # state and escalated to the blow-up signal; silence the interim
        # numpy warnings so the termination is clean.
        with np.errstate(over="ignore", invalid="ignore"):
            if self.cfg.scheme == "etd1":
                return self._etd1(uhat, dt)
            if self.cfg.scheme == "etd_rk2":
                return self._etd_rk2(uhat, dt)
            # the two-step formula needs a constant dt; off-schedule step
            # sizes (the shortened final step) fall back to the one-step
            # scheme
            if self.state.prev_field is not None and dt != self.cfg.dt:
                out = self._etd_rk2(uhat, dt)
                self.state.prev_field = None
                self.state.prev_nonlinear = None
                return out
            return self._bdf2(uhat, dt)

    def advance_adaptive(self, uhat: Field, dt: float):
        """Step-doubling control: one dt step against two dt/2 steps.

        Returns (new field, dt taken, next dt). Raises the blow-up signal
        when dt collapses below dt_min.
        """
        cfg = self.cfg
        p_ord = cfg.order
        while True:
            big = self.advance(uhat, dt)
            half = self.advance(self.advance(uhat, dt / 2.0), dt / 2.0)
            if np.all(np.isfinite(half.data)) and np.all(np.isfinite(big.data)):
                est = norm(big - half, "l2") / (2.0**p_ord - 1.0)
                scale = max(1.0, norm(half, "l2"))
            else:
                est, scale = float("inf"), 1.0
            if est <= cfg.tol * scale:
                if est == 0.0:
                    factor = 5.0
                else:
                    factor = cfg.safety * (cfg.tol * scale / est) ** (1.0 / (p_ord + 1))
                next_dt = min(max(factor, 0.2), 5.0) * dt
                return half, dt, min(max(next_dt, cfg.dt_min), cfg.dt_max)
            dt = dt / 2.0
            if dt < cfg.dt_min:
                raise BlowUpError(
                    "step size collapsed below dt_min under error control",
                    t=self.state.t,
                    step=self.state.step,
                )


def step(
    u: Field,
    cfg: SchemeConfig,
    p: EffectiveFieldParams = DEFAULT_PARAMS,
    J: MollifierSymbol | None = None,
) -> Field:
    """One fixed step of the configured scheme (representation preserved).

    Raises the blow-up signal on non-finite input (step 0) or output
    (step 1).
    """
    if not np.all(np.isfinite(u.data)):
        raise BlowUpError("non-finite input state", t=0.0, step=0, field=u)
    stepper = Stepper(u.grid, cfg, p, J)
    out = stepper.advance(to_spectral(u), cfg.dt)
    if not np.all(np.isfinite(out.data)):
        raise BlowUpError("non-finite state after one step", t=cfg.dt, step=1, field=out)
    if u.representation == SPECTRAL:
        return out
    from .grid import to_physical

    return to_physical(out)


def integrate(
    u0: Field,
    t_end: float,
    cfg: SchemeConfig,
    p: EffectiveFieldParams = DEFAULT_PARAMS,
    J: MollifierSymbol | None = None,
    observer=None,
    report_every: int = 10,
    metadata: dict | None = None,
    state: SchemeState | None = None,
) -> IntegrationResult:
    """Advance u0 to t_end; returns the final field, the sampled time
    series (first step, every report_every-th, last), and the scheme
    state needed to continue the run bit-exactly.

    A non-finite state raises the blow-up signal carrying the partial
    series and the offending field; the series always gains a final
    flagged report first, so on-disk records show the failure.
    """
    if t_end < 0:
        raise UsageError(f"t_end must be nonnegative, got {t_end}")
    series = TimeSeries(metadata=dict(metadata or {}))
    stepper = Stepper(u0.grid, cfg, p, J, state=state)
    st = stepper.state
    if not np.all(np.isfinite(u0.data)):
        series.append(report(u0, st.t, p))
        raise BlowUpError(
            "non-finite initial data",
            t=st.t,
            step=st.step,
            series=series,
            field=u0,
        )
    uhat = to_spectral(u0)

    def sample(u, force=False):
        if force or st.step % report_every == 0:
            if not series.reports or st.t > series.reports[-1].t:
                series.append(report(u, st.t, p))
                if observer is not None:
                    observer(u, st.t, st.step)

    sample(uhat, force=True)
    if t_end == 0:
        # zero-length run: still report the initial state
        return IntegrationResult(uhat, series, st)
    dt_next = cfg.dt
    while True:
        remaining = t_end - st.t
        if remaining <= max(1e-9 * dt_next, 1e-12 * max(1.0, abs(t_end))):
            break  # landed on t_end up to roundoff
        # Snap to the nominal step when remaining matches it to roundoff, so
        # runs split at a checkpoint take the identical dt sequence; a
        # genuinely partial remainder becomes one short final step.
        dt = dt_next if remaining >= dt_next * (1.0 - 1e-9) else remaining
        if not cfg.adaptive:
            uhat = stepper.advance(uhat, dt)
            taken = dt
        else:
            uhat, taken, dt_next = stepper.advance_adaptive(uhat, dt)
        st.t += taken
        st.step += 1
        if not np.all(np.isfinite(uhat.data)):
            series.append(report(uhat, st.t, p))
            raise BlowUpError(
                f"non-finite state at t={st.t:.6g} (step {st.step})",
                t=st.t,
                step=st.step,
                series=series,
                field=uhat,
            )
        sample(uhat)
    sample(uhat, force=True)
    return IntegrationResult(uhat, series, st)


@dataclass(frozen=True)
class OrderReport:
    order: float
    dts: tuple
    errors: tuple
    flag: str = ""  # "" | "exact" | "unreliable"

    @property
    def reliable(self) -> bool:
        return self.flag == ""


def fit_order(dts, errors, scale: float = 1.0) -> OrderReport:
    """Log-log slope of errors vs dt, with reliability flags.

    Errors at machine precision (all below 1e-12 x scale) carry no order
    information -> "exact"; errors that fail to shrink monotonically as dt
    shrinks -> "unreliable". dts and errors must be sorted by dt ascending.
    """
    dts = tuple(float(d) for d in dts)
    errors = tuple(float(e) for e in errors)
    if len(dts) != len(errors) or len(dts) < 2:
        raise UsageError("order fit needs matched dts/errors, at least two")
    if max(errors) <= 1e-12 * scale:
        return OrderReport(float("nan"), dts, errors, "exact")
    flag = "" if all(a < b for a, b in zip(errors, errors[1:])) else "unreliable"
    slope = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
    return OrderReport(slope, dts, errors, flag)


def measure_temporal_order(
    u0: Field,
    cfg: SchemeConfig,
    dts,
    t_end: float = 0.1,
    p: EffectiveFieldParams = DEFAULT_PARAMS,
    J: MollifierSymbol | None = None,
) -> OrderReport:
    """Self-convergence order: errors against the finest-dt run.

    The smallest dt serves as the reference and should sit well below the
    measured ones (a factor >= 4; otherwise the reference's own error
    biases the slope upward by roughly (1 - dt_ref/dt) per point).
    """
    dts = sorted(float(d) for d in dts)
    if len(dts) < 3:
        raise UsageError("order measurement needs at least three step sizes")
    finals = {}
    for dt in dts:
        run_cfg = replace(cfg, dt=dt, adaptive=False)
        finals[dt] = integrate(u0, t_end, run_cfg, p, J, report_every=10**9).field
    ref = finals[dts[0]]
    errors = [norm(finals[dt] - ref, "l2") for dt in dts[1:]]
    scale = max(1.0, norm(ref, "l2"))
    return fit_order(dts[1:], errors, scale)
