"""Time evolution: dissipative semigroup, linear closed loop, damped integrator.

The damped evolution treats the diagonal part exactly, through the modewise
factors exp((i lam(k) - d(k)) t), and handles the transport nonlinearity
together with the off-diagonal and mean-correction damping pieces inside a
fourth-order exponential Runge-Kutta scheme.  The k = 0 mode is conserved by
every term and is held exactly constant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from . import damping as dmp
from .damping import DampingProfile, feedback_matrix
from .errors import BlowUpError, DgbError
from .spectral import (
    TWO_PI,
    SpectralField,
    constant_field,
    l2_norm,
    mean,
    project_mean_zero,
    _dealias_points,
)
from .symbols import ModelParams, SymbolTable, build_symbols


@dataclass(eq=False)
class TrajectoryRecord:
    """Sampled run diagnostics.

    `l2norms` holds the mean-removed L^2 norm of each state (the quantity the
    decay statements are about); `energy_residuals` aligns with `times` and is
    NaN at the stencil edges, or None when no damping profile applies.
    """

    times: np.ndarray
    states: tuple
    l2norms: np.ndarray
    means: np.ndarray
    energy_residuals: np.ndarray | None
    run_meta: dict

    def __post_init__(self):
        if self.times.size != len(self.states):
            raise ValueError("times and states disagree")
        if self.times.size >= 2 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")


def _fluctuation_norm(v: SpectralField) -> float:
    return l2_norm(project_mean_zero(v))


def semigroup_apply(
    table: SymbolTable, profile: DampingProfile, v0: SpectralField, t: float
) -> SpectralField:
    """Modewise propagator exp(i lam(k) t - d(k) t); forward time only.

    Backward requests are rejected: the dissipative factors would grow.  The
    mean mode propagates with factor one and the L^2 norm contracts.
    """
    if t < 0:
        raise ValueError("backward-time propagation rejected: dissipation runs forward only")
    if v0.n_modes > table.n_modes:
        raise ValueError("state band exceeds the symbol table")
    ks = v0.wavenumbers
    lam = table.eig(ks)
    d = profile.d_symbol(ks)
    return SpectralField(v0.n_modes, np.exp((1j * lam - d) * t) * v0.coeffs)


@dataclass(frozen=True, eq=False)
class LinearClosedLoop:
    """Damped linear generator on the 2N mean-zero modes."""

    n_modes: int
    modes: np.ndarray
    generator: np.ndarray
    damping_matrix: np.ndarray
    spectral_abscissa: float


def build_closed_loop(table: SymbolTable, profile: DampingProfile, n_modes: int) -> LinearClosedLoop:
    """Assemble A = diag(i lam(k)) - B on mean-zero modes and its abscissa.

    B is the Galerkin matrix of the damping feedback: Hermitian positive
    semidefinite, so A generates a contraction semigroup on the truncation.
    """
    if n_modes > table.n_modes:
        raise ValueError("n_modes exceeds the symbol table band")
    modes = np.concatenate([np.arange(-n_modes, 0), np.arange(1, n_modes + 1)])
    b = feedback_matrix(profile, modes)
    a = np.diag(1j * table.eig(modes)) - b
    try:
        eigs = np.linalg.eigvals(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover
        raise DgbError(f"eigen-solver failed on the closed-loop generator: {exc}") from exc
    return LinearClosedLoop(
        n_modes=n_modes,
        modes=modes,
        generator=a,
        damping_matrix=b,
        spectral_abscissa=float(eigs.real.max()),
    )


def field_to_state(v: SpectralField, n_modes: int) -> np.ndarray:
    c = v.with_cutoff(n_modes).coeffs
    return np.concatenate([c[:n_modes], c[n_modes + 1 :]])


def state_to_field(state: np.ndarray, n_modes: int, mean_value: float = 0.0) -> SpectralField:
    c = np.zeros(2 * n_modes + 1, dtype=np.complex128)
    c[:n_modes] = state[:n_modes]
    c[n_modes] = mean_value
    c[n_modes + 1 :] = state[n_modes:]
    return SpectralField(n_modes, c)


def linear_propagate(loop: LinearClosedLoop, v0: SpectralField, t: float) -> SpectralField:
    """Matrix-exponential action of the closed loop; contraction asserted."""
    if t < 0:
        raise ValueError("backward-time propagation rejected")
    state = field_to_state(v0, loop.n_modes)
    out = scipy.linalg.expm(t * loop.generator) @ state
    n_in = np.linalg.norm(state)
    if np.linalg.norm(out) > n_in * (1.0 + 1e-10) + 1e-300:
        raise DgbError("closed-loop propagation violated the contraction bound")
    return state_to_field(out, loop.n_modes, mean_value=mean(v0))


def linear_trajectory(
    loop: LinearClosedLoop, v0: SpectralField, t_final: float, dt: float
) -> TrajectoryRecord:
    """Step the closed loop with one precomputed exponential per dt."""
    if dt <= 0 or t_final <= 0:
        raise ValueError("need positive dt and t_final")
    n_steps = max(1, round(t_final / dt))
    dt_eff = t_final / n_steps
    stepper = scipy.linalg.expm(dt_eff * loop.generator)
    mu = mean(v0)
    state = field_to_state(v0, loop.n_modes)
    times = [0.0]
    states = [state_to_field(state, loop.n_modes, mu)]
    norms = [np.sqrt(TWO_PI) * np.linalg.norm(state)]
    for i in range(n_steps):
        state = stepper @ state
        times.append((i + 1) * dt_eff)
        states.append(state_to_field(state, loop.n_modes, mu))
        norms.append(np.sqrt(TWO_PI) * np.linalg.norm(state))
    return TrajectoryRecord(
        times=np.array(times),
        states=tuple(states),
        l2norms=np.array(norms),
        means=np.full(len(times), mu),
        energy_residuals=None,
        run_meta={"kind": "linear", "dt": dt_eff, "n_modes": loop.n_modes},
    )


def _etdrk4_weights(z: np.ndarray, contour_points: int = 64) -> tuple:
    """The four phi-combinations of the Cox-Matthews scheme, as functions of z.

    Direct formulas cancel catastrophically for small |z| (the numerators
    vanish to third order), so entries with |z| < 0.5 are evaluated by
    averaging the analytic formula over a unit circle around z; the
    integrand is entire, making the trapezoidal average spectrally accurate.
    """
    z = np.asarray(z, dtype=np.complex128)

    def direct(w):
        ew = np.exp(w)
        q = (np.exp(w / 2.0) - 1.0) / w
        w3 = w**3
        f1 = (-4.0 - w + ew * (4.0 - 3.0 * w + w**2)) / w3
        f2 = (2.0 + w + ew * (-2.0 + w)) / w3
        f3 = (-4.0 - 3.0 * w - w**2 + ew * (4.0 - w)) / w3
        return q, f1, f2, f3

    out = [np.empty_like(z) for _ in range(4)]
    small = np.abs(z) < 0.5
    if np.any(~small):
        vals = direct(z[~small])
        for o, v in zip(out, vals):
            o[~small] = v
    if np.any(small):
        theta = np.exp(2j * np.pi * (np.arange(contour_points) + 0.5) / contour_points)
        ring = z[small][:, None] + theta[None, :]
        vals = direct(ring)
        for o, v in zip(out, vals):
            o[small] = v.mean(axis=1)
    return tuple(out)


class Etdrk4Integrator:
    """Fourth-order exponential Runge-Kutta stepper for the damped dynamics.

    Linear part: i lam(k) - d(k), treated exactly.  Explicit part: the
    dealiased transport term, the off-diagonal and mean-correction damping
    pieces (projected onto the state band), and optional forcing.  Passing
    profile=None integrates the undamped equation.
    """

    def __init__(
        self,
        table: SymbolTable,
        profile: DampingProfile | None,
        n_modes: int,
        dt: float,
        forcing=None,
    ):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if n_modes > table.n_modes:
            raise ValueError("n_modes exceeds the symbol table band")
        self.n_modes = n_modes
        self.dt = dt
        self.forcing = forcing
        ks = np.arange(-n_modes, n_modes + 1)
        lam = table.eig(ks)
        d = profile.d_symbol(ks) if profile is not None else np.zeros(ks.size)
        if profile is not None and dt * float(np.max(d)) > 10.0:
            warnings.warn("dt * max d(k) > 10: explicitly treated damping remainders may destabilise")
        lin = 1j * lam - d
        lin[n_modes] = 0.0
        z = lin * dt
        self._e_full = np.exp(z)
        self._e_half = np.exp(z / 2.0)
        q, f1, f2, f3 = _etdrk4_weights(z)
        self._q = dt * q
        self._f1 = dt * f1
        self._f2 = dt * f2
        self._f3 = dt * f3

        self._m_grid = _dealias_points(n_modes)
        self._ik = 1j * ks

        self._coupling = None
        if profile is not None and profile.k_modes > 0:
            mat = dmp._smoothing_matrix(profile, n_modes)
            center = n_modes + 2 * profile.k_modes
            sub = mat[center - n_modes : center + n_modes + 1, :].copy()
            np.fill_diagonal(sub, 0.0)
            sub[n_modes, :] = 0.0
            kk = profile.k_modes
            pad = lambda arr, b: np.pad(arr, max(0, n_modes - b))[
                max(0, b - n_modes) : max(0, b - n_modes) + 2 * n_modes + 1
            ]
            w1 = TWO_PI * np.conj(pad(profile.ghat, kk))
            ls = np.arange(-kk, kk + 1)
            w2 = np.zeros(2 * n_modes + 1, dtype=np.complex128)
            for i, n in enumerate(ks):
                diffs = ls - n
                w2[i] = TWO_PI * np.sum(
                    np.abs(ls).astype(np.float64) ** profile.delta
                    * dmp._ghat_at(profile, diffs)
                    * np.conj(profile.ghat)
                )
            s3 = float(
                TWO_PI
                * np.sum(np.abs(ls).astype(np.float64) ** profile.delta * np.abs(profile.ghat) ** 2)
            )
            gdg = np.convolve(profile.ghat, np.abs(ls).astype(np.float64) ** profile.delta * profile.ghat)
            self._coupling = {
                "offdiag": sub,
                "w1": w1,
                "w2": w2,
                "s3": s3,
                "vec_g": pad(profile.ghat, kk),
                "vec_gdg": pad(gdg, 2 * kk),
            }

    def _transport(self, coeffs: np.ndarray) -> np.ndarray:
        n = self.n_modes
        m = self._m_grid
        buf = np.zeros(m, dtype=np.complex128)
        buf[: n + 1] = coeffs[n:]
        buf[m - n :] = coeffs[:n]
        vals = (np.fft.ifft(buf) * m).real
        sq = np.fft.fft(vals * vals) / m
        full = np.empty(2 * n + 1, dtype=np.complex128)
        full[n:] = sq[: n + 1]
        full[:n] = np.conj(sq[1 : n + 1][::-1])
        return self._ik * full

    def nonlinearity(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        out = -self._transport(coeffs)
        c = self._coupling
        if c is not None:
            out -= c["offdiag"] @ coeffs
            s1 = (c["w1"] @ coeffs).real
            s2 = (c["w2"] @ coeffs).real
            corr = -s1 * c["vec_gdg"] + (-s2 + s1 * c["s3"]) * c["vec_g"]
            corr[self.n_modes] += s2 / TWO_PI
            out -= corr
        if self.forcing is not None:
            out = out + self.forcing(t).with_cutoff(self.n_modes).coeffs
        out[self.n_modes] = 0.0
        return out

    def step(self, coeffs: np.ndarray, t: float) -> np.ndarray:
        nv = self.nonlinearity(coeffs, t)
        a = self._e_half * coeffs + self._q * nv
        na = self.nonlinearity(a, t + self.dt / 2.0)
        b = self._e_half * coeffs + self._q * na
        nb = self.nonlinearity(b, t + self.dt / 2.0)
        c = self._e_half * a + self._q * (2.0 * nb - nv)
        nc = self.nonlinearity(c, t + self.dt)
        return (
            self._e_full * coeffs
            + self._f1 * nv
            + 2.0 * self._f2 * (na + nb)
            + self._f3 * nc
        )


def nonlinear_step(
    table: SymbolTable,
    profile: DampingProfile | None,
    v: SpectralField,
    dt: float,
    t: float = 0.0,
    forcing=None,
) -> SpectralField:
    """One integrator step; builds a throwaway stepper (fine for diagnostics)."""
    stepper = Etdrk4Integrator(table, profile, v.n_modes, dt, forcing)
    out = stepper.step(v.coeffs.copy(), t)
    return SpectralField(v.n_modes, out)


def simulate(
    table: SymbolTable,
    profile: DampingProfile | None,
    v0: SpectralField,
    t_final: float,
    dt: float,
    forcing=None,
    record_every: int = 1,
    energy_tol: float | None = None,
    max_halvings: int = 4,
    run_meta: dict | None = None,
) -> TrajectoryRecord:
    """Integrate to t_final, recording diagnostics every record_every steps.

    When energy_tol is given, the run is repeated with halved dt until the
    worst energy-identity residual is below tolerance.  Divergence raises,
    carrying the last valid time.
    """
    if t_final <= 0:
        raise ValueError("t_final must be positive")
    dt_try = dt
    for attempt in range(max_halvings + 1):
        record = _run_once(table, profile, v0, t_final, dt_try, forcing, record_every, run_meta)
        if energy_tol is None or record.energy_residuals is None:
            return record
        worst = np.nanmax(np.abs(record.energy_residuals))
        if worst <= energy_tol:
            return record
        dt_try /= 2.0
    warnings.warn("energy residual stayed above tolerance after all halvings")
    return record


def _run_once(table, profile, v0, t_final, dt, forcing, record_every, run_meta) -> TrajectoryRecord:
    n = v0.n_modes
    stepper = Etdrk4Integrator(table, profile, n, dt, forcing)
    n_steps = max(1, round(t_final / dt))
    dt_eff = t_final / n_steps
    if abs(dt_eff - dt) > 1e-9 * dt:
        stepper = Etdrk4Integrator(table, profile, n, dt_eff, forcing)

    coeffs = v0.coeffs.copy()
    norm0_sq = max(float(np.sum(np.abs(coeffs) ** 2)), 1e-300)
    blow_limit = 1e12 * norm0_sq

    times = [0.0]
    states = [SpectralField(n, coeffs.copy())]
    t = 0.0
    for i in range(n_steps):
        coeffs = stepper.step(coeffs, t)
        t = (i + 1) * dt_eff
        ssq = float(np.sum(np.abs(coeffs) ** 2))
        if not np.isfinite(ssq) or ssq > blow_limit:
            raise BlowUpError(f"blow-up detected at t = {t:.6g}", last_valid_time=times[-1])
        if (i + 1) % record_every == 0 or i + 1 == n_steps:
            times.append(t)
            states.append(SpectralField(n, coeffs.copy()))

    meta = dict(run_meta or {})
    meta.update({"dt": dt_eff, "n_steps": n_steps, "n_modes": n, "record_every": record_every})
    record = TrajectoryRecord(
        times=np.array(times),
        states=tuple(states),
        l2norms=np.array([_fluctuation_norm(s) for s in states]),
        means=np.array([mean(s) for s in states]),
        energy_residuals=None,
        run_meta=meta,
    )
    # the stencil needs uniform sampling; a trailing partial interval disables it
    if profile is not None and len(states) >= 5 and n_steps % record_every == 0:
        record.energy_residuals = energy_residual(record, profile)
    return record


def simulate_damped(
    params: ModelParams,
    profile: DampingProfile,
    u0: SpectralField,
    t_final: float,
    dt: float,
    **kwargs,
) -> TrajectoryRecord:
    """Closed-loop run for a state with arbitrary mean.

    The mean of u0 is conserved by the dynamics, so the run shifts to the
    mean-zero variable, folds the induced drift 2*mu*d/dx into the symbol
    table, and adds the mean back into the recorded states.
    """
    mu0 = mean(u0)
    table = build_symbols(replace(params, mu=mu0), u0.n_modes)
    v0 = project_mean_zero(u0)
    rec = simulate(table, profile, v0, t_final, dt, **kwargs)
    shift = constant_field(u0.n_modes, mu0)
    states = tuple(s + shift for s in rec.states)
    meta = dict(rec.run_meta)
    meta["mean"] = mu0
    return TrajectoryRecord(
        times=rec.times,
        states=states,
        l2norms=rec.l2norms,
        means=np.full(rec.times.size, mu0),
        energy_residuals=rec.energy_residuals,
        run_meta=meta,
    )


def energy_residual(record: TrajectoryRecord, profile: DampingProfile) -> np.ndarray:
    """Defect of the energy balance d/dt (1/2)||v||^2 = -||D^{delta/2} G v||^2.

    The time derivative is taken with the five-point fourth-order central
    stencil on the recording grid (matching the integrator's order, so
    halving dt with a fixed step count shrinks the residual about 16x).
    Entries are normalized by the initial squared norm; edges are NaN.
    """
    times = record.times
    if times.size < 5:
        raise ValueError("need at least 5 samples for the five-point stencil")
    steps = np.diff(times)
    h = steps[0]
    if np.any(np.abs(steps - h) > 1e-9 * h):
        raise ValueError("energy residual requires uniform sampling")
    energy = 0.5 * record.l2norms**2
    dissip = np.array([dmp.dissipation_form(profile, s) for s in record.states])
    out = np.full(times.size, np.nan)
    j = np.arange(2, times.size - 2)
    d_dt = (-energy[j + 2] + 8.0 * energy[j + 1] - 8.0 * energy[j - 1] + energy[j - 2]) / (12.0 * h)
    norm0_sq = max(record.l2norms[0] ** 2, 1e-300)
    out[j] = (d_dt + dissip[j]) / norm0_sq
    return out


@dataclass(frozen=True)
class DecayFit:
    prefactor: float
    rate: float
    r_squared: float
    n_samples: int


def decay_fit(record: TrajectoryRecord, window: tuple) -> DecayFit:
    """Least-squares exponential fit of the fluctuation norm over a window.

    Fits log||v(t)|| = log(M ||v(0)||) - rate * t.  Samples whose norm has
    underflowed are dropped with a warning.
    """
    t0, t1 = window
    sel = (record.times >= t0) & (record.times <= t1)
    positive = record.l2norms > 1e-280
    if np.any(sel & ~positive):
        warnings.warn("fit window truncated: norm underflow")
    sel &= positive
    if np.count_nonzero(sel) < 2:
        raise ValueError("fit window holds fewer than two usable samples")
    t = record.times[sel]
    y = np.log(record.l2norms[sel])
    slope, intercept = np.polyfit(t, y, 1)
    resid = y - (slope * t + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r_sq = 1.0 if ss_tot < 1e-30 else 1.0 - float(np.sum(resid**2)) / ss_tot
    norm0 = record.l2norms[0] if record.l2norms[0] > 0 else 1.0
    return DecayFit(
        prefactor=float(np.exp(intercept) / norm0),
        rate=float(-slope),
        r_squared=r_sq,
        n_samples=int(np.count_nonzero(sel)),
    )
