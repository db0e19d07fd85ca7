"""Strang split-step evolution of the reduced cubic equation.

The field is advanced in the Galerkin span of the lowest M eigenmodes.  Both
sub-flows are exact: the linear step multiplies coefficients by e^{-i lam dt},
the nonlinear step is the pointwise phase rotation v <- v e^{-i|v|^2 dt}
(|v| is conserved by that sub-flow, so the rotation is its closed-form
solution).  One step is N(dt/2) L(dt) N(dt/2); adjacent nonlinear halves are
fused except where a trace record forces a true step boundary.

The inner loop runs in a numba kernel on a flat real layout (re/im pairs),
with the transforms done by BLAS through np.dot.  The nonlinear phase uses a
6th/7th-order Taylor rotation, valid because the per-step phase dt*|v|^2 is
guarded to stay below 0.02 (truncation is then far below double roundoff, so
mass is conserved to the same accuracy as with a transcendental exp).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from numpy.typing import NDArray

from .eigensolver import EigenBasis
from .fields import FieldState, check_sobolev_index

TAIL_LIMIT = 1e-8          # instantaneous out-of-span mass, relative to mass(0)
WINDOW_DRIFT_LIMIT = 1e-10  # recorded-window relative mass drift
TAYLOR_GUARD = 0.02        # max nonlinear phase per step the kernel accepts
UNWRAP_MARGIN = 0.95       # fraction of pi allowed between phase samples

_STATUS_MESSAGES = {
    1: "phase unwrap margin exceeded (sampling too coarse)",
    2: "tail mass overflow (Galerkin truncation too small)",
    3: "mass balance (state + discarded tail) drifted beyond tolerance",
    4: "nonlinear phase per step exceeded the kernel guard",
}


class InvariantViolation(RuntimeError):
    """An evolution invariant failed; the run is invalid."""


@dataclass(frozen=True)
class IntegratorConfig:
    """Time-stepping parameters.

    dt may be negative (reverse evolution).  record_every = 0 picks a cadence
    of about 2000 records per run.  mass_drift_limit bounds the movement of
    the mass balance (grid mass plus tracked truncation discard) between
    consecutive records; its default budgets for roundoff only, which every
    truncation size satisfies because the discarded mass is accounted
    exactly.  tail_limit caps the instantaneous out-of-span mass relative to
    mass(0).
    """

    dt: float
    t_end: float
    m_modes: int
    record_every: int = 0
    mass_drift_limit: float = WINDOW_DRIFT_LIMIT
    tail_limit: float = TAIL_LIMIT

    def __post_init__(self):
        if self.dt == 0.0 or self.t_end == 0.0:
            raise ValueError("dt and t_end must be nonzero")
        if (self.dt > 0) != (self.t_end > 0):
            raise ValueError("dt and t_end must have the same sign")
        if self.m_modes < 1:
            raise ValueError("m_modes must be positive")
        if self.record_every < 0:
            raise ValueError("record_every must be nonnegative")


@dataclass(eq=False)
class EvolutionTrace:
    """Recorded diagnostics at step boundaries."""

    times: NDArray[np.float64]
    mass: NDArray[np.float64]
    energy: NDArray[np.float64]
    gamma: NDArray[np.complex128] | None
    tail_mass: NDArray[np.float64]
    discarded: NDArray[np.float64]
    q_l2: NDArray[np.float64]
    q_l4: NDArray[np.float64]
    q_hs: NDArray[np.float64]
    coeffs: NDArray[np.complex128]   # (n_records, M) boundary snapshots
    dt: float
    n_steps: int
    # phase-vs-time linear fit of the ground-mode projection (if tracked)
    phase_slope: float = math.nan
    phase_rms: float = math.nan
    phase_samples: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def mass_drift(self) -> float:
        """Raw relative drift of the retained mass (includes truncation loss)."""
        m0 = self.mass[0]
        return float(np.max(np.abs(self.mass - m0)) / m0)

    @property
    def mass_balance_residual(self) -> float:
        """Relative defect of mass(t) + tail(t) + discarded(t) = mass(0).

        This telescopes exactly through every step, so it sits at roundoff
        scale for a correct run regardless of the truncation size.
        """
        m0 = self.mass[0]
        return float(np.max(np.abs(self.mass + self.tail_mass + self.discarded - m0)) / m0)

    @property
    def energy_drift(self) -> float:
        e0 = self.energy[0]
        return float(np.max(np.abs(self.energy - e0)) / abs(e0))


def linear_step(basis: EigenBasis, coeffs: NDArray, dt: float) -> NDArray[np.complex128]:
    """Exact linear sub-flow c_j <- c_j e^{-i lambda_j dt}."""
    lam = basis.lam[: coeffs.shape[0]]
    return coeffs * np.exp(-1j * lam * dt)


def nonlinear_step(values: NDArray, dt: float) -> NDArray[np.complex128]:
    """Exact nonlinear sub-flow v <- v e^{-i |v|^2 dt} (pointwise)."""
    v = np.asarray(values, dtype=np.complex128)
    return v * np.exp(-1j * dt * (v.real**2 + v.imag**2))


@njit(cache=True)
def _nl_phase(w, lo, hi, dt):  # pragma: no cover - numba
    """Apply v <- v e^{-i dt |v|^2} to rows lo..hi of the flat pair layout."""
    for i2 in range(lo, hi, 2):
        re = w[i2]
        im = w[i2 + 1]
        th = dt * (re * re + im * im)
        q = th * th
        cs = 1.0 + q * (-0.5 + q * (1.0 / 24.0 + q * (-1.0 / 720.0)))
        sn = th * (1.0 + q * (-1.0 / 6.0 + q * (1.0 / 120.0 + q * (-1.0 / 5040.0))))
        w[i2] = re * cs + im * sn
        w[i2 + 1] = im * cs - re * sn


@njit(cache=True)
def _kernel(phi, phiT_h, lam, w, c_buf, dt, n_steps, record_every, h,
            track_phase, detrend_rate, tail_limit, drift_limit, rec_step,
            rec_c, rec_mass, rec_tail, rec_energy, rec_q4, rec_disc,
            phase_out):  # pragma: no cover - numba
    n, m = phi.shape
    b_cols = w.shape[1] // 2
    wf = w.reshape(n * 2 * b_cols)

    cs_lam = np.empty(m)
    sn_lam = np.empty(m)
    for j in range(m):
        cs_lam[j] = math.cos(lam[j] * dt)
        sn_lam[j] = math.sin(lam[j] * dt)

    guard = TAYLOR_GUARD
    mass0 = np.empty(b_cols)
    # mass removed by the Galerkin projection, accumulated exactly so the
    # balance  grid mass(t) + discarded(t) = mass(0)  holds to roundoff.
    # The balance is checked per recorded window: each step contributes
    # about one ulp of unavoidable bias (basis normalization defect), so a
    # cumulative check would drown for runs of 1e7+ steps.
    discarded = np.zeros(b_cols)
    prev_balance = np.empty(b_cols)

    # phase-fit accumulators (Welford with covariance)
    cnt = 0.0
    mean_t = 0.0
    mean_th = 0.0
    m2t = 0.0
    m2th = 0.0
    cov = 0.0
    prev_raw = 0.0
    unwrapped = 0.0
    max_delta = 0.0

    status = 0
    bad_step = -1
    rec_i = 0

    for step in range(0, n_steps + 1):
        boundary = step == 0 or step == n_steps or (record_every > 0 and step % record_every == 0)
        if step > 0:
            for b in range(b_cols):
                # compensated sum: the discard accounting adds ~n ulps of
                # bias per step otherwise, which over 1e7+ steps would mask
                # the 1e-10 balance budget
                gmass = 0.0
                comp = 0.0
                for i in range(n):
                    term = w[i, 2 * b] * w[i, 2 * b] + w[i, 2 * b + 1] * w[i, 2 * b + 1]
                    y = term - comp
                    t = gmass + y
                    comp = (t - gmass) - y
                    gmass = t
                discarded[b] += h * gmass
            np.dot(phiT_h, w, c_buf)
            for j in range(m):
                cj = cs_lam[j]
                sj = sn_lam[j]
                for b in range(b_cols):
                    re = c_buf[j, 2 * b]
                    im = c_buf[j, 2 * b + 1]
                    c_buf[j, 2 * b] = re * cj + im * sj
                    c_buf[j, 2 * b + 1] = im * cj - re * sj
            for b in range(b_cols):
                cmass = 0.0
                for j in range(m):
                    cmass += c_buf[j, 2 * b] ** 2 + c_buf[j, 2 * b + 1] ** 2
                discarded[b] -= cmass
            if track_phase:
                raw = math.atan2(c_buf[0, 1], c_buf[0, 0])
                if cnt == 0.0:
                    unwrapped = raw
                else:
                    delta = raw - prev_raw
                    if delta > math.pi:
                        delta -= 2.0 * math.pi
                    elif delta < -math.pi:
                        delta += 2.0 * math.pi
                    if abs(delta) > max_delta:
                        max_delta = abs(delta)
                    if abs(delta) > UNWRAP_MARGIN * math.pi and status == 0:
                        status = 1
                        bad_step = step
                    unwrapped += delta
                prev_raw = raw
                t_s = step * dt
                # regress the detrended phase: the raw unwrapped phase grows
                # to ~1e8 rad, where the residual variance would be pure
                # cancellation noise; subtracting the caller's prior rate is
                # exact for the slope (added back afterwards) and keeps the
                # co-moments well conditioned
                th = unwrapped - detrend_rate * t_s
                cnt += 1.0
                d_t = t_s - mean_t
                mean_t += d_t / cnt
                d_t2 = t_s - mean_t
                m2t += d_t * d_t2
                d_th = th - mean_th
                mean_th += d_th / cnt
                d_th2 = th - mean_th
                m2th += d_th * d_th2
                cov += d_t * d_th2
            np.dot(phi, c_buf, w)
            if boundary:
                _nl_phase(wf, 0, 2 * n * b_cols, 0.5 * dt)
            else:
                _nl_phase(wf, 0, 2 * n * b_cols, dt)

        if boundary:
            # w is a true step-boundary state here
            np.dot(phiT_h, w, c_buf)
            rec_step[rec_i] = step
            for b in range(b_cols):
                cmass = 0.0
                for j in range(m):
                    re = c_buf[j, 2 * b]
                    im = c_buf[j, 2 * b + 1]
                    cmass += re * re + im * im
                    rec_c[rec_i, j, 2 * b] = re
                    rec_c[rec_i, j, 2 * b + 1] = im
                gmass = 0.0
                quart = 0.0
                q4 = 0.0
                maxw2 = 0.0
                c0r = c_buf[0, 2 * b]
                c0i = c_buf[0, 2 * b + 1]
                for i in range(n):
                    re = w[i, 2 * b]
                    im = w[i, 2 * b + 1]
                    a2 = re * re + im * im
                    gmass += a2
                    quart += a2 * a2
                    if a2 > maxw2:
                        maxw2 = a2
                    qr = re - c0r * phi[i, 0]
                    qi = im - c0i * phi[i, 0]
                    qq = qr * qr + qi * qi
                    q4 += qq * qq
                gmass *= h
                quart *= h
                q4 *= h
                lam_sum = 0.0
                for j in range(m):
                    re = c_buf[j, 2 * b]
                    im = c_buf[j, 2 * b + 1]
                    lam_sum += lam[j] * (re * re + im * im)
                rec_mass[rec_i, b] = cmass
                rec_disc[rec_i, b] = discarded[b]
                tail = gmass - cmass
                if tail < 0.0:
                    tail = 0.0
                rec_tail[rec_i, b] = tail
                rec_energy[rec_i, b] = lam_sum + 0.5 * quart
                rec_q4[rec_i, b] = q4
                balance = gmass + discarded[b]
                if step == 0:
                    mass0[b] = cmass
                    prev_balance[b] = balance
                else:
                    if status == 0 and tail > tail_limit * mass0[b]:
                        status = 2
                        bad_step = step
                    # grid mass (retained + in-flight tail) plus everything
                    # discarded so far telescopes; it may not move between
                    # records beyond the roundoff budget
                    if status == 0 and abs(balance - prev_balance[b]) > drift_limit * mass0[b]:
                        status = 3
                        bad_step = step
                    prev_balance[b] = balance
                if status == 0 and abs(dt) * maxw2 > guard:
                    status = 4
                    bad_step = step
            rec_i += 1
            if step < n_steps:
                _nl_phase(wf, 0, 2 * n * b_cols, 0.5 * dt)
        if status != 0 and status != 1:
            break

    phase_out[0] = cnt
    phase_out[1] = m2t
    phase_out[2] = m2th
    phase_out[3] = cov
    phase_out[4] = max_delta
    return status, bad_step, rec_i


def _record_steps(n_steps: int, record_every: int) -> tuple[int, int]:
    if record_every <= 0:
        record_every = max(1, n_steps // 2000)
    count = 1 + n_steps // record_every
    if n_steps % record_every != 0:
        count += 1
    return count, record_every


def _integrate(basis: EigenBasis, coeffs_cols: NDArray, config: IntegratorConfig,
               track_phase: bool, detrend_rate: float = 0.0):
    """Run the kernel on one or two coefficient columns; returns raw records."""
    m = config.m_modes
    if m > basis.m:
        raise ValueError(f"config requests {m} modes but basis holds {basis.m}")
    lam = np.ascontiguousarray(basis.lam[:m])
    phi = np.ascontiguousarray(basis.phi[:, :m])
    phiT_h = np.ascontiguousarray(phi.T * basis.grid.h)
    n = basis.grid.n
    b_cols = coeffs_cols.shape[1]

    n_steps = max(1, int(math.ceil(abs(config.t_end) / abs(config.dt) - 1e-9)))
    dt = config.t_end / n_steps

    # initial grid state
    w = np.empty((n, 2 * b_cols))
    for b in range(b_cols):
        v0 = phi @ coeffs_cols[:, b]
        w[:, 2 * b] = v0.real
        w[:, 2 * b + 1] = v0.imag

    band = float(lam[-1] - lam[0])
    if abs(dt) * band >= math.pi:
        raise InvariantViolation(
            f"dt*(lam_max-lam_0) = {abs(dt)*band:.3f} >= pi: retained band unresolved"
        )
    v0_inf2 = float(np.max(w[:, 0::2] ** 2 + w[:, 1::2] ** 2))
    if abs(dt) * v0_inf2 > 1e-2:
        raise InvariantViolation(
            f"dt*||v0||_inf^2 = {abs(dt)*v0_inf2:.3e} > 1e-2: nonlinear phase too large"
        )

    n_rec, record_every = _record_steps(n_steps, config.record_every)
    rec_step = np.zeros(n_rec, dtype=np.int64)
    rec_c = np.zeros((n_rec, m, 2 * b_cols))
    rec_mass = np.zeros((n_rec, b_cols))
    rec_tail = np.zeros((n_rec, b_cols))
    rec_energy = np.zeros((n_rec, b_cols))
    rec_q4 = np.zeros((n_rec, b_cols))
    rec_disc = np.zeros((n_rec, b_cols))
    phase_out = np.zeros(8)
    c_buf = np.zeros((m, 2 * b_cols))

    status, bad_step, rec_count = _kernel(
        phi, phiT_h, lam, w, c_buf, dt, n_steps, record_every,
        basis.grid.h, track_phase, detrend_rate, config.tail_limit,
        config.mass_drift_limit, rec_step, rec_c, rec_mass, rec_tail,
        rec_energy, rec_q4, rec_disc, phase_out,
    )
    if status != 0:
        raise InvariantViolation(
            f"{_STATUS_MESSAGES[status]} at step {bad_step} of {n_steps} "
            f"(dt={dt:.3e}, M={m})"
        )

    sl = slice(0, rec_count)
    records = {
        "steps": rec_step[sl].copy(),
        "times": rec_step[sl] * dt,
        "coeffs": rec_c[sl, :, 0::2] + 1j * rec_c[sl, :, 1::2],  # (n_rec, m, B)
        "mass": rec_mass[sl].copy(),
        "tail": rec_tail[sl].copy(),
        "energy": rec_energy[sl].copy(),
        "q4": rec_q4[sl].copy(),
        "discarded": rec_disc[sl].copy(),
    }
    cnt, m2t, m2th, cov, max_delta = phase_out[:5]
    phase = None
    if track_phase and cnt >= 2 and m2t > 0:
        slope = cov / m2t
        resid_var = max(m2th - slope * cov, 0.0) / cnt
        phase = {"slope": detrend_rate + slope, "rms": math.sqrt(resid_var),
                 "samples": int(cnt), "max_delta": max_delta}
    return records, phase, dt, n_steps


def evolve(initial: FieldState, basis: EigenBasis, config: IntegratorConfig, *,
           amplitude: float | None = None, omega: float = 0.0,
           sobolev_s: float = 0.5, track_phase: bool = False
           ) -> tuple[FieldState, EvolutionTrace]:
    """Evolve a field state, monitoring the conservation invariants.

    gamma(t) is recorded as a^{-1} e^{i t (lambda_0 + a^2 omega)} <v, phi_0>_h
    when amplitude a is supplied.  Raises InvariantViolation when the tail
    monitor, the per-window mass balance, or the phase-unwrap margin fails.
    """
    s = check_sobolev_index(sobolev_s)
    coeffs = np.asarray(initial.coeffs, dtype=np.complex128)
    if coeffs.shape != (config.m_modes,):
        raise ValueError("initial coefficient vector must have m_modes entries")
    detrend = 0.0
    if track_phase and amplitude is not None:
        detrend = -(float(basis.lam[0]) + amplitude**2 * omega)
    records, phase, dt, n_steps = _integrate(
        basis, coeffs.reshape(-1, 1), config, track_phase, detrend
    )
    times = records["times"] + initial.time
    csnap = records["coeffs"][:, :, 0]
    lam = basis.lam[: config.m_modes]

    gamma = None
    if amplitude is not None:
        rot = np.exp(1j * (times - initial.time) * (lam[0] + amplitude**2 * omega))
        gamma = csnap[:, 0] * rot / amplitude

    q_l2 = np.sqrt(np.maximum(records["mass"][:, 0] - np.abs(csnap[:, 0]) ** 2, 0.0))
    q_l4 = records["q4"][:, 0] ** 0.25
    wts = (1.0 + lam[1:]) ** s
    q_hs = np.sqrt((np.abs(csnap[:, 1:]) ** 2 * wts[None, :]).sum(axis=1))

    trace = EvolutionTrace(
        times=times,
        mass=records["mass"][:, 0],
        energy=records["energy"][:, 0],
        gamma=gamma,
        tail_mass=records["tail"][:, 0],
        discarded=records["discarded"][:, 0],
        q_l2=q_l2,
        q_l4=q_l4,
        q_hs=q_hs,
        coeffs=csnap,
        dt=dt,
        n_steps=n_steps,
    )
    if phase is not None:
        trace.phase_slope = phase["slope"]
        trace.phase_rms = phase["rms"]
        trace.phase_samples = phase["samples"]
        trace.extra["max_phase_delta"] = phase["max_delta"]
    final = FieldState(time=float(times[-1]), coeffs=csnap[-1].copy())
    return final, trace


def suggest_dt(basis: EigenBasis, m_modes: int, v0_inf: float, *,
               band_safety: float = 0.1, unwrap_rate: float | None = None,
               unwrap_safety: float = 0.66) -> float:
    """Step-size rule from the config invariants.

    Keeps the phase across the retained band below band_safety*pi per step
    and the nonlinear phase below 1e-2; when a phase rate is to be unwrapped
    (modulation fits), also keeps the per-sample phase below
    unwrap_safety*pi.
    """
    band = float(basis.lam[min(m_modes, basis.m) - 1] - basis.lam[0])
    dt = math.inf
    if band > 0:
        dt = band_safety * math.pi / band
    if v0_inf > 0:
        dt = min(dt, 1e-2 / v0_inf**2)
    if unwrap_rate is not None and unwrap_rate > 0:
        dt = min(dt, unwrap_safety * math.pi / unwrap_rate)
    if not math.isfinite(dt):
        raise ValueError("cannot choose dt: degenerate band and no field scale")
    return dt
