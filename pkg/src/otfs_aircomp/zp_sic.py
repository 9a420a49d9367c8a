"""Zero-padded OTFS AirComp with successive interference cancellation.

Every device uses the same tap geometry with pairwise distinct delays.  Data
occupy rows ``0 .. M - l_max - 1`` of the delay-Doppler frame; the remaining
rows are zero, so row ``r`` reaches received row ``r + l_i`` through tap ``i``
without wrapping.  Each data row is observed through one tap: forward rows
(estimated in increasing order) through the smallest delay, backward rows
(estimated in decreasing order) through the largest.  Devices precode every
row against its observation tap, so that tap delivers
``sum_u sqrt(p_u) |h_u| x_u`` at the original columns.

MSE values use the unnormalized convention: ``f_hat`` estimates the sum of
the device payloads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .aircomp_naive import BATCH, EmpiricalMse, SystemParams, draw_noise, draw_symbols
from .channel_model import ChannelEnsemble, MultipathChannel
from .grid_transforms import dd_io_relation


@dataclass(frozen=True)
class ZpLayout:
    M: int
    N: int
    l_max: int

    def __post_init__(self):
        if not 0 <= self.l_max < self.M:
            raise ValueError(f"l_max={self.l_max} must lie in [0, M={self.M})")

    @property
    def n_data(self) -> int:
        return self.M - self.l_max

    @property
    def data_rows(self) -> range:
        return range(self.n_data)

    @classmethod
    def for_ensemble(cls, ensemble: ChannelEnsemble, M: int, N: int) -> "ZpLayout":
        return cls(M, N, int(np.max(ensemble.delays)))


def _check_delays(delays) -> np.ndarray:
    delays = np.asarray(delays, dtype=int)
    if len(set(delays.tolist())) != len(delays):
        raise ValueError(f"delays must be pairwise distinct, got {delays.tolist()}")
    if np.any(np.diff(delays) < 0):
        raise ValueError("delays must be sorted ascending")
    return delays


# ---------------------------------------------------------------------------
# planning

def interference_sets(layout: ZpLayout, delays) -> dict:
    """``sets[m1][l]``: data rows interfering with row ``m1`` observed via delay ``l``."""
    delays = _check_delays(delays)
    if delays.max() > layout.l_max:
        raise ValueError(f"delay {delays.max()} exceeds the padding l_max={layout.l_max}")
    n = layout.n_data
    sets = {}
    for m1 in range(n):
        sets[m1] = {}
        for l in delays:
            rows = [m1 + l - lj for lj in delays if lj != l]
            sets[m1][int(l)] = sorted((int(m) for m in rows if 0 <= m < n), reverse=True)
    return sets


@dataclass
class SicPlan:
    layout: ZpLayout
    delays: np.ndarray
    order: list
    split: int
    direction: dict          # row -> "forward" | "backward"
    observation_tap: dict    # row -> tap index (into the sorted delays)
    observation_row: dict    # row -> received row
    interferers: dict        # row -> list of rows
    theta_plus: list
    theta_minus: list

    def dump(self) -> str:
        lines = ["# row direction observation_row interferers theta_plus theta_minus"]
        for m in self.order:
            intf = ",".join(str(i) for i in self.interferers[m]) or "-"
            lines.append(f"{m} {self.direction[m]} {self.observation_row[m]} {intf} "
                         f"{self.theta_plus[m]} {self.theta_minus[m]}")
        return "\n".join(lines) + "\n"

    def is_valid(self) -> bool:
        seen = set()
        for m in self.order:
            if any(i not in seen for i in self.interferers[m]):
                return False
            seen.add(m)
        return seen == set(self.layout.data_rows)


def sic_plan(layout: ZpLayout, delays) -> SicPlan:
    """Estimation order from the interference-load scores.

    ``theta_plus`` follows the smallest-delay observation (interferers above
    the row), ``theta_minus`` the largest-delay one (interferers below).  The
    split ``s`` minimizes ``sum_{m<=s} theta_plus + sum_{m>s} theta_minus``
    with ties going to the smaller ``s``, unless the pure forward sweep is
    itself free.
    """
    delays = _check_delays(delays)
    sets = interference_sets(layout, delays)
    n = layout.n_data
    l_fwd, l_bwd = int(delays[0]), int(delays[-1])

    theta_plus = [0] * n
    for m in range(n):
        ms = sets[m][l_fwd]
        theta_plus[m] = sum(theta_plus[i] for i in ms) + len(ms)
    theta_minus = [0] * n
    for m in reversed(range(n)):
        ms = sets[m][l_bwd]
        theta_minus[m] = sum(theta_minus[i] for i in ms) + len(ms)

    costs = [sum(theta_plus[:s + 1]) + sum(theta_minus[s + 1:]) for s in range(n)]
    best = min(costs)
    split = n - 1 if costs[-1] == best else costs.index(best)

    order = list(range(split + 1)) + list(range(n - 1, split, -1))
    direction = {m: ("forward" if m <= split else "backward") for m in range(n)}
    tap = {m: (0 if direction[m] == "forward" else len(delays) - 1) for m in range(n)}
    obs_row = {m: m + int(delays[tap[m]]) for m in range(n)}
    interferers = {m: sets[m][int(delays[tap[m]])] for m in range(n)}
    return SicPlan(layout, delays, order, split, direction, tap, obs_row, interferers,
                   theta_plus, theta_minus)


# ---------------------------------------------------------------------------
# transmit side

def _row_phase(channel: MultipathChannel, tap: int, row: int, M: int, N: int) -> complex:
    """Generator entry ``h z^{k r}`` carrying row ``row`` through ``tap``."""
    t = channel.taps[tap]
    z = np.exp(2j * np.pi / (M * N))
    return t.gain * z ** (t.doppler * row)


def zp_arrange(data_rows, layout: ZpLayout, channel: MultipathChannel, powers,
               observation_taps: Sequence[int] | None = None) -> np.ndarray:
    """Place ``n_data`` payload rows into a zero-padded frame, precoded per row.

    Row ``r`` is cyclically pre-shifted by the Doppler index of its
    observation tap and multiplied by ``sqrt(p_r)`` times the conjugate unit
    phase of that tap's generator entry.  Observation taps default to the
    principal path for every row.
    """
    data_rows = np.asarray(data_rows, dtype=complex)
    M, N, n = layout.M, layout.N, layout.n_data
    if data_rows.shape[-2:] != (n, N):
        raise ValueError(f"expected {n} data rows of length {N}, got {data_rows.shape}")
    powers = np.broadcast_to(np.asarray(powers, dtype=float), (n,))
    taps = [0] * n if observation_taps is None else list(observation_taps)
    frame = np.zeros(data_rows.shape[:-2] + (M, N), dtype=complex)
    for r in range(n):
        nu = _row_phase(channel, taps[r], r, M, N)
        if nu == 0:
            raise ZeroDivisionError("observation tap gain is zero")
        k_o = channel.taps[taps[r]].doppler
        frame[..., r, :] = (np.sqrt(powers[r]) * np.conj(nu) / abs(nu)
                            * np.roll(data_rows[..., r, :], -k_o, axis=-1))
    return frame


# ---------------------------------------------------------------------------
# linear bookkeeping of estimation errors

class LinearForm:
    """Coefficients of one received/estimated element over the frame's random variables.

    ``d[u, r, c]`` weights payload symbol ``x_u[r, c]``, ``w[r, c]`` the noise
    sample of received row ``r``; column indices are relative to the element
    (column 0), so cyclic column shifts are ``np.roll`` on the last axis.
    """

    __slots__ = ("d", "w")

    def __init__(self, d: np.ndarray, w: np.ndarray):
        self.d = d
        self.w = w

    @classmethod
    def zeros(cls, U: int, M: int, N: int) -> "LinearForm":
        return cls(np.zeros((U, M, N), dtype=complex), np.zeros((M, N), dtype=complex))

    def shift(self, s: int) -> "LinearForm":
        return LinearForm(np.roll(self.d, s, axis=-1), np.roll(self.w, s, axis=-1))

    def __add__(self, other):
        return LinearForm(self.d + other.d, self.w + other.w)

    def __sub__(self, other):
        return LinearForm(self.d - other.d, self.w - other.w)

    def scale(self, c: complex) -> "LinearForm":
        return LinearForm(self.d * c, self.w * c)

    def weighted(self, sigma2: float) -> np.ndarray:
        return np.concatenate([self.d.ravel(), np.sqrt(sigma2) * self.w.ravel()])

    def norm2(self, sigma2: float) -> float:
        return float(np.sum(np.abs(self.d) ** 2) + sigma2 * np.sum(np.abs(self.w) ** 2))

    def support(self) -> np.ndarray:
        return np.concatenate([self.d.ravel() != 0, self.w.ravel() != 0])


@dataclass
class RowEstimate:
    row: int
    observation_row: int
    observation_tap: int
    gains: np.ndarray          # |nu_u| of the observation tap
    powers: np.ndarray
    eta: float
    u_star: int
    residual: float            # E|G|^2 after cancellation (sigma2 for clean rows)
    analytic_mse: float
    zetas: dict = field(default_factory=dict)
    min_eg2: dict = field(default_factory=dict)
    shifts: dict = field(default_factory=dict)
    method: str = "clean"
    estimate: np.ndarray | None = None
    residual_form: LinearForm | None = field(default=None, repr=False)

    @property
    def signal_coefficients(self) -> np.ndarray:
        return np.sqrt(self.powers) * self.gains / np.sqrt(self.eta)

    def form(self, U: int, M: int, N: int) -> LinearForm:
        """Linear form of ``f_hat`` at column 0 (signal plus scaled residual)."""
        f = self.residual_form.scale(1 / np.sqrt(self.eta))
        d = f.d.copy()
        d[:, self.row, 0] += self.signal_coefficients
        return LinearForm(d, f.w)


@dataclass
class Interferer:
    """An already-estimated row seen in the current observation.

    ``cross_gains[u]`` is the unit-power coupling of device ``u``'s payload
    of that row into the observation; the interfering symbols sit at column
    offset ``shift``.
    """

    estimate: RowEstimate
    cross_gains: np.ndarray
    shift: int = 0


def solve_row_powers(gains, residual: float, P: float, policy: str = "theorem1",
                     device: int | None = None):
    """Powers and denoising factor minimizing ``sum_u (sqrt(p_u) g_u / sqrt(eta) - 1)^2 + residual / eta``.

    Devices are scanned from the weakest gain upwards; the first ``u*``
    saturate the budget and the rest are inverted exactly.
    Returns ``(powers, eta, u_star)`` with ``u_star`` counted from 1.
    """
    g = np.asarray(gains, dtype=float)
    if np.any(g <= 0):
        raise ZeroDivisionError("observation gains must be nonzero")
    U = len(g)
    if policy == "full-power":
        eta = ((residual + P * np.sum(g ** 2)) / (np.sqrt(P) * np.sum(g))) ** 2
        return np.full(U, float(P)), float(eta), U
    if policy == "single-device":
        u = int(np.argmax(g)) if device is None else device
        powers = np.zeros(U)
        powers[u] = P
        eta = ((residual + P * g[u] ** 2) / (np.sqrt(P) * g[u])) ** 2
        return powers, float(eta), 1
    if policy != "theorem1":
        raise ValueError(f"unknown policy {policy!r}")
    order = np.argsort(g, kind="stable")
    gs = g[order]
    eta_hat = ((residual + np.cumsum(P * gs ** 2)) / np.cumsum(np.sqrt(P) * gs)) ** 2
    k = int(np.argmin(eta_hat))
    eta = float(eta_hat[k])
    ranked = np.empty(U, dtype=int)
    ranked[order] = np.arange(U)
    powers = np.where(ranked <= k, float(P), np.minimum(P, eta / g ** 2))
    return powers, eta, k + 1


def row_objective(powers, gains, eta: float, residual: float) -> float:
    return float(np.sum((np.sqrt(powers) * gains / np.sqrt(eta) - 1.0) ** 2) + residual / eta)


def zeta_star(prev: RowEstimate, cross_gains, params: SystemParams, noise_var: float | None = None):
    """Optimal cancellation weight for one interferer and the residual it leaves.

    ``noise_var`` is the error variance of ``sqrt(eta_prev) * f_hat_prev``
    beyond its signal part (``sigma2`` for a clean row, the default being
    ``prev.residual``).  Complex cross gains give a complex weight; for
    real nonnegative ones the weight is real.
    """
    if prev.eta <= 0:
        raise ValueError("interferer eta must be positive")
    g = np.asarray(cross_gains, dtype=complex)
    a = prev.gains
    p = prev.powers
    nv = prev.residual if noise_var is None else noise_var
    denom = float(np.sum(p * a ** 2) + nv)
    corr = np.sum(g * a * p)
    if denom == 0:
        return 0.0, float(np.sum(np.abs(g) ** 2 * p) + params.sigma2)
    zeta = np.sqrt(prev.eta) * corr / denom
    min_eg2 = float(np.sum(np.abs(g) ** 2 * p) + params.sigma2 - abs(corr) ** 2 / denom)
    if np.isrealobj(cross_gains) or np.all(np.imag(g) == 0):
        zeta = float(np.real(zeta))
    return zeta, max(min_eg2, 0.0)


def eg2(zeta: complex, prev: RowEstimate, cross_gains, params: SystemParams,
        noise_var: float | None = None) -> float:
    """``E|G(zeta)|^2`` for one interferer at an arbitrary weight."""
    g = np.asarray(cross_gains, dtype=complex)
    nv = prev.residual if noise_var is None else noise_var
    c = prev.gains * np.sqrt(prev.powers) / np.sqrt(prev.eta)
    return float(np.sum(np.abs(np.sqrt(prev.powers) * g - zeta * c) ** 2)
                 + params.sigma2 + abs(zeta) ** 2 * nv / prev.eta)


def _finish_row(row, y_obs, gains, residual, params, *, observation_row, observation_tap,
                policy, device, residual_form, cleaned=None, **extra) -> RowEstimate:
    powers, eta, u_star = solve_row_powers(gains, residual, params.P, policy, device)
    est = None
    if y_obs is not None:
        base = np.asarray(y_obs, dtype=complex) if cleaned is None else cleaned
        est = base / np.sqrt(eta)
    return RowEstimate(row, observation_row, observation_tap, np.asarray(gains, dtype=float),
                       powers, eta, u_star, float(residual),
                       row_objective(powers, gains, eta, residual),
                       estimate=est, residual_form=residual_form, **extra)


def estimate_row_clean(y_row, ensemble: ChannelEnsemble, params: SystemParams, *, row: int = 0,
                       tap: int = 0, observation_row: int | None = None, policy: str = "theorem1",
                       device: int | None = None) -> RowEstimate:
    """Row with no interference: only the observation tap and noise reach ``y_row``.

    ``y_row`` may be ``None`` to compute the design (powers, eta, MSE) only.
    """
    gains = np.array([abs(ch.taps[tap].gain) for ch in ensemble])
    obs = row + int(ensemble[0].taps[tap].delay) if observation_row is None else observation_row
    w = LinearForm.zeros(ensemble.U, params.M, params.N)
    w.w[obs, 0] = 1.0
    return _finish_row(row, y_row, gains, params.sigma2, params, observation_row=obs,
                       observation_tap=tap, policy=policy, device=device, residual_form=w)


def _independent(interferers: Sequence[Interferer], v0: LinearForm, U, M, N) -> bool:
    """Whether the interferer estimates' errors are disjoint from everything else in play."""
    base = v0.support()
    forms = [it.estimate.form(U, M, N).shift(it.shift).support() for it in interferers]
    for i, it in enumerate(interferers):
        noise = it.estimate.residual_form.shift(it.shift).support()
        if np.any(noise & base):
            return False
        for j, other in enumerate(forms):
            if i != j and np.any(noise & other):
                return False
    return True


def estimate_row_sic(y_obs, interferers: Sequence[Interferer], ensemble: ChannelEnsemble,
                     params: SystemParams, *, row: int, tap: int = 0,
                     observation_row: int | None = None, observation_form: LinearForm | None = None,
                     policy: str = "theorem1", device: int | None = None) -> RowEstimate:
    """Estimate one row after subtracting weighted estimates of its interferers.

    When the interferers' own estimation errors are independent of each
    other and of the current observation, each weight comes from
    :func:`zeta_star` and the residuals add up with the observation noise
    counted once.  Otherwise (an interferer estimate still carries symbols
    or noise that also appear here) the weights solve the joint least
    squares problem over the exact error forms.  The remaining power and
    ``eta`` problem is the clean-row one with the residual as noise.
    """
    if not interferers:
        return estimate_row_clean(y_obs, ensemble, params, row=row, tap=tap,
                                  observation_row=observation_row, policy=policy, device=device)
    U, M, N = ensemble.U, params.M, params.N
    gains = np.array([abs(ch.taps[tap].gain) for ch in ensemble])
    obs = row + int(ensemble[0].taps[tap].delay) if observation_row is None else observation_row

    if observation_form is None:
        # additive model: interferer terms plus this row's noise sample
        observation_form = LinearForm.zeros(U, M, N)
        observation_form.w[obs, 0] = 1.0
        for it in interferers:
            observation_form.d[:, it.estimate.row, it.shift % N] += (
                np.sqrt(it.estimate.powers) * it.cross_gains)
    v0 = observation_form

    zetas, mins, shifts = {}, {}, {}
    if _independent(interferers, v0, U, M, N):
        method = "additive"
        residual = params.sigma2
        G = v0
        for it in interferers:
            z, m = zeta_star(it.estimate, it.cross_gains, params)
            zetas[it.estimate.row], mins[it.estimate.row] = z, m
            residual += m - params.sigma2
            G = G - it.estimate.form(U, M, N).shift(it.shift).scale(z)
    else:
        method = "joint"
        cols = [it.estimate.form(U, M, N).shift(it.shift) for it in interferers]
        A = np.stack([c.weighted(params.sigma2) for c in cols], axis=1)
        b = v0.weighted(params.sigma2)
        z_vec = np.linalg.lstsq(A, b, rcond=None)[0]
        G = v0
        for it, c, z in zip(interferers, cols, z_vec):
            zetas[it.estimate.row] = complex(z)
            G = G - c.scale(z)
        residual = G.norm2(params.sigma2)
        for it in interferers:
            mins[it.estimate.row] = eg2(zetas[it.estimate.row], it.estimate, it.cross_gains, params)
    for it in interferers:
        shifts[it.estimate.row] = it.shift

    cleaned = None
    if y_obs is not None:
        cleaned = np.array(y_obs, dtype=complex)
        for it in interferers:
            if it.estimate.estimate is None:
                raise ValueError(f"row {it.estimate.row} has not been estimated yet")
            cleaned = cleaned - zetas[it.estimate.row] * np.roll(it.estimate.estimate, -it.shift)
    return _finish_row(row, y_obs, gains, residual, params, observation_row=obs,
                       observation_tap=tap, policy=policy, device=device, residual_form=G,
                       cleaned=cleaned, zetas=zetas, min_eg2=mins, shifts=shifts, method=method)


# ---------------------------------------------------------------------------
# whole-frame design and estimation

@dataclass
class SicDesign:
    plan: SicPlan
    ensemble: ChannelEnsemble
    params: SystemParams
    rows: dict                 # row -> RowEstimate (design only)
    policy: str = "theorem1"

    @property
    def layout(self) -> ZpLayout:
        return self.plan.layout

    @property
    def powers(self) -> np.ndarray:
        """``(U, n_data)`` per-row transmit powers."""
        n = self.layout.n_data
        return np.stack([self.rows[m].powers for m in range(n)], axis=1)

    @property
    def analytic_mse(self) -> float:
        return float(np.mean([r.analytic_mse for r in self.rows.values()]))

    def row_mse(self) -> np.ndarray:
        return np.array([self.rows[m].analytic_mse for m in range(self.layout.n_data)])

    def transmit(self, data, noise=None) -> np.ndarray:
        """Received frame(s) for ``(..., U, n_data, N)`` payload rows."""
        data = np.asarray(data, dtype=complex)
        taps = [self.plan.observation_tap[m] for m in range(self.layout.n_data)]
        frames = np.stack([zp_arrange(data[..., u, :, :], self.layout, ch, p, taps)
                           for u, (ch, p) in enumerate(zip(self.ensemble, self.powers))], axis=-3)
        return dd_io_relation(frames, list(self.ensemble), noise)


def _cross_gains(ensemble: ChannelEnsemble, tap: int, row: int, row_tap: int, M: int, N: int):
    """Coupling of each device's row ``row`` (precoded for ``row_tap``) through ``tap``."""
    out = []
    for ch in ensemble:
        ref = _row_phase(ch, row_tap, row, M, N)
        out.append(_row_phase(ch, tap, row, M, N) * np.conj(ref) / abs(ref))
    shift = (ensemble[0].taps[row_tap].doppler - ensemble[0].taps[tap].doppler) % N
    return np.array(out), int(shift)


def _observation_form(design_rows: dict, plan: SicPlan, ensemble: ChannelEnsemble,
                      params: SystemParams, obs_row: int, exclude: int) -> LinearForm:
    """Exact form of ``y[obs_row]`` at column 0 minus the desired row ``exclude``."""
    U, M, N = ensemble.U, params.M, params.N
    v = LinearForm.zeros(U, M, N)
    v.w[obs_row, 0] = 1.0
    for j, l in enumerate(plan.delays):
        r = obs_row - int(l)
        if not 0 <= r < plan.layout.n_data or r == exclude:
            continue
        g, s = _cross_gains(ensemble, j, r, plan.observation_tap[r], M, N)
        v.d[:, r, s] += np.sqrt(design_rows[r].powers) * g
    return v


def _sic_pass(plan: SicPlan, ensemble: ChannelEnsemble, params: SystemParams, received=None,
              policy: str = "theorem1", device: int | None = None) -> dict:
    if not ensemble.shared_geometry:
        raise ValueError("ZP-SIC needs a shared-geometry ensemble")
    if np.any(ensemble.delays != plan.delays):
        raise ValueError("plan and ensemble geometries differ")
    M, N = params.M, params.N
    rows: dict = {}
    for m in plan.order:
        tap = plan.observation_tap[m]
        obs = plan.observation_row[m]
        y = None if received is None else np.asarray(received)[obs]
        its = []
        for i in plan.interferers[m]:
            if i not in rows:
                raise ValueError(f"plan order violated: row {i} needed before row {m}")
            j = int(np.flatnonzero(plan.delays == obs - i)[0])
            g, s = _cross_gains(ensemble, j, i, plan.observation_tap[i], M, N)
            its.append(Interferer(rows[i], g, s))
        v0 = _observation_form(rows, plan, ensemble, params, obs, exclude=m)
        rows[m] = estimate_row_sic(y, its, ensemble, params, row=m, tap=tap, observation_row=obs,
                                   observation_form=v0, policy=policy, device=device)
    return rows


def sic_design(plan: SicPlan, ensemble: ChannelEnsemble, params: SystemParams,
               policy: str = "theorem1", device: int | None = None) -> SicDesign:
    """Per-row powers, denoising factors and cancellation weights for a channel ensemble."""
    return SicDesign(plan, ensemble, params, _sic_pass(plan, ensemble, params, None, policy, device),
                     policy)


@dataclass
class FrameReport:
    analytic_mse: float
    empirical_mse: float | None
    row_analytic: np.ndarray
    row_empirical: np.ndarray | None


def sic_estimate_frame(received, plan: SicPlan, ensemble: ChannelEnsemble, params: SystemParams,
                       design: SicDesign | None = None, data=None):
    """Run the SIC receiver on one received frame.

    Returns the per-row estimates (plan order) and a :class:`FrameReport`;
    empirical errors need the transmitted ``(U, n_data, N)`` payload.
    """
    policy = "theorem1" if design is None else design.policy
    rows = _sic_pass(plan, ensemble, params, received, policy)
    n = plan.layout.n_data
    row_an = np.array([rows[m].analytic_mse for m in range(n)])
    row_emp = None
    emp = None
    if data is not None:
        target = np.asarray(data).sum(axis=0)
        row_emp = np.array([np.mean(np.abs(rows[m].estimate - target[m]) ** 2) for m in range(n)])
        emp = float(row_emp.mean())
    return [rows[m] for m in plan.order], FrameReport(float(row_an.mean()), emp, row_an, row_emp)


def zp_frame_errors(design: SicDesign, rng: np.random.Generator, trials: int,
                    symbols: str = "gaussian") -> np.ndarray:
    """``(trials, n_data)`` per-row mean squared errors from simulated frames."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    params = design.params
    U, M, N, n = design.ensemble.U, params.M, params.N, design.layout.n_data
    errors = np.empty((trials, n))
    for start in range(0, trials, BATCH):
        T = min(BATCH, trials - start)
        data = draw_symbols(rng, (T, U, n, N), symbols)
        noise = draw_noise(rng, (T, M, N), params.sigma2)
        y = design.transmit(data, noise)
        est = _estimate_with(design, y)
        errors[start:start + T] = np.mean(np.abs(est - data.sum(axis=-3)) ** 2, axis=-1)
    return errors


def _estimate_with(design: SicDesign, received) -> np.ndarray:
    """Apply a fixed design's weights to received frame(s); returns ``(..., n_data, N)`` sums."""
    received = np.asarray(received)
    out = np.empty(received.shape[:-2] + (design.layout.n_data, design.params.N), dtype=complex)
    for m in design.plan.order:
        r = design.rows[m]
        y = np.array(received[..., r.observation_row, :], dtype=complex)
        for i, z in r.zetas.items():
            y -= z * np.roll(out[..., i, :], -r.shifts[i], axis=-1)
        out[..., m, :] = y / np.sqrt(r.eta)
    return out


def zp_measure(design: SicDesign, rng: np.random.Generator, trials: int,
               symbols: str = "gaussian") -> EmpiricalMse:
    errors = zp_frame_errors(design, rng, trials, symbols).mean(axis=1)
    se = float(np.std(errors, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return EmpiricalMse(float(errors.mean()), se, trials, design.ensemble.U)
