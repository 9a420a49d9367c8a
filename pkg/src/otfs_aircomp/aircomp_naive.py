"""OTFS AirComp without zero padding: precoding, MSE, and the joint power/denoising optimum.

All MSE values follow the unnormalized convention (the ``1/U^2`` factor is
dropped); :class:`EmpiricalMse` also carries the normalized value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel_model import ChannelEnsemble, MultipathChannel, PathTap
from .grid_transforms import alpha_grid, dd_io_relation


@dataclass
class PowerPolicy:
    powers: np.ndarray
    eta: float
    info: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.powers = np.asarray(self.powers, dtype=float)
        self.eta = float(self.eta)
        if np.any(self.powers < 0) or self.eta < 0:
            raise ValueError("powers and eta must be nonnegative")


@dataclass(frozen=True)
class SystemParams:
    M: int
    N: int
    U: int
    P: float
    sigma2: float

    def __post_init__(self):
        if self.M < 1 or self.N < 1 or self.U < 1:
            raise ValueError("M, N and U must be positive")
        if self.P <= 0 or self.sigma2 < 0:
            raise ValueError("P must be positive and sigma2 nonnegative")

    @classmethod
    def from_snr_db(cls, M, N, U, snr_db, P=1.0):
        """SNR = P / sigma2 with the budget held fixed."""
        return cls(M, N, U, P, P / 10 ** (snr_db / 10))


@dataclass(frozen=True)
class MseBreakdown:
    signal_misalignment: float
    interference: float
    noise: float

    @property
    def total(self) -> float:
        return self.signal_misalignment + self.interference + self.noise


@dataclass(frozen=True)
class EmpiricalMse:
    mse: float
    std_error: float
    trials: int
    U: int

    @property
    def normalized(self) -> float:
        return self.mse / self.U ** 2


def _channel_stats(ensemble: ChannelEnsemble):
    """Per device: principal magnitude |h_1|, total power sum_i |h_i|^2."""
    h1 = np.array([abs(ch.principal.gain) for ch in ensemble])
    total = np.array([np.sum(np.abs(ch.gains) ** 2) for ch in ensemble])
    return h1, total


def arrange_frame(data, principal: PathTap) -> np.ndarray:
    """Pre-shift ``data`` so the principal path delivers ``data[l, k]`` at ``(l, k)``."""
    data = np.asarray(data, dtype=complex)
    return np.roll(data, (-principal.delay, -principal.doppler), axis=(-2, -1))


def precoding_coefficients(channel: MultipathChannel, p: float, M: int, N: int) -> np.ndarray:
    """``b[l, k] = sqrt(p) conj(h_1) conj(alpha_1[l, k]) / |h_1|`` on the received grid."""
    h1 = channel.principal
    if h1.gain == 0:
        raise ZeroDivisionError("principal path gain is zero")
    if p < 0:
        raise ValueError("power must be nonnegative")
    a = alpha_grid(h1.delay, h1.doppler, M, N)
    return np.sqrt(p) * np.conj(h1.gain) * np.conj(a) / abs(h1.gain)


def precode(frame, channel: MultipathChannel, p: float) -> np.ndarray:
    """Scale an arranged frame by the principal-path transmit coefficient.

    The coefficient for the symbol sitting at ``(a, b)`` is the one of the
    grid point it reaches through the principal path, so the principal term
    of the received frame becomes ``sqrt(p) |h_1|`` times the payload.
    """
    frame = np.asarray(frame, dtype=complex)
    M, N = frame.shape[-2:]
    b = precoding_coefficients(channel, p, M, N)
    h1 = channel.principal
    return frame * np.roll(b, (-h1.delay, -h1.doppler), axis=(0, 1))


def analytic_mse(policy: PowerPolicy, ensemble: ChannelEnsemble, params: SystemParams) -> MseBreakdown:
    if policy.eta <= 0:
        raise ValueError("eta must be positive")
    h1, total = _channel_stats(ensemble)
    p = policy.powers
    eta = policy.eta
    misalign = float(np.sum((np.sqrt(p) * h1 / np.sqrt(eta) - 1.0) ** 2))
    interference = float(np.sum(p * (total - h1 ** 2)) / eta)
    return MseBreakdown(misalign, interference, params.sigma2 / eta)


def optimal_power_given_eta(eta: float, ensemble: ChannelEnsemble, params: SystemParams) -> np.ndarray:
    h1, total = _channel_stats(ensemble)
    return np.minimum(params.P, h1 ** 2 * eta / total ** 2)


def _saturated_eta(params: SystemParams, h1, total) -> float:
    """Stationary ``eta`` when exactly the given devices transmit at ``P``.

    Exactly rounded sums make the value independent of device order, so
    policies that coincide mathematically also coincide in floating point.
    """
    num = math.fsum(params.P * np.asarray(total)) + params.sigma2
    den = math.fsum(np.sqrt(params.P) * np.asarray(h1))
    return (num / den) ** 2


def device_ratios(ensemble: ChannelEnsemble) -> np.ndarray:
    """``q_u = sum_i |h_{u,i}|^2 / |h_{u,1}|`` used to order devices."""
    h1, total = _channel_stats(ensemble)
    if np.any(h1 == 0):
        raise ZeroDivisionError("zero principal gain")
    return total / h1


def sort_devices(ensemble: ChannelEnsemble) -> np.ndarray:
    return np.argsort(device_ratios(ensemble), kind="stable")


@dataclass
class IntervalCandidates:
    """Per-interval quantities of the interval search, in sorted device order."""

    order: np.ndarray
    lower: np.ndarray        # interval lower bounds P q_u^2, u = 1..U
    upper: np.ndarray        # P q_{u+1}^2 (inf for u = U)
    eta_hat: np.ndarray
    eta_clipped: np.ndarray
    objective: np.ndarray    # H_u at the clipped point


def interval_candidates(ensemble: ChannelEnsemble, params: SystemParams) -> IntervalCandidates:
    order = sort_devices(ensemble)
    h1, total = _channel_stats(ensemble)
    h1, total = h1[order], total[order]
    q2 = params.P * (total / h1) ** 2
    lower = q2
    upper = np.append(q2[1:], np.inf)
    eta_hat = np.array([_saturated_eta(params, h1[:u], total[:u]) for u in range(1, len(h1) + 1)])
    eta_clip = np.minimum(upper, np.maximum(eta_hat, lower))
    sorted_ens = ChannelEnsemble(tuple(ensemble[int(u)] for u in order))
    objective = np.array([
        analytic_mse(PowerPolicy(optimal_power_given_eta(e, sorted_ens, params), e),
                     sorted_ens, params).total
        for e in eta_clip
    ])
    return IntervalCandidates(order, lower, upper, eta_hat, eta_clip, objective)


def theorem1_solve(ensemble: ChannelEnsemble, params: SystemParams) -> PowerPolicy:
    """Jointly MSE-optimal transmit powers and denoising factor.

    Devices are sorted by ``q_u``; for every interval on which the first
    ``u`` devices saturate the budget the stationary ``eta`` is clipped to
    the interval, and the best interval wins (smallest ``u`` on ties).
    Powers are returned in the caller's device order.
    """
    c = interval_candidates(ensemble, params)
    u_star = int(np.argmin(c.objective))
    eta = c.eta_clipped[u_star]
    h1, total = _channel_stats(ensemble)
    ranked = np.empty(len(c.order), dtype=int)
    ranked[c.order] = np.arange(len(c.order))
    powers = np.where(ranked <= u_star, params.P,
                      np.minimum(params.P, h1 ** 2 * eta / total ** 2))
    info = {"u_star": u_star + 1, "order": c.order,
            "clipped": bool(eta != c.eta_hat[u_star]),
            "interval": (c.lower[u_star], c.upper[u_star])}
    return PowerPolicy(powers, eta, info)


def full_power_policy(ensemble: ChannelEnsemble, params: SystemParams) -> PowerPolicy:
    """Every device at ``P``; ``eta`` is the stationary point with all devices saturated."""
    h1, total = _channel_stats(ensemble)
    eta = _saturated_eta(params, h1, total)
    return PowerPolicy(np.full(len(h1), params.P), eta, {"policy": "full-power"})


def single_device_policy(ensemble: ChannelEnsemble, params: SystemParams) -> PowerPolicy:
    """Only the best-ranked device (smallest ``q_u``) transmits, at full power."""
    h1, total = _channel_stats(ensemble)
    u = int(sort_devices(ensemble)[0])
    powers = np.zeros(len(h1))
    powers[u] = params.P
    eta = _saturated_eta(params, h1[u:u + 1], total[u:u + 1])
    return PowerPolicy(powers, eta, {"policy": "single-device", "device": u})


POLICIES = {
    "theorem1": theorem1_solve,
    "full-power": full_power_policy,
    "single-device": single_device_policy,
}


def draw_symbols(rng: np.random.Generator, shape, kind: str = "gaussian") -> np.ndarray:
    """Zero-mean unit-power symbols: CN(0, 1) or unit-modulus QPSK."""
    if kind == "gaussian":
        return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    if kind == "qpsk":
        bits = rng.integers(0, 2, size=(2,) + tuple(np.atleast_1d(shape)))
        return ((1 - 2 * bits[0]) + 1j * (1 - 2 * bits[1])) / np.sqrt(2)
    raise ValueError(f"unknown symbol kind {kind!r}")


def draw_noise(rng: np.random.Generator, shape, sigma2: float) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(sigma2 / 2)


def transmit_frame(data, ensemble: ChannelEnsemble, policy: PowerPolicy, noise=None) -> np.ndarray:
    """Arrange, precode and superpose ``(..., U, M, N)`` payloads; returns the received frame(s)."""
    data = np.asarray(data, dtype=complex)
    sent = np.stack([precode(arrange_frame(data[..., u, :, :], ch.principal), ch, p)
                     for u, (ch, p) in enumerate(zip(ensemble, policy.powers))], axis=-3)
    return dd_io_relation(sent, list(ensemble), noise)


BATCH = 256


def frame_errors(ensemble: ChannelEnsemble, policy: PowerPolicy, params: SystemParams,
                 rng: np.random.Generator, trials: int, symbols: str = "gaussian") -> np.ndarray:
    """Per-frame mean of ``|y / sqrt(eta) - sum_u x_u|^2`` over the grid."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if policy.eta <= 0:
        raise ValueError("eta must be positive")
    M, N, U = params.M, params.N, ensemble.U
    errors = np.empty(trials)
    for start in range(0, trials, BATCH):
        T = min(BATCH, trials - start)
        data = draw_symbols(rng, (T, U, M, N), symbols)
        noise = draw_noise(rng, (T, M, N), params.sigma2)
        y = transmit_frame(data, ensemble, policy, noise)
        f_hat = y / (U * np.sqrt(policy.eta))
        errors[start:start + T] = np.mean(U ** 2 * np.abs(f_hat - data.mean(axis=-3)) ** 2,
                                          axis=(-2, -1))
    return errors


def estimate_and_measure(ensemble: ChannelEnsemble, policy: PowerPolicy, params: SystemParams,
                         rng: np.random.Generator, trials: int, symbols: str = "gaussian") -> EmpiricalMse:
    """Monte Carlo MSE of the ``y / (U sqrt(eta))`` estimator over ``trials`` frames."""
    errors = frame_errors(ensemble, policy, params, rng, trials, symbols)
    se = float(np.std(errors, ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return EmpiricalMse(float(np.mean(errors)), se, trials, ensemble.U)
