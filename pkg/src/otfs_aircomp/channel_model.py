"""Multipath delay-Doppler channels, random generation and the ZP block channel matrix."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np


@dataclass(frozen=True)
class PathTap:
    gain: complex
    delay: int
    doppler: int

    def __post_init__(self):
        if self.delay < 0:
            raise ValueError(f"negative delay index {self.delay}")


@dataclass(frozen=True)
class MultipathChannel:
    """Ordered taps of one device; tap 0 (smallest delay) is the principal path."""

    taps: tuple

    def __post_init__(self):
        taps = tuple(self.taps)
        if not taps:
            raise ValueError("a channel needs at least one tap")
        object.__setattr__(self, "taps", tuple(sorted(taps, key=lambda t: t.delay)))

    @classmethod
    def from_arrays(cls, gains, delays, dopplers) -> "MultipathChannel":
        return cls(tuple(PathTap(complex(h), int(l), int(k))
                         for h, l, k in zip(gains, delays, dopplers)))

    @property
    def principal(self) -> PathTap:
        return self.taps[0]

    @property
    def gains(self) -> np.ndarray:
        return np.array([t.gain for t in self.taps], dtype=complex)

    @property
    def delays(self) -> np.ndarray:
        return np.array([t.delay for t in self.taps], dtype=int)

    @property
    def dopplers(self) -> np.ndarray:
        return np.array([t.doppler for t in self.taps], dtype=int)

    def __len__(self):
        return len(self.taps)


@dataclass(frozen=True)
class ChannelEnsemble:
    channels: tuple
    shared_geometry: bool = False

    def __post_init__(self):
        channels = tuple(self.channels)
        object.__setattr__(self, "channels", channels)
        if self.shared_geometry:
            ref = channels[0]
            for ch in channels[1:]:
                if (len(ch) != len(ref) or np.any(ch.delays != ref.delays)
                        or np.any(ch.dopplers != ref.dopplers)):
                    raise ValueError("shared_geometry set but devices differ in delay/Doppler")

    def __len__(self):
        return len(self.channels)

    def __iter__(self):
        return iter(self.channels)

    def __getitem__(self, u):
        return self.channels[u]

    @property
    def U(self) -> int:
        return len(self.channels)

    def gain_matrix(self) -> np.ndarray:
        """``(U, R)`` complex gains; requires equal tap counts."""
        return np.array([ch.gains for ch in self.channels])

    @property
    def delays(self) -> np.ndarray:
        """Shared delay indices (shared-geometry ensembles only)."""
        if not self.shared_geometry:
            raise ValueError("ensemble has no shared geometry")
        return self.channels[0].delays

    @property
    def dopplers(self) -> np.ndarray:
        if not self.shared_geometry:
            raise ValueError("ensemble has no shared geometry")
        return self.channels[0].dopplers

    def scaled(self, c: float) -> "ChannelEnsemble":
        return ChannelEnsemble(
            tuple(MultipathChannel(tuple(PathTap(c * t.gain, t.delay, t.doppler) for t in ch.taps))
                  for ch in self.channels),
            self.shared_geometry,
        )


def _draw_geometry(rng, R, l_max, k_max, distinct_delays):
    if distinct_delays:
        if R > l_max + 1:
            raise ValueError(f"cannot draw {R} distinct delays from [0, {l_max}]")
        delays = rng.choice(l_max + 1, size=R, replace=False)
        dopplers = rng.integers(-k_max, k_max + 1, size=R)
    else:
        if R > (l_max + 1) * (2 * k_max + 1):
            raise ValueError(f"cannot place {R} distinct (delay, Doppler) pairs")
        delays = rng.integers(0, l_max + 1, size=R)
        dopplers = rng.integers(-k_max, k_max + 1, size=R)
        # coincident taps would add coherently and break the per-path power accounting
        while len({(int(a), int(b)) for a, b in zip(delays, dopplers)}) < R:
            delays = rng.integers(0, l_max + 1, size=R)
            dopplers = rng.integers(-k_max, k_max + 1, size=R)
    order = np.argsort(delays, kind="stable")
    return delays[order], dopplers[order]


def _draw_gains(rng, R):
    return (rng.standard_normal(R) + 1j * rng.standard_normal(R)) * np.sqrt(0.5 / R)


def _check_ranges(R, l_max, k_max, N):
    if R < 1 or l_max < 0 or k_max < 0:
        raise ValueError(f"invalid channel parameters R={R}, l_max={l_max}, k_max={k_max}")
    if N is not None and not 2 * k_max < N:
        raise ValueError(f"k_max={k_max} must be below N/2={N / 2}")


def sample_channel(rng: np.random.Generator, R: int, l_max: int, k_max: int,
                   N: int | None = None, distinct_delays: bool = True) -> MultipathChannel:
    """Draw ``R`` taps with i.i.d. CN(0, 1/R) gains (uniform power delay profile).

    Delay indices are uniform on ``[0, l_max]`` and Doppler indices uniform on
    ``[-k_max, k_max]``.  Without ``distinct_delays``, delays may repeat but
    full (delay, Doppler) pairs never do.
    """
    _check_ranges(R, l_max, k_max, N)
    delays, dopplers = _draw_geometry(rng, R, l_max, k_max, distinct_delays)
    return MultipathChannel.from_arrays(_draw_gains(rng, R), delays, dopplers)


def sample_ensemble(rng: np.random.Generator, U: int, R: int, l_max: int, k_max: int,
                    N: int | None = None, shared_geometry: bool = True,
                    distinct_delays: bool = True) -> ChannelEnsemble:
    """Draw ``U`` channels; with ``shared_geometry`` one tap geometry is reused by all."""
    if U < 1:
        raise ValueError("U must be positive")
    _check_ranges(R, l_max, k_max, N)
    if not shared_geometry:
        return ChannelEnsemble(tuple(sample_channel(rng, R, l_max, k_max, N, distinct_delays)
                                     for _ in range(U)), False)
    delays, dopplers = _draw_geometry(rng, R, l_max, k_max, distinct_delays)
    channels = tuple(MultipathChannel.from_arrays(_draw_gains(rng, R), delays, dopplers)
                     for _ in range(U))
    return ChannelEnsemble(channels, True)


class BlockChannelMatrix:
    """Sparse block map of the ZP delay-Doppler channel matrix.

    ``blocks[(m, l)]`` is the circulant generator ``nu`` (length ``N``) of the
    ``N x N`` block mapping transmitted row ``m - l`` to received row ``m``.
    """

    def __init__(self, M: int, N: int, blocks: dict):
        self.M = M
        self.N = N
        self.blocks = blocks

    def block(self, m: int, l: int) -> np.ndarray:
        """Dense circulant block ``K[r, c] = nu[(r - c) mod N]``."""
        nu = self.blocks[(m, l)]
        idx = (np.arange(self.N)[:, None] - np.arange(self.N)[None, :]) % self.N
        return nu[idx]

    def to_dense(self) -> np.ndarray:
        M, N = self.M, self.N
        H = np.zeros((M * N, M * N), dtype=complex)
        for (m, l) in self.blocks:
            H[m * N:(m + 1) * N, (m - l) * N:(m - l + 1) * N] += self.block(m, l)
        return H

    def apply(self, frame) -> np.ndarray:
        """Multiply the stacked frame ``[x_0; ...; x_{M-1}]`` and return an (M, N) frame."""
        x = np.asarray(frame, dtype=complex)
        y = np.zeros((self.M, self.N), dtype=complex)
        for (m, l), nu in self.blocks.items():
            # circulant product == circular convolution with nu
            y[m] += np.fft.ifft(np.fft.fft(nu) * np.fft.fft(x[m - l]))
        return y


def build_channel_matrix(channel: MultipathChannel, M: int, N: int) -> BlockChannelMatrix:
    """Block-circulant channel matrix of one device for zero-padded frames."""
    z = np.exp(2j * np.pi / (M * N))
    blocks: dict = {}
    for tap in channel.taps:
        if tap.delay >= M:
            raise ValueError(f"delay {tap.delay} >= M={M}")
        for m in range(tap.delay, M):
            nu = blocks.setdefault((m, tap.delay), np.zeros(N, dtype=complex))
            nu[tap.doppler % N] += tap.gain * z ** (tap.doppler * (m - tap.delay))
    return BlockChannelMatrix(M, N, blocks)


def _fmt(x: float) -> str:
    return format(x, ".17g")


def dump_ensemble(ensemble: ChannelEnsemble, fh: TextIO | None = None) -> str:
    """Serialize to one ``device re(h) im(h) l k`` line per tap; returns the text."""
    out = io.StringIO()
    out.write(f"# shared_geometry={int(ensemble.shared_geometry)}\n")
    for u, ch in enumerate(ensemble.channels):
        for t in ch.taps:
            out.write(f"{u} {_fmt(t.gain.real)} {_fmt(t.gain.imag)} {t.delay} {t.doppler}\n")
    text = out.getvalue()
    if fh is not None:
        fh.write(text)
    return text


def load_ensemble(lines: Iterable[str] | str) -> ChannelEnsemble:
    if isinstance(lines, str):
        lines = lines.splitlines()
    shared = False
    per_device: dict = {}
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            if "shared_geometry=" in line:
                shared = bool(int(line.split("shared_geometry=")[1].split()[0]))
            continue
        u, re, im, l, k = line.split()
        per_device.setdefault(int(u), []).append(PathTap(complex(float(re), float(im)), int(l), int(k)))
    if sorted(per_device) != list(range(len(per_device))):
        raise ValueError("device indices must be contiguous from 0")
    return ChannelEnsemble(tuple(MultipathChannel(tuple(per_device[u])) for u in range(len(per_device))),
                           shared)


def ensemble_from_gains(gains: Sequence, delays: Sequence[int] | None = None,
                        dopplers: Sequence[int] | None = None) -> ChannelEnsemble:
    """Build a shared-geometry ensemble from a ``(U, R)`` gain table; handy for small instances.

    Ragged rows are allowed when no geometry is given; delays then default to
    ``0, 1, ...`` and Dopplers to zero.
    """
    rows = [np.atleast_1d(np.asarray(g, dtype=complex)) for g in gains]
    ragged = len({len(r) for r in rows}) > 1
    channels = []
    for r in rows:
        d = np.arange(len(r)) if delays is None else np.asarray(delays)
        k = np.zeros(len(r), dtype=int) if dopplers is None else np.asarray(dopplers)
        channels.append(MultipathChannel.from_arrays(r, d, k))
    return ChannelEnsemble(tuple(channels), shared_geometry=not ragged)
