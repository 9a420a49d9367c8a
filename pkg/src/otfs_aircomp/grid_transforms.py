"""Delay-Doppler <-> time-frequency transforms and the discrete OTFS channel relation.

Frames are plain complex arrays of shape ``(M, N)``: axis 0 is the delay
index ``l`` (subcarrier count ``M``), axis 1 the Doppler index ``k`` (slot
count ``N``).  Stacks of device frames use shape ``(U, M, N)``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _as_frame(x) -> np.ndarray:
    x = np.asarray(x, dtype=complex)
    if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ValueError(f"expected an (M, N) grid, got shape {x.shape}")
    return x


def _kernels(M: int, N: int):
    l = np.arange(M)
    k = np.arange(N)
    # exp(-j2pi ml/M) and exp(+j2pi nk/N)
    delay_kernel = np.exp(-2j * np.pi * np.outer(l, l) / M)
    doppler_kernel = np.exp(2j * np.pi * np.outer(k, k) / N)
    return delay_kernel, doppler_kernel


def isfft(frame, method: str = "fft") -> np.ndarray:
    """Map a delay-Doppler frame ``x[l, k]`` to the time-frequency grid ``X[m, n]``.

    ``method="direct"`` evaluates the double sum through explicit kernel
    matrices; ``"fft"`` uses the factored DFT form.  Both are unitary.
    """
    x = _as_frame(frame)
    M, N = x.shape[-2:]
    if method == "fft":
        return np.fft.ifft(np.fft.fft(x, axis=-2, norm="ortho"), axis=-1, norm="ortho")
    if method == "direct":
        delay_kernel, doppler_kernel = _kernels(M, N)
        return delay_kernel @ x @ doppler_kernel / np.sqrt(M * N)
    raise ValueError(f"unknown method {method!r}")


def sfft(grid, method: str = "fft") -> np.ndarray:
    """Inverse of :func:`isfft`: time-frequency samples ``Y[m, n]`` to ``y[l, k]``."""
    X = _as_frame(grid)
    M, N = X.shape[-2:]
    if method == "fft":
        return np.fft.fft(np.fft.ifft(X, axis=-2, norm="ortho"), axis=-1, norm="ortho")
    if method == "direct":
        delay_kernel, doppler_kernel = _kernels(M, N)
        return delay_kernel.conj() @ X @ doppler_kernel.conj() / np.sqrt(M * N)
    raise ValueError(f"unknown method {method!r}")


def alpha(l: int, k: int, l_i: int, k_i: int, M: int, N: int) -> complex:
    """Phase factor of one path at received position ``(l, k)``.

    The extra ``exp(-j2pi k/N)`` term applies only when the delayed index
    wraps around (``l < l_i``).
    """
    if not (0 <= l < M and 0 <= k < N and 0 <= l_i < M):
        raise IndexError(f"index out of range: l={l}, k={k}, l_i={l_i} for M={M}, N={N}")
    value = np.exp(2j * np.pi * k_i * ((l - l_i) % M) / (M * N))
    if l < l_i:
        value *= np.exp(-2j * np.pi * k / N)
    return complex(value)


def alpha_grid(l_i: int, k_i: int, M: int, N: int) -> np.ndarray:
    """:func:`alpha` evaluated over the whole ``(M, N)`` grid."""
    if not 0 <= l_i < M:
        raise IndexError(f"path delay {l_i} outside [0, {M})")
    l = np.arange(M)[:, None]
    k = np.arange(N)[None, :]
    phase = np.exp(2j * np.pi * k_i * ((l - l_i) % M) / (M * N)) * np.ones((1, N))
    return np.where(l < l_i, phase * np.exp(-2j * np.pi * k / N), phase)


def apply_path(x: np.ndarray, gain: complex, l_i: int, k_i: int) -> np.ndarray:
    """Contribution ``h * alpha[l, k] * x[[l - l_i]_M, [k - k_i]_N]`` of one path."""
    M, N = x.shape[-2:]
    shifted = np.roll(x, (l_i, k_i), axis=(-2, -1))
    return gain * alpha_grid(l_i, k_i, M, N) * shifted


def dd_io_relation(frames, channels: Sequence, noise=None) -> np.ndarray:
    """Received delay-Doppler frame for ``U`` devices superposed over their channels.

    ``frames`` has shape ``(..., U, M, N)`` (a single ``(M, N)`` frame is
    treated as ``U = 1``); ``channels`` holds one :class:`MultipathChannel`
    per device; ``noise`` is optional and broadcast against the ``(..., M, N)``
    output.
    """
    x = _as_frame(frames)
    if x.ndim == 2:
        x = x[None]
    if len(channels) != x.shape[-3]:
        raise ValueError(f"{x.shape[-3]} frames but {len(channels)} channels")
    M, N = x.shape[-2:]
    y = np.zeros(x.shape[:-3] + (M, N), dtype=complex)
    for u, channel in enumerate(channels):
        frame = x[..., u, :, :]
        for tap in channel.taps:
            if not 0 <= tap.delay < M or abs(tap.doppler) >= N:
                raise ValueError(f"tap {tap} out of range for M={M}, N={N}")
            y += apply_path(frame, tap.gain, tap.delay, tap.doppler)
    if noise is not None:
        noise = np.asarray(noise, dtype=complex)
        if noise.shape[-2:] != (M, N):
            raise ValueError(f"noise shape {noise.shape} does not end in {(M, N)}")
        y = y + noise
    return y
