"""Structured matrices of the OTFS delay-Doppler system model.

Frame vectors are indexed ``q = n * M + m`` (Doppler bin ``n``, delay bin
``m``), which is the ordering implied by the ``F_N kron I_M`` transform.
All DFTs are unitary (``1/sqrt(dim)`` scaling).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from numbers import Integral
from typing import Sequence

import numpy as np

from .errors import InvalidDimensionError, InvalidPathError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class FrameParams:
    """OTFS grid geometry.

    ``slot_duration`` defaults to ``1 / subcarrier_spacing``; if given it must
    satisfy ``T * df = 1`` to a relative tolerance of 1e-9.
    """

    m: int = 8
    n: int = 8
    subcarrier_spacing: float = 2e3
    carrier_freq: float = 4e9
    slot_duration: float | None = None

    def __post_init__(self):
        for name in ("m", "n"):
            value = getattr(self, name)
            if not isinstance(value, Integral) or value < 1:
                raise InvalidDimensionError(f"{name} must be a positive integer, got {value!r}")
        if not self.subcarrier_spacing > 0:
            raise InvalidDimensionError("subcarrier_spacing must be positive")
        if not self.carrier_freq > 0:
            raise InvalidDimensionError("carrier_freq must be positive")
        if self.slot_duration is None:
            object.__setattr__(self, "slot_duration", 1.0 / self.subcarrier_spacing)
        elif abs(self.slot_duration * self.subcarrier_spacing - 1.0) > 1e-9:
            raise InvalidDimensionError(
                "slot_duration * subcarrier_spacing must equal 1 "
                f"(got {self.slot_duration * self.subcarrier_spacing!r})"
            )

    @property
    def mn(self) -> int:
        return self.m * self.n

    def delay_tap(self, delay: float) -> float:
        """Delay index ``M * df * tau`` for a delay in seconds."""
        return self.m * self.subcarrier_spacing * delay

    def doppler_tap(self, doppler: float) -> float:
        """Doppler index ``N * T * nu`` for a Doppler shift in Hz."""
        return self.n * self.slot_duration * doppler

    def max_doppler_tap(self, speed: float) -> int:
        """Largest integer Doppler tap for a relative speed in m/s."""
        nu_max = speed * self.carrier_freq / SPEED_OF_LIGHT
        return math.ceil(self.doppler_tap(nu_max) - 1e-12)


@dataclass(frozen=True)
class Path:
    """One propagation path with integer delay and Doppler taps."""

    gain: complex
    delay_tap: int = 0
    doppler_tap: int = 0

    def __post_init__(self):
        for name in ("delay_tap", "doppler_tap"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, Integral):
                # fractional taps are not modelled
                raise InvalidPathError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        object.__setattr__(self, "gain", complex(self.gain))
        if self.delay_tap < 0:
            raise InvalidPathError(f"delay_tap must be >= 0, got {self.delay_tap}")

    def check(self, frame: FrameParams) -> None:
        mn = frame.mn
        if self.delay_tap >= mn:
            raise InvalidPathError(f"delay_tap {self.delay_tap} outside [0, {mn})")
        if abs(self.doppler_tap) > mn / 2:
            raise InvalidPathError(f"|doppler_tap| {abs(self.doppler_tap)} exceeds MN/2 = {mn / 2}")


@dataclass(frozen=True)
class DdChannel:
    matrix: np.ndarray
    paths: tuple[Path, ...] = field(default_factory=tuple)

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "paths", tuple(self.paths))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _check_dim(dim) -> int:
    if isinstance(dim, bool) or not isinstance(dim, Integral) or dim < 1:
        raise InvalidDimensionError(f"dimension must be a positive integer, got {dim!r}")
    return int(dim)


def dft_matrix(dim: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2j*pi*r*c/dim) / sqrt(dim)``."""
    dim = _check_dim(dim)
    idx = np.arange(dim)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / dim) / np.sqrt(dim)


def cyclic_shift_power(dim: int, l: int) -> np.ndarray:
    """``Pi**l`` for the forward cyclic shift ``Pi = circ([0, 1, 0, ..., 0])``.

    ``cyclic_shift_power(dim, l) @ x`` equals ``np.roll(x, l)``.
    """
    dim = _check_dim(dim)
    return np.roll(np.eye(dim), int(l) % dim, axis=0)


def doppler_ramp(dim: int, k: float) -> np.ndarray:
    """Diagonal phase ramp ``diag(exp(2j*pi*k*q/dim))``, q = 0..dim-1."""
    dim = _check_dim(dim)
    return np.diag(np.exp(2j * np.pi * k * np.arange(dim) / dim))


def _checked_paths(frame: FrameParams, paths: Sequence[Path]) -> tuple[Path, ...]:
    paths = tuple(paths)
    for p in paths:
        if not isinstance(p, Path):
            raise InvalidPathError(f"expected Path, got {type(p).__name__}")
        p.check(frame)
    return paths


def time_channel(frame: FrameParams, paths: Sequence[Path]) -> np.ndarray:
    """Time-domain channel ``sum_p h_p Pi^l_p Delta^k_p`` (CP already removed)."""
    paths = _checked_paths(frame, paths)
    mn = frame.mn
    q = np.arange(mn)
    h = np.zeros((mn, mn), dtype=complex)
    for p in paths:
        # Pi^l Delta^k: row r holds the ramp phase of column (r - l) mod MN
        cols = (q - p.delay_tap) % mn
        h[q, cols] += p.gain * np.exp(2j * np.pi * p.doppler_tap * cols / mn)
    return h


def _kron_dft_left(frame: FrameParams, x: np.ndarray) -> np.ndarray:
    """``(F_N kron I_M) @ x`` via an FFT over the Doppler axis."""
    shaped = x.reshape(frame.n, frame.m, -1)
    return np.fft.fft(shaped, axis=0, norm="ortho").reshape(x.shape)


def _kron_dft_right_h(frame: FrameParams, x: np.ndarray) -> np.ndarray:
    """``x @ (F_N^H kron I_M)``."""
    return _kron_dft_left(frame, x.conj().T).conj().T


def kron_dft(frame: FrameParams) -> np.ndarray:
    """Dense ``F_N kron I_M``."""
    return np.kron(dft_matrix(frame.n), np.eye(frame.m))


def dd_channel(frame: FrameParams, paths: Sequence[Path]) -> DdChannel:
    """Equivalent DD-domain channel ``(F_N kron I_M) H_T (F_N^H kron I_M)``."""
    paths = _checked_paths(frame, paths)
    h_t = time_channel(frame, paths)
    h_dd = _kron_dft_right_h(frame, _kron_dft_left(frame, h_t))
    return DdChannel(h_dd, paths)


def doppler_derivative_matrix(frame: FrameParams) -> np.ndarray:
    """``D_nu = diag(j * 2*pi*T/M * q)``, the derivative of the Doppler ramp w.r.t. nu."""
    return np.diag(doppler_derivative_diag(frame))


def doppler_derivative_diag(frame: FrameParams) -> np.ndarray:
    return 1j * (2 * np.pi * frame.slot_duration / frame.m) * np.arange(frame.mn)


def sensing_derivative_channel(frame: FrameParams, sense_path: Path) -> np.ndarray:
    """Doppler derivative of the sensing DD channel.

    ``h_s (F_N kron I_M) Pi^l_s D_nu Delta^k_s (F_N^H kron I_M)``
    """
    _checked_paths(frame, [sense_path])
    mn = frame.mn
    inner = (
        sense_path.gain
        * cyclic_shift_power(mn, sense_path.delay_tap)
        @ np.diag(doppler_derivative_diag(frame) * np.diag(doppler_ramp(mn, sense_path.doppler_tap)))
    )
    return _kron_dft_right_h(frame, _kron_dft_left(frame, inner))


def sensing_gram(frame: FrameParams, sense_gain: complex) -> np.ndarray:
    """Fast path for ``Hdot^H Hdot = |h_s|^2 (F kron I) D^H D (F^H kron I)``.

    Independent of the sensing path's taps.
    """
    weights = abs(sense_gain) ** 2 * np.abs(doppler_derivative_diag(frame)) ** 2
    f = kron_dft(frame)
    return (f * weights) @ f.conj().T
