"""Gray-mapped square QAM, ZF/MMSE equalisation and the analytic BER."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg
from scipy.special import erfc

from .dd_core import DdChannel
from .errors import BoundDomainError, DegenerateSinrWarning, FramingError, RankDeficiencyError

ZF = 0
MMSE = 1


def ber_constants(mod_order: int) -> tuple[float, float]:
    """``(alpha, beta)`` of the Gray-coded square QAM BER approximation."""
    alpha = (2 - 2 / math.sqrt(mod_order)) / math.log2(mod_order)
    beta = 3 / (2 * mod_order - 2)
    return alpha, beta


def convexity_eta(beta: float, kappa: int) -> float:
    bk = 2 * beta * kappa
    return 4 * beta / (math.sqrt((bk - 9) * (bk - 1)) + 3 + bk)


@dataclass(frozen=True)
class ModulationParams:
    """Square QAM order, equaliser kind and communication noise variance.

    ``kappa`` is 0 for ZF and 1 for MMSE.
    """

    mod_order: int = 16
    kappa: int = ZF
    noise_var: float = 1.0
    alpha: float = field(init=False)
    beta: float = field(init=False)
    eta: float = field(init=False)

    def __post_init__(self):
        order = self.mod_order
        if not isinstance(order, int) or order < 4 or order & (order - 1) or int(math.log2(order)) % 2:
            raise ValueError(f"mod_order must be a power of 4 (>= 4), got {order!r}")
        if self.kappa not in (ZF, MMSE):
            raise ValueError(f"kappa must be 0 (ZF) or 1 (MMSE), got {self.kappa!r}")
        if not self.noise_var > 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var!r}")
        alpha, beta = ber_constants(order)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "eta", convexity_eta(beta, self.kappa))

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.mod_order))

    @property
    def levels_per_axis(self) -> int:
        return math.isqrt(self.mod_order)

    @property
    def scale(self) -> float:
        """Amplitude of the unit level so that E|d|^2 = 1."""
        return math.sqrt(3 / (2 * (self.mod_order - 1)))


class LowerBound(NamedTuple):
    value: float
    valid: bool


class Validity(NamedTuple):
    per_symbol: np.ndarray
    all: bool


# -- constellation ---------------------------------------------------------


def _gray_decode(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def _bits_to_int(bits: np.ndarray) -> np.ndarray:
    weights = 1 << np.arange(bits.shape[-1] - 1, -1, -1)
    return bits @ weights


def _int_to_bits(values: np.ndarray, width: int) -> np.ndarray:
    shifts = np.arange(width - 1, -1, -1)
    return (values[..., None] >> shifts) & 1


def qam_modulate(bits, params: ModulationParams) -> np.ndarray:
    """Map bits to unit-energy Gray QAM symbols.

    Each symbol takes ``log2(M)`` bits; the first half select the in-phase
    level and the second half the quadrature level, each through a
    binary-reflected Gray code.
    """
    bits = np.asarray(bits, dtype=np.int64).ravel()
    k = params.bits_per_symbol
    if bits.size % k:
        raise FramingError(f"{bits.size} bits is not a multiple of {k} bits per symbol")
    if np.any((bits != 0) & (bits != 1)):
        raise FramingError("bits must be 0 or 1")
    half = k // 2
    groups = bits.reshape(-1, k)
    levels = params.levels_per_axis
    i_idx = _gray_decode(_bits_to_int(groups[:, :half]))
    q_idx = _gray_decode(_bits_to_int(groups[:, half:]))
    return params.scale * ((2 * i_idx - (levels - 1)) + 1j * (2 * q_idx - (levels - 1)))


def _axis_decide(x: np.ndarray, params: ModulationParams) -> np.ndarray:
    levels = params.levels_per_axis
    u = (x / params.scale + (levels - 1)) / 2
    # ceil(u - 1/2): exact midpoints go to the lower (more negative) level
    idx = np.ceil(u - 0.5).astype(np.int64)
    return np.clip(idx, 0, levels - 1)


def qam_demodulate(symbols, params: ModulationParams) -> np.ndarray:
    """Hard-decision demapping, the inverse of :func:`qam_modulate`."""
    symbols = np.asarray(symbols, dtype=complex).ravel()
    half = params.bits_per_symbol // 2
    i_idx = _axis_decide(symbols.real, params)
    q_idx = _axis_decide(symbols.imag, params)
    i_bits = _int_to_bits(i_idx ^ (i_idx >> 1), half)
    q_bits = _int_to_bits(q_idx ^ (q_idx >> 1), half)
    return np.concatenate([i_bits, q_bits], axis=1).ravel().astype(np.int8)


def constellation(params: ModulationParams) -> tuple[np.ndarray, np.ndarray]:
    """All points and their bit labels, in label order."""
    k = params.bits_per_symbol
    labels = _int_to_bits(np.arange(params.mod_order), k)
    return qam_modulate(labels.ravel(), params), labels


# -- equalisation and SINR ---------------------------------------------------


def _as_matrix(channel) -> np.ndarray:
    return channel.matrix if isinstance(channel, DdChannel) else np.asarray(channel, dtype=complex)


def _gram_factor(channel, precoder_w, params: ModulationParams):
    h = _as_matrix(channel)
    hw = h @ np.asarray(precoder_w, dtype=complex)
    a = hw.conj().T @ hw
    a = (a + a.conj().T) / 2
    a[np.diag_indices_from(a)] += params.kappa * params.noise_var
    try:
        return linalg.cho_factor(a, lower=True), hw
    except linalg.LinAlgError as exc:
        raise RankDeficiencyError(
            "W^H H^H H W is singular; zero-forcing equalisation is undefined"
        ) from exc


def inverse_gram_diag(channel, precoder_w, params: ModulationParams) -> np.ndarray:
    """Diagonal of ``(kappa*sigma^2 I + W^H H^H H W)^{-1}``."""
    factor, hw = _gram_factor(channel, precoder_w, params)
    inv = linalg.cho_solve(factor, np.eye(hw.shape[1], dtype=complex))
    return np.real(np.diag(inv))


def equalizer_matrix(channel, precoder_w, params: ModulationParams) -> np.ndarray:
    """ZF (kappa=0) or MMSE (kappa=1) equaliser ``Q``."""
    factor, hw = _gram_factor(channel, precoder_w, params)
    return linalg.cho_solve(factor, hw.conj().T)


def per_symbol_sinr(channel, precoder_w, params: ModulationParams) -> np.ndarray:
    diag = inverse_gram_diag(channel, precoder_w, params)
    return 1.0 / (params.noise_var * diag) - params.kappa


def _ber_from_sinr(sinr: np.ndarray, params: ModulationParams) -> float:
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr <= 0):
        warnings.warn("non-positive SINR; erfc evaluated at 0", DegenerateSinrWarning, stacklevel=3)
        sinr = np.maximum(sinr, 0.0)
    return float(params.alpha * np.mean(erfc(np.sqrt(params.beta * sinr))))


def analytic_ber(channel, precoder_w, params: ModulationParams) -> float:
    """Average BER over the frame, ``alpha/MN * sum_m erfc(sqrt(beta*SINR_m))``."""
    return _ber_from_sinr(per_symbol_sinr(channel, precoder_w, params), params)


def ber_from_inverse_trace(phi: float, mn: int, params: ModulationParams) -> float:
    """Jensen lower bound written in terms of ``phi = tr(A^{-1})``."""
    arg = params.beta * mn / (params.noise_var * phi) - params.beta * params.kappa
    if arg < 0:
        raise BoundDomainError(f"negative erfc argument {arg:.3e} in the BER lower bound")
    return float(params.alpha * erfc(math.sqrt(arg)))


def ber_lower_bound(
    channel, precoder_w, params: ModulationParams, direction: str = "corrected"
) -> LowerBound:
    diag = inverse_gram_diag(channel, precoder_w, params)
    value = ber_from_inverse_trace(float(np.sum(diag)), diag.size, params)
    return LowerBound(value, bool(np.all(_validity(diag, params, direction))))


def _validity(diag: np.ndarray, params: ModulationParams, direction: str) -> np.ndarray:
    if direction == "corrected":
        return params.noise_var * diag <= params.eta
    if direction == "printed":
        return params.noise_var <= params.eta * diag
    raise ValueError(f"direction must be 'corrected' or 'printed', got {direction!r}")


def lb_validity_check(
    channel, precoder_w, params: ModulationParams, direction: str = "corrected"
) -> Validity:
    """Per-symbol convexity condition under which the Jensen bound holds.

    With ``z_m = [(kappa*sigma^2 I + W^H H^H H W)^{-1}]_mm`` the per-symbol
    BER ``erfc(sqrt(beta/(sigma^2 z) - beta*kappa))`` is convex in ``z``
    exactly when ``sigma^2 * z <= eta`` ("corrected", the default). The
    "printed" direction ``sigma^2 <= eta * z`` is available for comparison;
    it holds at low rather than high SNR.
    """
    diag = inverse_gram_diag(channel, precoder_w, params)
    flags = _validity(diag, params, direction)
    return Validity(flags, bool(np.all(flags)))
