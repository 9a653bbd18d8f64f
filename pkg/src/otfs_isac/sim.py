"""Monte Carlo link simulation and SNR / CRB-threshold sweeps.

Random draws are keyed by ``(seed, point, chunk)`` where ``point`` is the
index of the SNR value and ``chunk`` a block of :data:`CHUNK_FRAMES`
frames. Every scheme and every CRB threshold evaluated at the same SNR
therefore sees the same bits and noise, and results do not depend on how
chunks are scheduled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .comms import MMSE, ZF, ModulationParams, analytic_ber, ber_lower_bound, equalizer_matrix, qam_demodulate, qam_modulate
from .dd_core import DdChannel, FrameParams, Path, dd_channel
from .errors import BoundDomainError, ConfigError, InfeasibleError, NonConvergenceError
from .precoder import DesignProblem, Precoder, SolverOptions, solve_dual, solve_unconstrained
from .sensing import SensingSetup, crb_doppler, sensing_eigen

log = logging.getLogger(__name__)

SCHEMES = ("proposed-zf", "proposed-mmse", "zf-wc", "mmse-wc")
CHUNK_FRAMES = 256
TARGET_ERRORS = 100


def scheme_kappa(scheme: str) -> int:
    _check_scheme(scheme)
    return ZF if "zf" in scheme else MMSE


def scheme_constrained(scheme: str) -> bool:
    _check_scheme(scheme)
    return scheme.startswith("proposed")


def _check_scheme(scheme: str) -> None:
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")


def snr_to_noise_var(snr_db: float, power_budget: float, channel_gain: complex, frame: FrameParams) -> float:
    """Noise variance for a per-symbol post-channel SNR under uniform power.

    ``sigma_c^2 = |h_c|^2 (P0 / MN) / 10^(snr_db / 10)``
    """
    return abs(channel_gain) ** 2 * (power_budget / frame.mn) / 10 ** (snr_db / 10)


def noise_var_to_snr(noise_var: float, power_budget: float, channel_gain: complex, frame: FrameParams) -> float:
    return 10 * math.log10(abs(channel_gain) ** 2 * (power_budget / frame.mn) / noise_var)


@dataclass(frozen=True)
class SimConfig:
    """Everything a sweep needs.

    The sensing noise follows the communication noise,
    ``sigma_s^2 = sigma_c^2 * 10^(-sensing_offset_db / 10)``, so raising the
    SNR also tightens the achievable CRB.
    """

    frame: FrameParams = field(default_factory=FrameParams)
    modulation: ModulationParams = field(default_factory=ModulationParams)
    comm_path: Path = field(default_factory=lambda: Path(1.0, 1, 1))
    sense_path: Path = field(default_factory=lambda: Path(1.0, 4, 2))
    power_budget: float = 64.0
    crb_threshold: float = 3e-7
    sensing_offset_db: float = 70.0
    snr_db: float = 10.0
    snr_grid_db: tuple = tuple(np.arange(10.0, 30.0 + 1e-9, 2.0))
    crb_threshold_grid: tuple = (8.5e-9, 9e-9, 1e-8, 1.2e-8, 3e-8, 3e-7)
    crb_snr_db: tuple = (25.0,)
    frames_per_point: int | None = None
    max_frames: int = 1_000_000
    rng_seed: int = 2024
    scheme: str = "proposed-zf"
    schemes: tuple = SCHEMES
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if self.frames_per_point is not None and self.frames_per_point < 1:
            raise ValueError("frames_per_point must be >= 1")
        if self.max_frames < 1:
            raise ValueError("max_frames must be >= 1")
        if len(self.snr_grid_db) == 0:
            raise ValueError("snr_grid_db must not be empty")
        if not self.power_budget > 0:
            raise ValueError("power_budget must be positive")
        if not self.crb_threshold > 0:
            raise ValueError("crb_threshold must be positive")
        _check_scheme(self.scheme)
        for s in self.schemes:
            _check_scheme(s)
        self.comm_path.check(self.frame)
        self.sense_path.check(self.frame)

    @property
    def bits_per_frame(self) -> int:
        return self.frame.mn * self.modulation.bits_per_symbol

    def noise_vars(self, snr_db: float) -> tuple[float, float]:
        sigma_c2 = snr_to_noise_var(snr_db, self.power_budget, self.comm_path.gain, self.frame)
        return sigma_c2, sigma_c2 * 10 ** (-self.sensing_offset_db / 10)

    def problem_at(self, snr_db: float, crb_threshold: float | None = None, scheme: str | None = None) -> DesignProblem:
        scheme = scheme or self.scheme
        sigma_c2, sigma_s2 = self.noise_vars(snr_db)
        threshold = self.crb_threshold if crb_threshold is None else crb_threshold
        modulation = ModulationParams(self.modulation.mod_order, scheme_kappa(scheme), sigma_c2)
        return DesignProblem(
            self.comm_path.gain, self.power_budget, modulation, SensingSetup(self.sense_path, sigma_s2, threshold)
        )

    def channel(self) -> DdChannel:
        return dd_channel(self.frame, [self.comm_path])


@dataclass(frozen=True)
class SweepRecord:
    snr_db: float
    crb_threshold: float
    scheme: str
    ber_monte_carlo: float
    ber_analytic: float
    ber_lower_bound: float
    crb_achieved: float
    bits_simulated: int
    bit_errors: int
    dual_lambda: float
    dual_mu: float
    converged: bool


class _Link:
    """Precomputed end-to-end matrices for one precoder and noise level.

    Equalised symbols are divided by the diagonal of ``Q H W`` before the
    hard decision. This is a no-op for ZF; for MMSE it removes the
    shrinkage bias, which is the detector the analytic SINR describes.
    """

    def __init__(self, channel: DdChannel, precoder_w: np.ndarray, modulation: ModulationParams):
        if channel.dim != precoder_w.shape[0]:
            raise ValueError(f"precoder is {precoder_w.shape[0]}-dim but the channel is {channel.dim}-dim")
        self.modulation = modulation
        self.q = equalizer_matrix(channel, precoder_w, modulation)
        effective = self.q @ channel.matrix @ precoder_w
        gain = np.real(np.diag(effective))[:, None]
        self.effective = effective / gain
        self.q = self.q / gain
        self.mn = channel.dim

    def run(self, rng: np.random.Generator, frames: int) -> tuple[int, int]:
        mod = self.modulation
        nbits = frames * self.mn * mod.bits_per_symbol
        bits = rng.integers(0, 2, size=nbits, dtype=np.int8)
        d = qam_modulate(bits, mod).reshape(frames, self.mn).T
        noise = rng.standard_normal((2, self.mn, frames))
        noise = math.sqrt(mod.noise_var / 2) * (noise[0] + 1j * noise[1])
        d_hat = self.effective @ d + self.q @ noise
        errors = int(np.count_nonzero(qam_demodulate(d_hat.T.ravel(), mod) != bits))
        return errors, nbits


def _chunk_rng(seed: int, point: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(point, chunk)))


def simulate_frame(
    config: SimConfig,
    precoder: Precoder,
    rng: np.random.Generator,
    modulation: ModulationParams | None = None,
    frames: int = 1,
) -> tuple[int, int]:
    """Send ``frames`` frames through the link; returns ``(bit_errors, bits)``.

    ``modulation`` supplies the noise variance and equaliser kind and
    defaults to ``config.modulation``.
    """
    modulation = modulation or config.modulation
    w = precoder.assembled_w
    if w.shape[0] != config.frame.mn:
        raise ConfigError(f"precoder dimension {w.shape[0]} does not match frame MN={config.frame.mn}")
    return _Link(config.channel(), w, modulation).run(rng, frames)


def _frames_for(config: SimConfig, ber: float) -> int:
    if config.frames_per_point is not None:
        return config.frames_per_point
    if not ber > 0:
        return config.max_frames
    return int(min(config.max_frames, max(1, math.ceil(TARGET_ERRORS / (ber * config.bits_per_frame)))))


def monte_carlo(config: SimConfig, link: _Link, point: int, frames: int) -> tuple[int, int]:
    errors = bits = 0
    for chunk, start in enumerate(range(0, frames, CHUNK_FRAMES)):
        e, b = link.run(_chunk_rng(config.rng_seed, point, chunk), min(CHUNK_FRAMES, frames - start))
        errors += e
        bits += b
    return errors, bits


def _solver(config: SimConfig):
    eigen_cache = {}

    @lru_cache(maxsize=None)
    def solve(snr_db: float, threshold: float, scheme: str):
        problem = config.problem_at(snr_db, threshold, scheme)
        key = problem.sensing.sense_path
        if key not in eigen_cache:
            eigen_cache[key] = sensing_eigen(problem.sensing, config.frame)
        eigen = eigen_cache[key]
        if scheme_constrained(scheme):
            return problem, solve_dual(problem, eigen, config.solver)
        return problem, solve_unconstrained(problem, eigen, config.solver.validity)

    return solve


def _failed(snr_db, threshold, scheme, lam=math.nan, mu=math.nan) -> SweepRecord:
    nan = math.nan
    return SweepRecord(snr_db, threshold, scheme, nan, nan, nan, nan, 0, 0, lam, mu, False)


def _evaluate(config: SimConfig, solve, channel: DdChannel, snr_db: float, threshold: float, scheme: str, point: int):
    try:
        problem, solution = solve(snr_db, threshold, scheme)
    except InfeasibleError as exc:
        log.warning("snr=%.2f dB threshold=%.3e %s: %s", snr_db, threshold, scheme, exc)
        return _failed(snr_db, threshold, scheme)
    except NonConvergenceError as exc:
        log.warning("snr=%.2f dB threshold=%.3e %s: %s", snr_db, threshold, scheme, exc)
        return _failed(snr_db, threshold, scheme, exc.state.lam, exc.state.mu)
    w = solution.precoder.assembled_w
    mod = problem.modulation
    ber = analytic_ber(channel, w, mod)
    try:
        lb = ber_lower_bound(channel, w, mod, config.solver.validity).value
    except BoundDomainError:
        lb = math.nan
    crb = crb_doppler(problem.sensing, config.frame, w)
    frames = _frames_for(config, ber)
    errors, bits = monte_carlo(config, _Link(channel, w, mod), point, frames)
    log.info("snr=%.2f dB threshold=%.3e %s: ber_mc=%.3e (%d/%d) ber=%.3e", snr_db, threshold, scheme, errors / bits, errors, bits, ber)
    return SweepRecord(
        float(snr_db), float(threshold), scheme, errors / bits, ber, lb, crb, bits, errors,
        solution.state.lam, solution.state.mu, solution.state.converged,
    )


def run_snr_sweep(config: SimConfig) -> list[SweepRecord]:
    """One record per SNR point for ``config.scheme`` at ``config.crb_threshold``."""
    solve = _solver(config)
    channel = config.channel()
    return [
        _evaluate(config, solve, channel, float(snr), config.crb_threshold, config.scheme, i)
        for i, snr in enumerate(config.snr_grid_db)
    ]


def run_crb_sweep(config: SimConfig) -> list[SweepRecord]:
    """One record per (SNR, threshold) pair of ``crb_snr_db`` x ``crb_threshold_grid``."""
    solve = _solver(config)
    channel = config.channel()
    records = []
    for i, snr in enumerate(config.crb_snr_db):
        for threshold in config.crb_threshold_grid:
            records.append(_evaluate(config, solve, channel, float(snr), float(threshold), config.scheme, i))
    return records


def run_schemes(config: SimConfig, sweep) -> list[SweepRecord]:
    """Run ``sweep`` for every scheme in ``config.schemes``."""
    records = []
    for scheme in config.schemes:
        records.extend(sweep(replace(config, scheme=scheme)))
    return records
