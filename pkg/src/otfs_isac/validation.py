"""Self-check suite behind the ``validate`` command.

Each check compares a fast or structured computation against an
independent dense or brute-force route at MN = 4.
"""

from __future__ import annotations

import warnings
from typing import NamedTuple

import numpy as np
from scipy.optimize import linear_sum_assignment

from .comms import ModulationParams, analytic_ber, ber_lower_bound, per_symbol_sinr
from .dd_core import FrameParams, Path, dd_channel, dft_matrix, sensing_derivative_channel, time_channel
from .errors import LowerBoundUnreachableWarning
from .precoder import (
    DesignProblem,
    DualState,
    SolverOptions,
    brute_force_reference,
    dual_gradient,
    dual_value,
    primal_objective,
    solve_dual,
)
from .sensing import SensingSetup, crb_doppler, sensing_eigen


class Check(NamedTuple):
    name: str
    passed: bool
    detail: str


def spectrum_distance(a, b) -> float:
    """Largest gap in an optimal one-to-one matching of two eigenvalue sets."""
    cost = np.abs(np.subtract.outer(np.asarray(a), np.asarray(b)))
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


def _random_paths(rng, count=3, l_max=2, k_max=1):
    return [
        Path(complex(*rng.standard_normal(2)) / np.sqrt(2), int(rng.integers(0, l_max + 1)), int(rng.integers(-k_max, k_max + 1)))
        for _ in range(count)
    ]


def _check_dd_structure(rng, frame):
    paths = _random_paths(rng)
    kron = np.kron(dft_matrix(frame.n), np.eye(frame.m))
    h_t = time_channel(frame, paths)
    explicit = kron @ h_t @ kron.conj().T
    h_dd = dd_channel(frame, paths).matrix
    err = float(np.max(np.abs(h_dd - explicit)))
    gap = spectrum_distance(np.linalg.eigvals(h_dd), np.linalg.eigvals(h_t))
    return Check("dd_channel structure", err < 1e-10 and gap < 1e-9, f"max|diff|={err:.2e}, spectrum gap={gap:.2e}")


def _check_sensing(frame):
    setup = SensingSetup(Path(0.7 - 0.2j, 1, -1), 1e-3, 1.0)
    hdot = sensing_derivative_channel(frame, setup.sense_path)
    dense = np.sort(np.linalg.eigvalsh(hdot.conj().T @ hdot))[::-1]
    analytic = sensing_eigen(setup, frame).eigvals
    err = float(np.max(np.abs(dense - analytic)) / np.max(analytic))
    return Check("sensing eigenvalues", err < 1e-9, f"relative error={err:.2e}")


def _check_crb_routes(rng, frame):
    setup = SensingSetup(Path(1.3, 1, 1), 2e-3, 1.0)
    w = rng.standard_normal((frame.mn, frame.mn)) + 1j * rng.standard_normal((frame.mn, frame.mn))
    a = crb_doppler(setup, frame, w, "analytic")
    b = crb_doppler(setup, frame, w, "dense")
    return Check("CRB analytic vs dense", abs(a - b) <= 1e-9 * b, f"{a:.6e} vs {b:.6e}")


def _check_sinr(rng, frame):
    n = frame.mn
    h = dd_channel(frame, _random_paths(rng)).matrix
    w = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    worst = 0.0
    for kappa in (0, 1):
        mod = ModulationParams(16, kappa, 0.3)
        inv = np.linalg.inv(kappa * np.eye(n) + w.conj().T @ h.conj().T @ h @ w / mod.noise_var)
        ref = 1 / np.real(np.diag(inv)) - kappa
        worst = max(worst, float(np.max(np.abs(per_symbol_sinr(h, w, mod) - ref) / ref)))
    return Check("per-symbol SINR vs dense inverse", worst < 1e-9, f"relative error={worst:.2e}")


def _check_jensen(rng, frame):
    n = frame.mn
    h = dd_channel(frame, [Path(1.0, 1, 1)]).matrix
    mod = ModulationParams(16, 0, 0.01)
    gamma = rng.uniform(0.5, 2.0, n)
    w_plain = np.diag(np.sqrt(gamma))
    w_eq = w_plain @ dft_matrix(n)
    lb = ber_lower_bound(h, w_plain, mod)
    ber = analytic_ber(h, w_plain, mod)
    ber_eq = analytic_ber(h, w_eq, mod)
    ok = lb.valid and lb.value <= ber and abs(ber_eq - lb.value) <= 1e-10 * lb.value
    return Check("Jensen lower bound", ok, f"lb={lb.value:.4e} ber={ber:.4e} ber(V=F)={ber_eq:.4e}")


def _dual_problem(frame, kappa):
    setup0 = SensingSetup(Path(1.0, 0, 0), 1e-9, 1.0)
    eigen = sensing_eigen(setup0, frame)
    p0 = 4.0
    uniform = p0 / frame.mn * eigen.eigvals.sum()
    best = p0 * eigen.eigvals.max()
    threshold = setup0.noise_var / (0.6 * best + 0.4 * uniform)
    setup = SensingSetup(setup0.sense_path, setup0.noise_var, threshold)
    return DesignProblem(1.0, p0, ModulationParams(16, kappa, 0.05), setup), eigen


def _check_dual_vs_oracle(frame):
    worst = 0.0
    for kappa in (0, 1):
        problem, eigen = _dual_problem(frame, kappa)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", LowerBoundUnreachableWarning)
            sol = solve_dual(problem, eigen, SolverOptions())
        ref = brute_force_reference(problem, eigen)
        a = primal_objective(problem, sol.precoder.gamma)
        b = primal_objective(problem, ref)
        worst = max(worst, abs(a - b) / b)
    return Check("dual solver vs grid oracle", worst < 1e-3, f"relative objective gap={worst:.2e}")


def _check_gradient(frame):
    problem, eigen = _dual_problem(frame, 1)
    lam = 1.3 / problem.abs_gain**2 / (problem.power_budget / frame.mn) ** 2
    mu = 0.2 * lam / eigen.eigvals.max()
    state = DualState(lam, mu)
    g = dual_gradient(problem, eigen, state)
    worst = 0.0
    for i, (value, step) in enumerate(((lam, 1e-6 * lam), (mu, 1e-6 * mu))):
        plus = DualState(lam + step, mu) if i == 0 else DualState(lam, mu + step)
        minus = DualState(lam - step, mu) if i == 0 else DualState(lam, mu - step)
        fd = (dual_value(problem, eigen, plus) - dual_value(problem, eigen, minus)) / (2 * step)
        worst = max(worst, abs(fd - g[i]) / abs(g[i]))
    return Check("dual gradient vs finite differences", worst < 1e-5, f"relative error={worst:.2e}")


def run_validation(seed: int = 0) -> list[Check]:
    rng = np.random.default_rng(seed)
    frame = FrameParams(2, 2)
    return [
        _check_dd_structure(rng, frame),
        _check_sensing(frame),
        _check_crb_routes(rng, frame),
        _check_sinr(rng, frame),
        _check_jensen(rng, frame),
        _check_dual_vs_oracle(frame),
        _check_gradient(frame),
    ]
