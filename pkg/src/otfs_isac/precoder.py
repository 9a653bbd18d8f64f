"""CRB-constrained, BER-minimising precoder ``W = U diag(sqrt(gamma)) V``.

With a LoS communication link the BER lower bound depends on the power
allocation ``gamma`` only through ``sum_q 1 / (kappa*sigma_c^2 + |h_c|^2 gamma_q)``.
``U`` diagonalises the sensing Gram matrix, ``V`` equalises the per-symbol
SINRs, and ``gamma`` solves the convex allocation problem

    min  sum_q 1 / (kappa*sigma_c^2 + |h_c|^2 gamma_q)
    s.t. sum_q gamma_q <= P0,  sum_q gamma_q eig_q >= sigma_s^2 / crb_threshold,
         gamma >= 0

through its Lagrange dual. Internally the dual is iterated in scaled units
(``gamma = P0 x``, ``eig = eig_max s``) so that both gradients are relative
constraint residuals.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .comms import ModulationParams
from .dd_core import dft_matrix
from .errors import (
    DualDomainError,
    InfeasibleError,
    LowerBoundUnreachableWarning,
    NonConvergenceError,
)
from .sensing import SensingEigen, SensingSetup, crb_feasibility, feasibility_floor


@dataclass(frozen=True)
class DesignProblem:
    channel_gain: complex
    power_budget: float
    modulation: ModulationParams
    sensing: SensingSetup

    def __post_init__(self):
        object.__setattr__(self, "channel_gain", complex(self.channel_gain))
        if not self.power_budget > 0:
            raise ValueError(f"power_budget must be positive, got {self.power_budget!r}")
        if abs(self.channel_gain) == 0:
            raise ValueError("communication channel gain must be non-zero")

    @property
    def comm_noise_var(self) -> float:
        return self.modulation.noise_var

    @property
    def kappa(self) -> int:
        return self.modulation.kappa

    @property
    def abs_gain(self) -> float:
        return abs(self.channel_gain)


@dataclass(frozen=True)
class Precoder:
    u: np.ndarray
    gamma: np.ndarray
    v: np.ndarray
    assembled_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        gamma = np.asarray(self.gamma, dtype=float)
        if np.any(gamma < 0):
            raise ValueError("gamma entries must be non-negative")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "assembled_w", (self.u * np.sqrt(gamma)) @ self.v)

    @property
    def power(self) -> float:
        return float(np.sum(self.gamma))


@dataclass(frozen=True)
class DualState:
    lam: float
    mu: float = 0.0
    step_lambda: float = 1.0
    step_mu: float = 1.0
    iteration: int = 0
    grad_lambda: float = float("nan")
    grad_mu: float = float("nan")
    converged: bool = False


class TraceEntry(NamedTuple):
    iteration: int
    lam: float
    mu: float
    dual_value: float
    grad_lambda: float
    grad_mu: float


class DualSolution(NamedTuple):
    precoder: Precoder
    state: DualState
    trace: list


@dataclass(frozen=True)
class SolverOptions:
    """Dual ascent settings.

    ``tol`` is the stopping threshold on both dual gradients, measured as
    relative residuals (power over ``P0``, sensing over ``P0 * eig_max``).
    When ``polish`` is set the same iteration continues past ``tol`` down to
    ``polish_tol`` so that the returned precoder meets both constraints
    tightly. ``step_rule`` is ``"newton"`` (curvature-scaled steps with
    Armijo backtracking) or ``"diminishing"`` (``step / sqrt(r)`` gradient
    steps, backtracking only out of the dual domain).
    """

    tol: float = 1e-2
    max_iter: int = 100_000
    step: float = 1.0
    step_rule: str = "newton"
    polish: bool = True
    polish_tol: float = 1e-11
    validity: str = "corrected"


# -- scaled dual ----------------------------------------------------------


class _Scaled:
    """The allocation problem in units of ``P0`` and ``eig_max``."""

    def __init__(self, problem: DesignProblem, eigen: SensingEigen):
        self.problem = problem
        self.n = eigen.eigvals.size
        h2 = problem.abs_gain**2
        p0 = problem.power_budget
        self.eig_max = float(np.max(eigen.eigvals)) if eigen.eigvals.size else 0.0
        self.s = eigen.eigvals / self.eig_max if self.eig_max > 0 else np.zeros(self.n)
        self.a = problem.kappa * problem.comm_noise_var / (h2 * p0)
        target = problem.sensing.effective_threshold
        self.t = target / (p0 * self.eig_max) if self.eig_max > 0 else (0.0 if target == 0 else math.inf)
        self.lam_scale = h2 * p0**2
        self.mu_scale = h2 * p0**2 * self.eig_max
        self.d_scale = h2 * p0

    def to_physical(self, lam: float, mu: float) -> tuple[float, float]:
        return lam / self.lam_scale, (mu / self.mu_scale if self.mu_scale > 0 else 0.0)

    def from_physical(self, lam: float, mu: float) -> tuple[float, float]:
        return lam * self.lam_scale, mu * self.mu_scale

    def alloc(self, lam: float, mu: float) -> np.ndarray:
        c = lam - mu * self.s
        if np.any(c <= 0):
            raise DualDomainError(f"lambda - mu * eig must be positive (min {np.min(c):.3e})")
        return np.maximum(1.0 / np.sqrt(c) - self.a, 0.0)

    def value(self, lam: float, mu: float) -> float:
        x = self.alloc(lam, mu)
        return float(np.sum(1.0 / (self.a + x)) + lam * (np.sum(x) - 1) - mu * (x @ self.s - self.t))

    def grad(self, lam: float, mu: float) -> np.ndarray:
        x = self.alloc(lam, mu)
        return np.array([np.sum(x) - 1.0, self.t - x @ self.s])

    def hess(self, lam: float, mu: float) -> np.ndarray:
        c = lam - mu * self.s
        active = 1.0 / np.sqrt(c) > self.a
        d = np.where(active, -0.5 * c**-1.5, 0.0)
        off = -np.sum(self.s * d)
        return np.array([[np.sum(d), off], [off, np.sum(self.s**2 * d)]])

    def uniform_lambda(self) -> float:
        return 1.0 / (self.a + 1.0 / self.n) ** 2


def _dual_setup(problem: DesignProblem, eigen: SensingEigen) -> _Scaled:
    if eigen.eigvals.size != eigen.eigvecs.shape[0]:
        raise ValueError("eigen decomposition is inconsistent")
    return _Scaled(problem, eigen)


def gamma_from_duals(problem: DesignProblem, eigen: SensingEigen, state: DualState) -> np.ndarray:
    """Stationary allocation of the Lagrangian for fixed ``(lambda, mu)``.

    ``gamma_q = [1 / (|h_c| sqrt(lambda - mu eig_q)) - kappa sigma_c^2 / |h_c|^2]^+``.
    The clamp makes this the exact minimiser over ``gamma >= 0``.
    """
    c = state.lam - state.mu * np.asarray(eigen.eigvals)
    if np.any(c <= 0):
        raise DualDomainError(f"lambda - mu * eig must be positive (min {np.min(c):.3e})")
    g = problem.abs_gain
    return np.maximum(1.0 / (g * np.sqrt(c)) - problem.kappa * problem.comm_noise_var / g**2, 0.0)


def primal_objective(problem: DesignProblem, gamma) -> float:
    """``tr((kappa sigma_c^2 I + |h_c|^2 Gamma)^{-1})``."""
    gamma = np.asarray(gamma, dtype=float)
    denom = problem.kappa * problem.comm_noise_var + problem.abs_gain**2 * gamma
    with np.errstate(divide="ignore"):
        return float(np.sum(1.0 / denom))


def dual_value(problem: DesignProblem, eigen: SensingEigen, state: DualState) -> float:
    """Dual function ``D(lambda, mu)``, the Lagrangian at its minimiser."""
    gamma = gamma_from_duals(problem, eigen, state)
    p0 = problem.power_budget
    target = problem.sensing.effective_threshold
    return (
        primal_objective(problem, gamma)
        + state.lam * (np.sum(gamma) - p0)
        - state.mu * (gamma @ eigen.eigvals - target)
    )


def dual_gradient(problem: DesignProblem, eigen: SensingEigen, state: DualState) -> tuple[float, float]:
    """``(dD/dlambda, dD/dmu)``: the constraint residuals at the inner minimiser."""
    gamma = gamma_from_duals(problem, eigen, state)
    return (
        float(np.sum(gamma) - problem.power_budget),
        float(problem.sensing.effective_threshold - gamma @ eigen.eigvals),
    )


def choose_u(eigen: SensingEigen) -> np.ndarray:
    """``U = E_s``, which makes ``U^H Hdot^H Hdot U`` diagonal."""
    return np.array(eigen.eigvecs)


def choose_v(problem: DesignProblem, gamma, validity: str = "corrected") -> np.ndarray:
    """``V = Psi F_MN`` with ``Psi = I`` because the inner matrix is diagonal.

    Conjugating any diagonal matrix by the DFT spreads its trace evenly over
    the diagonal, so every symbol sees the same SINR.
    """
    gamma = np.asarray(gamma, dtype=float)
    n = gamma.size
    sigma2 = problem.comm_noise_var
    phi = primal_objective(problem, gamma)
    if validity == "corrected":
        ok = sigma2 * phi <= n * problem.modulation.eta
    else:
        ok = phi <= n * problem.modulation.eta * sigma2
    if not ok:
        warnings.warn(
            "BER lower bound is not attainable at this operating point "
            f"(sigma^2 tr/MN = {sigma2 * phi / n:.3e} > eta = {problem.modulation.eta:.3e})",
            LowerBoundUnreachableWarning,
            stacklevel=2,
        )
    return dft_matrix(n)


def assemble(problem: DesignProblem, eigen: SensingEigen, gamma, validity: str = "corrected") -> Precoder:
    return Precoder(choose_u(eigen), gamma, choose_v(problem, gamma, validity))


# -- solver -------------------------------------------------------------------


def _ascent_step(sc: _Scaled, z: np.ndarray, g: np.ndarray, r: int, opts: SolverOptions, base_steps):
    """One projected ascent update.

    Returns ``(z_new, steps)`` in scaled units, where ``steps`` are the
    per-coordinate step sizes actually applied, or ``None`` when no step
    of usable length stays in the dual domain.
    """
    if opts.step_rule == "diminishing":
        nominal = np.asarray(base_steps) / math.sqrt(r)
        direction = nominal * g
        armijo = False
    else:
        h = sc.hess(*z)
        nominal = opts.step / np.maximum(np.abs(np.diag(h)), 1e-300)
        try:
            direction = -np.linalg.solve(h, g)
            ok = np.linalg.det(h) > 0 and h[0, 0] < 0 and np.all(np.isfinite(direction))
        except np.linalg.LinAlgError:
            ok = False
        if not ok:
            direction = nominal * g
        else:
            direction = opts.step * direction
        armijo = True
    d0 = sc.value(*z) if armijo else None
    eta = 1.0
    while eta > 1e-30:
        zn = np.maximum(z + eta * direction, 0.0)
        if zn[0] - zn[1] > 0:
            if not armijo:
                return zn, eta * nominal
            try:
                if sc.value(*zn) >= d0 + 1e-4 * float(g @ (zn - z)):
                    return zn, eta * nominal
            except DualDomainError:
                pass
        eta /= 2
    return None


def _curvature_steps(sc: _Scaled, z: np.ndarray, step: float) -> np.ndarray:
    h = sc.hess(*z)
    return step / np.maximum(np.abs(np.diag(h)), 1e-300)


def solve_dual(problem: DesignProblem, eigen: SensingEigen, options: SolverOptions | None = None) -> DualSolution:
    """Maximise the dual by projected ascent on ``(lambda, mu)``.

    Starts from the ``mu = 0`` closed form; if uniform power already meets the
    CRB, that is the optimum and is returned directly.

    Raises
    ------
    InfeasibleError
        If the CRB threshold exceeds what the whole budget on the best
        sensing mode can deliver.
    NonConvergenceError
        If ``max_iter`` iterations pass without meeting ``tol``.
    """
    opts = options or SolverOptions()
    sc = _dual_setup(problem, eigen)
    n = sc.n
    p0 = problem.power_budget
    lam0 = sc.uniform_lambda()
    uniform = np.full(n, p0 / n)
    trace: list[TraceEntry] = []

    def record(r, z, g):
        lam, mu = sc.to_physical(*z)
        trace.append(
            TraceEntry(
                r, float(lam), float(mu), sc.value(*z) / sc.d_scale, float(g[0] * p0), float(g[1] * p0 * sc.eig_max)
            )
        )

    if sc.t <= float(np.sum(sc.s)) / n:
        lam, _ = sc.to_physical(lam0, 0.0)
        g = sc.grad(lam0, 0.0)
        record(0, np.array([lam0, 0.0]), g)
        state = DualState(float(lam), 0.0, 0.0, 0.0, 0, float(g[0] * p0), float(g[1] * p0 * sc.eig_max), True)
        return DualSolution(assemble(problem, eigen, uniform, opts.validity), state, trace)

    if not crb_feasibility(problem.sensing, eigen, p0):
        floor = feasibility_floor(problem.sensing, eigen, p0) if sc.eig_max > 0 else math.inf
        raise InfeasibleError(
            f"CRB threshold {problem.sensing.crb_threshold:.3e} is below the feasibility "
            f"floor {floor:.3e} for power budget {p0:.3e}",
            bound=floor,
        )

    z = np.array([lam0, 0.0])
    base_steps = _curvature_steps(sc, z, opts.step)
    steps = base_steps
    converged = False
    stop_iter = None
    g = sc.grad(*z)
    r = 0
    best = None
    stalled = 0
    for r in range(1, opts.max_iter + 1):
        g = sc.grad(*z)
        record(r - 1, z, g)
        err = float(np.max(np.abs(g)))
        if not converged and err <= opts.tol:
            converged = True
            stop_iter = r - 1
            if not opts.polish:
                break
        if converged:
            if best is None or err < 0.5 * best[0]:
                stalled = 0
            else:
                # polishing has reached the floating-point floor
                stalled += 1
            if best is None or err < best[0]:
                best = (err, z, g, steps)
            if err <= opts.polish_tol or stalled >= 10:
                break
        out = _ascent_step(sc, z, g, r, opts, base_steps)
        if out is None:
            # no further ascent possible at machine precision
            break
        z, steps = out
    else:
        g = sc.grad(*z)
        record(opts.max_iter, z, g)
        if np.max(np.abs(g)) <= opts.tol:
            converged = True
            stop_iter = opts.max_iter
    if best is not None and best[0] < float(np.max(np.abs(g))):
        _, z, g, steps = best

    lam, mu = sc.to_physical(*z)
    state = DualState(
        float(lam),
        float(mu),
        float(steps[0] / sc.lam_scale),
        float(steps[1] / sc.mu_scale),
        stop_iter if stop_iter is not None else r,
        float(g[0] * p0),
        float(g[1] * p0 * sc.eig_max),
        converged,
    )
    if not converged:
        raise NonConvergenceError(
            f"dual ascent did not reach tol={opts.tol} in {opts.max_iter} iterations", trace, state
        )
    gamma = p0 * sc.alloc(*z)
    return DualSolution(assemble(problem, eigen, gamma, opts.validity), state, trace)


def solve_unconstrained(problem: DesignProblem, eigen: SensingEigen, validity: str = "corrected") -> DualSolution:
    """Allocation that ignores the CRB (the ZF-WC / MMSE-WC benchmarks)."""
    sc = _dual_setup(problem, eigen)
    lam, _ = sc.to_physical(sc.uniform_lambda(), 0.0)
    gamma = np.full(sc.n, problem.power_budget / sc.n)
    state = DualState(float(lam), 0.0, 0.0, 0.0, 0, 0.0, float("nan"), True)
    return DualSolution(assemble(problem, eigen, gamma, validity), state, [])


# -- reference solver --------------------------------------------------------------


def brute_force_reference(
    problem: DesignProblem,
    eigen: SensingEigen,
    grid_resolution: int = 41,
    max_levels: int = 200,
) -> np.ndarray:
    """Refined grid search for the optimal allocation (validation oracle).

    The objective decreases in every ``gamma_q``, so the budget is exhausted
    and the search runs over ``MN - 1`` free coordinates of the simplex. Each
    level evaluates a ``grid_resolution``-point tensor grid around the best
    feasible point so far, then halves the box.
    """
    n = eigen.eigvals.size
    if n > 8:
        raise ValueError(f"brute_force_reference supports MN <= 8, got {n}")
    if grid_resolution < 6:
        raise ValueError("grid_resolution must be at least 6")
    p0 = problem.power_budget
    eig = np.asarray(eigen.eigvals, dtype=float)
    target = problem.sensing.effective_threshold
    if p0 * eig.max(initial=0.0) < target:
        raise InfeasibleError("CRB threshold is not reachable with the power budget")
    if n == 1:
        return np.array([p0])

    h2 = problem.abs_gain**2
    noise = problem.kappa * problem.comm_noise_var

    def objective(x):
        with np.errstate(divide="ignore"):
            return np.sum(1.0 / (noise + h2 * p0 * x), axis=-1)

    def best_on(axes):
        best_val, best_pt = math.inf, None
        rest = np.array(list(itertools.product(*axes[1:]))) if len(axes) > 1 else np.empty((1, 0))
        # chunk the leading axis to bound memory
        for first in axes[0]:
            free = np.column_stack([np.full(len(rest), first), rest])
            last = 1.0 - free.sum(axis=1)
            x = np.column_stack([free, last])
            ok = (last >= 0) & (p0 * (x @ eig) >= target * (1 - 1e-15))
            if not np.any(ok):
                continue
            vals = np.where(ok, objective(x), math.inf)
            i = int(np.argmin(vals))
            if vals[i] < best_val:
                best_val, best_pt = vals[i], x[i]
        return best_val, best_pt

    center = np.full(n - 1, 0.5)
    half = 0.5
    best_val, best_pt = math.inf, None
    for _ in range(max_levels):
        axes = [np.unique(np.clip(np.linspace(c - half, c + half, grid_resolution), 0.0, 1.0)) for c in center]
        val, pt = best_on(axes)
        if pt is not None and val <= best_val:
            best_val, best_pt = val, pt
        if best_pt is None:
            raise InfeasibleError("no feasible grid point found")
        center = best_pt[:-1]
        half *= 0.5
        if half < 1e-13:
            break
    return p0 * best_pt
