"""Command-line entry point.

    otfs-isac {solve,sweep-snr,sweep-crb,validate} --output PATH [--config PATH]
              [--set section.key=value]... [--seed N]

Results go to ``--output``; progress and diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FilePath

import numpy as np

from . import csvio
from .comms import analytic_ber, ber_lower_bound
from .config import parse_config, with_seed
from .errors import BoundDomainError, ConfigError, InfeasibleError, LowerBoundUnreachableWarning, NonConvergenceError
from .precoder import primal_objective, solve_dual
from .sensing import crb_doppler, feasibility_floor, sensing_eigen
from .sim import SimConfig, run_crb_sweep, run_schemes, run_snr_sweep
from .validation import run_validation

log = logging.getLogger("otfs_isac")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_NONCONVERGENCE = 4
EXIT_IO = 5
EXIT_VALIDATION = 6

COMMANDS = ("solve", "sweep-snr", "sweep-crb", "validate")


@dataclass
class RunManifest:
    command: str
    output_path: str
    config_path: str | None = None
    overrides: list = field(default_factory=list)
    seed: int | None = None


def _prepare_output(path: str) -> FilePath:
    out = FilePath(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def solve_report(config: SimConfig) -> str:
    """Human-readable summary of one precoder solve at ``config.snr_db``."""
    problem = config.problem_at(config.snr_db)
    eigen = sensing_eigen(problem.sensing, config.frame)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", LowerBoundUnreachableWarning)
        solution = solve_dual(problem, eigen, config.solver)
    w = solution.precoder.assembled_w
    channel = config.channel()
    mod = problem.modulation
    ber = analytic_ber(channel, w, mod)
    try:
        lb = csvio.format_float(ber_lower_bound(channel, w, mod, config.solver.validity).value)
    except BoundDomainError:
        lb = "nan"
    state = solution.state
    gamma = solution.precoder.gamma
    lines = [
        f"scheme            {config.scheme}",
        f"frame             M={config.frame.m} N={config.frame.n} df={config.frame.subcarrier_spacing:g} Hz fc={config.frame.carrier_freq:g} Hz",
        f"snr_db            {config.snr_db:g}",
        f"comm_noise_var    {csvio.format_float(problem.comm_noise_var)}",
        f"sense_noise_var   {csvio.format_float(problem.sensing.noise_var)}",
        f"power_budget      {csvio.format_float(problem.power_budget)}",
        f"crb_threshold     {csvio.format_float(problem.sensing.crb_threshold)}",
        f"crb_floor         {csvio.format_float(feasibility_floor(problem.sensing, eigen, problem.power_budget))}",
        f"lambda            {csvio.format_float(state.lam)}",
        f"mu                {csvio.format_float(state.mu)}",
        f"iterations        {state.iteration}",
        f"converged         {'true' if state.converged else 'false'}",
        f"grad_lambda       {csvio.format_float(state.grad_lambda)}",
        f"grad_mu           {csvio.format_float(state.grad_mu)}",
        f"power_used        {csvio.format_float(np.sum(gamma))}",
        f"objective         {csvio.format_float(primal_objective(problem, gamma))}",
        f"ber_analytic      {csvio.format_float(ber)}",
        f"ber_lower_bound   {lb}",
        f"crb_achieved      {csvio.format_float(crb_doppler(problem.sensing, config.frame, w))}",
    ]
    for warning in caught:
        lines.append(f"warning           {warning.message}")
    lines += ["", "mode,sensing_eig,gamma"]
    lines += [f"{q},{csvio.format_float(e)},{csvio.format_float(g)}" for q, (e, g) in enumerate(zip(eigen.eigvals, gamma))]
    return "\n".join(lines) + "\n"


def run(manifest: RunManifest) -> int:
    try:
        config = with_seed(parse_config(manifest.config_path, manifest.overrides), manifest.seed)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG

    try:
        if manifest.command == "solve":
            text = solve_report(config)
        elif manifest.command == "sweep-snr":
            text = csvio.dumps(run_schemes(config, run_snr_sweep))
        elif manifest.command == "sweep-crb":
            text = csvio.dumps(run_schemes(config, run_crb_sweep))
        elif manifest.command == "validate":
            checks = run_validation(config.rng_seed)
            text = "".join(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}\n" for c in checks)
            for c in checks:
                log.info("%s %s: %s", "PASS" if c.passed else "FAIL", c.name, c.detail)
        else:
            log.error("unknown command %r", manifest.command)
            return EXIT_CONFIG
    except InfeasibleError as exc:
        log.error("infeasible: %s", exc)
        return EXIT_INFEASIBLE
    except NonConvergenceError as exc:
        log.error("solver did not converge: %s", exc)
        return EXIT_NONCONVERGENCE

    try:
        _prepare_output(manifest.output_path).write_text(text, encoding="ascii")
    except OSError as exc:
        log.error("cannot write %s: %s", manifest.output_path, exc)
        return EXIT_IO
    if manifest.command == "validate" and not all(c.passed for c in checks):
        return EXIT_VALIDATION
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otfs-isac", description="Sensing-constrained OTFS precoder design and BER simulation.")
    parser.add_argument("command", choices=COMMANDS, help="solve one operating point, run a sweep, or run self-checks")
    parser.add_argument("--config", help="config file (defaults apply to anything it omits)")
    parser.add_argument("--output", required=True, help="result file (CSV for sweeps, text otherwise)")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config key; repeatable")
    parser.add_argument("--seed", type=int, help="overrides sweep.seed")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    logging.captureWarnings(True)
    return run(RunManifest(args.command, args.output, args.config, args.overrides, args.seed))


if __name__ == "__main__":
    sys.exit(main())
