"""Doppler CRB and the sensing eigenstructure used by the precoder design."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dd_core import FrameParams, Path, _kron_dft_left, doppler_derivative_diag, kron_dft, sensing_derivative_channel
from .errors import InfiniteCrbError


@dataclass(frozen=True)
class SensingSetup:
    """LoS sensing path, echo noise variance and the required CRB.

    ``effective_threshold`` is ``noise_var / crb_threshold``; the CRB
    constraint is equivalent to ``tr(Gamma Z_s) >= effective_threshold``.
    """

    sense_path: Path
    noise_var: float
    crb_threshold: float
    effective_threshold: float = field(init=False)

    def __post_init__(self):
        if not self.noise_var > 0:
            raise ValueError(f"sensing noise_var must be positive, got {self.noise_var!r}")
        if not self.crb_threshold > 0:
            raise ValueError(f"crb_threshold must be positive, got {self.crb_threshold!r}")
        object.__setattr__(self, "effective_threshold", self.noise_var / self.crb_threshold)


@dataclass(frozen=True)
class SensingEigen:
    """Eigendecomposition ``E_s diag(eigvals) E_s^H`` of ``Hdot^H Hdot``.

    Eigenvalues are sorted in descending order.
    """

    eigvecs: np.ndarray
    eigvals: np.ndarray

    def gram(self) -> np.ndarray:
        return (self.eigvecs * self.eigvals) @ self.eigvecs.conj().T


def sensing_eigen(setup: SensingSetup, frame: FrameParams) -> SensingEigen:
    """Analytic eigenstructure of ``Hdot^H Hdot``.

    The Doppler derivative only rescales the frame by ``q``, so the
    eigenvectors are the columns of ``F_N kron I_M`` and the eigenvalues are
    ``|h_s|^2 (2 pi T / M)^2 q^2``, whatever the path's taps.
    """
    eigvals = abs(setup.sense_path.gain) ** 2 * np.abs(doppler_derivative_diag(frame)) ** 2
    order = np.argsort(-eigvals, kind="stable")
    vecs = kron_dft(frame)[:, order]
    vals = eigvals[order]
    vecs.setflags(write=False)
    vals.setflags(write=False)
    return SensingEigen(vecs, vals)


def sensing_information(setup: SensingSetup, frame: FrameParams, precoder_w, method: str = "analytic") -> float:
    """``tr(Hdot W W^H Hdot^H)``.

    ``method="analytic"`` uses the diagonal structure of ``Hdot^H Hdot``;
    ``method="dense"`` builds ``Hdot`` explicitly.
    """
    w = np.asarray(precoder_w, dtype=complex)
    if method == "dense":
        hdot = sensing_derivative_channel(frame, setup.sense_path)
        return float(np.linalg.norm(hdot @ w) ** 2)
    if method != "analytic":
        raise ValueError(f"method must be 'analytic' or 'dense', got {method!r}")
    # (F^H kron I) W, then weight rows by |h_s|^2 |d_q|^2
    rows = _kron_dft_left(frame, w.conj()).conj()
    weights = abs(setup.sense_path.gain) ** 2 * np.abs(doppler_derivative_diag(frame)) ** 2
    return float(np.sum(weights * np.sum(np.abs(rows) ** 2, axis=1)))


def crb_doppler(setup: SensingSetup, frame: FrameParams, precoder_w, method: str = "analytic") -> float:
    """CRB on the Doppler shift, ``sigma_s^2 / tr(Hdot W W^H Hdot^H)``.

    Follows the single-parameter form without the factor 2 that a
    complex-Gaussian Fisher information would carry.
    """
    info = sensing_information(setup, frame, precoder_w, method)
    if not info > 0:
        raise InfiniteCrbError("precoder carries no Doppler information (zero Fisher information)")
    return setup.noise_var / info


def crb_feasibility(setup: SensingSetup, eigen: SensingEigen, power_budget: float) -> bool:
    """Whether the CRB threshold is reachable with ``power_budget``.

    Over ``{Gamma >= 0, tr(Gamma) <= P0}`` the largest ``tr(Gamma Lambda_s)``
    is ``P0 * max(eigvals)``.
    """
    return power_budget * float(np.max(eigen.eigvals)) >= setup.effective_threshold


def feasibility_floor(setup: SensingSetup, eigen: SensingEigen, power_budget: float) -> float:
    """Smallest achievable CRB for the given power, ``sigma_s^2 / (P0 max eig)``."""
    return setup.noise_var / (power_budget * float(np.max(eigen.eigvals)))
