import numpy as np
import pytest

from oracles import random_complex
from otfs_isac.dd_core import FrameParams, Path, sensing_derivative_channel
from otfs_isac.errors import InfiniteCrbError
from otfs_isac.sensing import (
    SensingSetup,
    crb_doppler,
    crb_feasibility,
    feasibility_floor,
    sensing_eigen,
    sensing_information,
)

T = 5e-4


def setup(gain=1.0, l=4, k=2, noise=1e-8, threshold=3e-7):
    return SensingSetup(Path(gain, l, k), noise, threshold)


class TestSetup:
    def test_effective_threshold(self):
        s = setup(noise=2e-8, threshold=4e-7)
        assert s.effective_threshold == pytest.approx(0.05, rel=1e-15)

    @pytest.mark.parametrize("noise,threshold", [(0, 1), (1, 0), (-1, 1)])
    def test_positive(self, noise, threshold):
        with pytest.raises(ValueError):
            SensingSetup(Path(1.0), noise, threshold)


class TestEigen:
    def test_analytic_values(self, frame8):
        e = sensing_eigen(setup(0.5 - 0.5j), frame8)
        q = np.arange(63, -1, -1)
        expected = 0.5 * (2 * np.pi * T / 8) ** 2 * q**2
        np.testing.assert_allclose(e.eigvals, expected, rtol=1e-12)
        assert e.eigvals[-1] == 0
        assert e.eigvals[0] == pytest.approx(0.5 * (2 * np.pi * T / 8) ** 2 * 63**2, rel=1e-12)
        assert np.all(np.diff(e.eigvals) < 0)

    def test_reconstruction_and_dense_spectrum(self, frame8):
        for l in range(5):
            for k in range(-2, 3):
                s = setup(1.2, l, k)
                e = sensing_eigen(s, frame8)
                hd = sensing_derivative_channel(frame8, s.sense_path)
                gram = hd.conj().T @ hd
                scale = e.eigvals[0]
                assert np.max(np.abs(e.gram() - gram)) < 1e-9 * scale
                dense = np.sort(np.linalg.eigvalsh(gram))[::-1]
                assert np.max(np.abs(dense - e.eigvals)) < 1e-9 * scale

    def test_eigvecs_unitary(self, frame8):
        v = sensing_eigen(setup(), frame8).eigvecs
        assert np.max(np.abs(v.conj().T @ v - np.eye(64))) < 1e-12

    def test_nonnegative_single_zero(self, frame8):
        vals = sensing_eigen(setup(), frame8).eigvals
        assert np.all(vals >= 0)
        assert np.sum(vals == 0) == 1

    def test_immutable(self, frame8):
        e = sensing_eigen(setup(), frame8)
        with pytest.raises(ValueError):
            e.eigvals[0] = 1.0


class TestCrb:
    def test_uniform_closed_form(self, frame8):
        s = setup(0.9, noise=3e-8)
        p0 = 64.0
        sum_q2 = 63 * 64 * 127 / 6
        expected = s.noise_var * 64 / (p0 * 0.81 * (2 * np.pi * T / 8) ** 2 * sum_q2)
        w = np.sqrt(p0 / 64) * np.eye(64)
        assert crb_doppler(s, frame8, w) == pytest.approx(expected, rel=1e-12)
        assert crb_doppler(s, frame8, w, "dense") == pytest.approx(expected, rel=1e-12)

    def test_doubling_power_halves(self, rng, frame8):
        s = setup()
        w = random_complex(rng, 64, 64)
        assert crb_doppler(s, frame8, np.sqrt(2) * w) == pytest.approx(crb_doppler(s, frame8, w) / 2, rel=1e-12)

    def test_dense_trace_oracle(self, rng, frame4):
        s = SensingSetup(Path(0.3 + 1j, 1, -1), 1e-3, 1.0)
        for _ in range(5):
            w = random_complex(rng, 4, 4)
            hd = sensing_derivative_channel(frame4, s.sense_path)
            expected = s.noise_var / np.real(np.trace(hd @ w @ w.conj().T @ hd.conj().T))
            assert crb_doppler(s, frame4, w) == pytest.approx(expected, rel=1e-9)
            assert crb_doppler(s, frame4, w, "dense") == pytest.approx(expected, rel=1e-9)

    def test_invariant_to_taps(self, rng, frame8):
        w = random_complex(rng, 64, 64)
        ref = crb_doppler(setup(1.0, 0, 0), frame8, w)
        for l in range(5):
            for k in range(-2, 3):
                assert crb_doppler(setup(1.0, l, k), frame8, w, "dense") == pytest.approx(ref, rel=1e-9)

    def test_null_space_precoder(self, frame8):
        # all power on the q = 0 mode carries no Doppler information
        e = sensing_eigen(setup(), frame8)
        w = np.outer(e.eigvecs[:, -1], e.eigvecs[:, -1].conj())
        with pytest.raises(InfiniteCrbError):
            crb_doppler(setup(), frame8, w)
        assert sensing_information(setup(), frame8, w) == pytest.approx(0, abs=1e-20)

    def test_bad_method(self, frame8):
        with pytest.raises(ValueError):
            sensing_information(setup(), frame8, np.eye(64), "magic")


class TestFeasibility:
    def test_boundaries(self, frame8):
        e = sensing_eigen(setup(), frame8)
        p0 = 64.0
        best = p0 * e.eigvals[0]
        noise = 1e-8
        assert crb_feasibility(SensingSetup(Path(1.0), noise, noise / best), e, p0)
        assert not crb_feasibility(SensingSetup(Path(1.0), noise, noise / (best * (1 + 1e-6))), e, p0)
        # huge threshold makes the effective threshold vanish
        assert crb_feasibility(SensingSetup(Path(1.0), noise, 1e300), e, p0)

    def test_floor(self, frame8):
        e = sensing_eigen(setup(), frame8)
        s = setup(noise=1e-8)
        floor = feasibility_floor(s, e, 64.0)
        assert floor == pytest.approx(1e-8 / (64 * (2 * np.pi * T / 8) ** 2 * 63**2), rel=1e-12)
        # all power on the best mode achieves it
        w = np.sqrt(64.0) * np.outer(e.eigvecs[:, 0], np.eye(64)[0])
        assert crb_doppler(s, frame8, w) == pytest.approx(floor, rel=1e-9)
