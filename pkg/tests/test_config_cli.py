import math
from pathlib import Path as FilePath

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from otfs_isac import csvio
from otfs_isac.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_NONCONVERGENCE, EXIT_OK, main
from otfs_isac.comms import MMSE
from otfs_isac.config import parse_config
from otfs_isac.errors import ConfigError
from otfs_isac.sim import SimConfig, SweepRecord

ROOT = FilePath(__file__).resolve().parent.parent


def write(tmp_path, text):
    p = tmp_path / "run.ini"
    p.write_text(text)
    return p


class TestParseConfig:
    def test_empty_file_is_default(self, tmp_path):
        config = parse_config(write(tmp_path, ""))
        d = SimConfig()
        assert config == d
        assert (config.frame.m, config.frame.n, config.modulation.mod_order) == (8, 8, 16)
        assert config.frame.subcarrier_spacing == 2e3 and config.frame.carrier_freq == 4e9
        assert config.crb_threshold == 3e-7

    def test_example_file_is_default(self):
        assert parse_config(ROOT / "configs" / "default.ini") == SimConfig()

    def test_override_4qam(self):
        config = parse_config(None, ["modulation.order=4"])
        assert config.modulation.mod_order == 4
        assert config.modulation.alpha == pytest.approx(0.5) and config.modulation.beta == pytest.approx(0.5)

    def test_override_after_file(self, tmp_path):
        config = parse_config(write(tmp_path, "[frame]\nm = 4\n"), ["frame.m=2", "modulation.equalizer=mmse"])
        assert config.frame.m == 2
        assert config.scheme == "proposed-mmse" and config.modulation.kappa == MMSE

    def test_comments_and_grids(self, tmp_path):
        text = "# header\n[sweep]\nsnr_db = 0:4:2  # inline\ncrb_thresholds = 1e-8, 2e-8\n[channel]\ngain = 0.6+0.8j\n"
        config = parse_config(write(tmp_path, text))
        assert config.snr_grid_db == (0.0, 2.0, 4.0)
        assert config.crb_threshold_grid == (1e-8, 2e-8)
        assert config.comm_path.gain == 0.6 + 0.8j

    def test_fractional_grid(self):
        assert parse_config(None, ["sweep.snr_db=0:1:0.25"]).snr_grid_db == (0.0, 0.25, 0.5, 0.75, 1.0)

    @pytest.mark.parametrize(
        "override,needle",
        [
            ("frame.m=0", "m"),
            ("frame.x=1", "frame.x"),
            ("modulation.order=8", "order"),
            ("modulation.equalizer=ml", "equalizer"),
            ("sensing.delay_tap=5", "l_max"),
            ("channel.doppler_tap=3", "k_max"),
            ("solver.step_rule=adam", "step_rule"),
            ("solver.validity=maybe", "validity"),
            ("sweep.schemes=ofdm", "ofdm"),
            ("sweep.snr_db=5:1:1", "grid"),
            ("sweep.crb_thresholds=-1", "crb_thresholds"),
            ("sweep.frames_per_point=0", "frames_per_point"),
            ("channel.gain=0", "gain"),
            ("nonsense", "section.key=value"),
        ],
    )
    def test_rejected(self, override, needle):
        with pytest.raises(ConfigError, match=needle):
            parse_config(None, [override])

    def test_unknown_section(self, tmp_path):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(write(tmp_path, "[radar]\nx = 1\n"))

    def test_malformed(self, tmp_path):
        with pytest.raises(ConfigError, match="malformed"):
            parse_config(write(tmp_path, "m = 8\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            parse_config(tmp_path / "absent.ini")


def record(**kw):
    base = dict(
        snr_db=10.0, crb_threshold=3e-7, scheme="proposed-zf", ber_monte_carlo=0.125, ber_analytic=0.1234567890123,
        ber_lower_bound=math.nan, crb_achieved=2.999e-7, bits_simulated=1024, bit_errors=128,
        dual_lambda=27.4, dual_mu=0.0, converged=True,
    )
    base.update(kw)
    return SweepRecord(**base)


class TestCsv:
    def test_header(self):
        text = csvio.dumps([])
        assert text == "snr_db,crb_threshold,scheme,ber_mc,ber_analytic,ber_lb,crb_achieved,bits,errors,lambda,mu,converged\n"

    def test_format(self):
        line = csvio.dumps([record()]).splitlines()[1]
        assert line == (
            "1.000000000e+01,3.000000000e-07,proposed-zf,1.250000000e-01,1.234567890e-01,nan,"
            "2.999000000e-07,1024,128,2.740000000e+01,0.000000000e+00,true"
        )

    def test_roundtrip_exact_at_ten_digits(self):
        r = record(ber_analytic=0.1234567890, dual_mu=float("inf"), converged=False)
        back = csvio.loads(csvio.dumps([r]))[0]
        assert back.ber_analytic == r.ber_analytic and back.dual_mu == math.inf and not back.converged
        assert math.isnan(back.ber_lower_bound)

    @settings(max_examples=100, deadline=None)
    @given(
        x=st.floats(allow_nan=False, allow_infinity=False, width=64),
        bits=st.integers(0, 10**12),
        flag=st.booleans(),
    )
    def test_every_row_round_trips(self, x, bits, flag):
        r = record(ber_analytic=x, bits_simulated=bits, converged=flag)
        text = csvio.dumps([r])
        back = csvio.loads(text)[0]
        assert csvio.dumps([back]) == text
        assert back.ber_analytic == pytest.approx(x, rel=1e-9, abs=0) or x == 0

    def test_bad_header(self):
        with pytest.raises(ValueError):
            csvio.loads("a,b\n1,2\n")

    def test_bad_bool(self):
        text = csvio.dumps([record()]).replace("true", "yes")
        with pytest.raises(ValueError):
            csvio.loads(text)

    def test_file_io(self, tmp_path):
        p = tmp_path / "r.csv"
        csvio.write_records(p, [record(), record(scheme="zf-wc")])
        assert [r.scheme for r in csvio.read_records(p)] == ["proposed-zf", "zf-wc"]


@pytest.mark.filterwarnings("ignore::otfs_isac.errors.LowerBoundUnreachableWarning")
class TestCli:
    def test_validate(self, tmp_path):
        out = tmp_path / "v.txt"
        assert main(["validate", "--output", str(out)]) == EXIT_OK
        lines = out.read_text().splitlines()
        assert len(lines) == 7 and all(line.startswith("PASS") for line in lines)

    def test_solve_report(self, tmp_path):
        out = tmp_path / "nested" / "solve.txt"
        assert main(["solve", "--config", str(ROOT / "configs" / "default.ini"), "--output", str(out)]) == EXIT_OK
        text = out.read_text()
        for key in ("lambda", "mu", "ber_analytic", "crb_achieved", "mode,sensing_eig,gamma"):
            assert key in text
        rows = text.split("mode,sensing_eig,gamma\n")[1].splitlines()
        gamma = np.array([float(r.split(",")[2]) for r in rows])
        assert len(gamma) == 64 and gamma.sum() == pytest.approx(64, rel=1e-6)

    def test_sweep_snr_rows(self, tmp_path):
        out = tmp_path / "s.csv"
        args = ["sweep-snr", "--output", str(out), "--set", "sweep.frames_per_point=20", "--set", "sweep.schemes=proposed-zf"]
        assert main(args) == EXIT_OK
        records = csvio.read_records(out)
        assert [r.snr_db for r in records] == list(SimConfig().snr_grid_db)

    def test_sweep_crb(self, tmp_path):
        out = tmp_path / "c.csv"
        args = ["sweep-crb", "--output", str(out), "--set", "sweep.frames_per_point=20", "--set", "sweep.schemes=proposed-mmse,mmse-wc"]
        assert main(args) == EXIT_OK
        records = csvio.read_records(out)
        assert len(records) == 12 and {r.scheme for r in records} == {"proposed-mmse", "mmse-wc"}

    def test_seed_flag_changes_output(self, tmp_path):
        base = ["sweep-snr", "--set", "sweep.frames_per_point=50", "--set", "sweep.schemes=zf-wc", "--set", "sweep.snr_db=10"]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        main(base + ["--output", str(a), "--seed", "1"])
        main(base + ["--output", str(b), "--seed", "2"])
        assert a.read_bytes() != b.read_bytes()

    def test_infeasible_exit_code(self, tmp_path, caplog):
        out = tmp_path / "x.txt"
        assert main(["solve", "--output", str(out), "--set", "sensing.crb_threshold=1e-12"]) == EXIT_INFEASIBLE
        assert "feasibility floor" in caplog.text
        assert "2.553e-07" in caplog.text
        assert not out.exists()

    def test_config_exit_code(self, tmp_path):
        assert main(["solve", "--output", str(tmp_path / "x"), "--set", "frame.m=0"]) == EXIT_CONFIG

    def test_nonconvergence_exit_code(self, tmp_path):
        args = ["solve", "--output", str(tmp_path / "x"), "--set", "solver.tol=1e-30", "--set", "solver.max_iter=2", "--set", "solver.polish=false"]
        assert main(args) == EXIT_NONCONVERGENCE

    def test_io_exit_code(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert main(["validate", "--output", str(blocker / "out.txt")]) == EXIT_IO

    def test_bad_command(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["plot", "--output", str(tmp_path / "x")])
