import json
import subprocess
import sys

import numpy as np
import pytest

from ergokit.calibration import load_profile, save_profile
from ergokit.cli import main
from ergokit.synthetic import (
    excursion_recording,
    exertion_recording,
    lifting_session,
    met_observations_csv,
    static_calibration_recording,
    synthetic_profile,
)


@pytest.fixture
def session_setup(tmp_path, profile):
    sess = lifting_session(profile, weights=(2.5, 5.0), heights=("v2",))
    trial = tmp_path / "trial.csv"
    trial.write_text(sess.csv_text)
    prof = tmp_path / "profile.json"
    save_profile(profile, prof)
    cfg = tmp_path / "session.json"
    cfg.write_text(json.dumps({
        "profile_path": "profile.json",
        "trials": ["trial.csv"],
        "mode": sess.mode,
        "rate": sess.rate,
        "windows": sess.windows,
    }))
    return cfg, tmp_path


class TestAnalyze:
    def test_writes_report_and_exits_zero(self, session_setup, capsys):
        cfg, tmp_path = session_setup
        out = tmp_path / "out"
        code = main(["analyze", "--config", str(cfg), "--out", str(out)])
        assert code == 0
        assert (out / "report.json").exists()
        assert (out / "report.txt").exists()
        assert (out / "aggregates.csv").exists()

    def test_prints_text_report_without_out(self, session_setup, capsys):
        cfg, _ = session_setup
        assert main(["analyze", "--config", str(cfg)]) == 0
        text = capsys.readouterr().out
        assert "2.5kg-V2" in text

    def test_bad_config_is_validation_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text("{not json")
        assert main(["analyze", "--config", str(cfg)]) == 1

    def test_missing_profile_is_validation_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({
            "profile_path": "nope.json", "trials": ["t.csv"],
        }))
        (tmp_path / "t.csv").write_text("time,q_ankle\n")
        assert main(["analyze", "--config", str(cfg)]) == 1

    def test_threshold_override(self, session_setup, tmp_path):
        cfg, base = session_setup
        out = base / "o2"
        code = main(["analyze", "--config", str(cfg), "--thresholds", "0.2,0.5",
                     "--out", str(out)])
        assert code == 0


class TestReportRerender:
    def test_rerender_matches_original(self, session_setup, tmp_path):
        cfg, base = session_setup
        out = base / "out"
        assert main(["analyze", "--config", str(cfg), "--out", str(out)]) == 0
        out2 = base / "re"
        assert main(["report", "--from", str(out / "report.json"),
                     "--out", str(out2)]) == 0
        assert (out2 / "report.txt").read_bytes() == (out / "report.txt").read_bytes()
        assert (out2 / "aggregates.csv").read_bytes() == (out / "aggregates.csv").read_bytes()


class TestValidate:
    def test_validate_good_file(self, session_setup, capsys):
        _, base = session_setup
        assert main(["validate", "--input", str(base / "trial.csv")]) == 0
        assert "frames" in capsys.readouterr().out

    def test_validate_bad_file(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("time,q_bogus\n0,1\n")
        assert main(["validate", "--input", str(bad)]) == 1


class TestStats:
    def test_table_analysis(self, tmp_path, capsys):
        table = tmp_path / "table.csv"
        rng = np.random.default_rng(1)
        lines = ["subject,light,medium,heavy"]
        for i in range(8):
            base = rng.normal(0.3, 0.02)
            lines.append(
                f"s{i},{base:.4f},{base + 0.1 + rng.normal(0, 0.01):.4f},"
                f"{base + 0.25 + rng.normal(0, 0.01):.4f}"
            )
        table.write_text("\n".join(lines) + "\n")
        assert main(["stats", "--table", str(table)]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["anova"]["significant"] is True
        assert set(payload["posthoc"]) == {
            "light vs medium", "light vs heavy", "medium vs heavy",
        }

    def test_correction_flag(self, tmp_path, capsys):
        table = tmp_path / "t.csv"
        table.write_text(
            "subject,a,b\ns1,1.0,2.0\ns2,1.1,2.2\ns3,0.9,1.9\ns4,1.2,2.1\n"
        )
        assert main(["stats", "--table", str(table), "--correction", "holm"]) == 0

    def test_malformed_table(self, tmp_path):
        table = tmp_path / "t.csv"
        table.write_text("subject,a\ns1,1.0\n")
        assert main(["stats", "--table", str(table)]) == 1


class TestCalibrate:
    def test_full_calibration_produces_usable_profile(self, tmp_path, capsys):
        truth = synthetic_profile("cal-subject", 74.0, 1.80)
        model = truth.model()
        (tmp_path / "static.csv").write_text(static_calibration_recording(model))
        (tmp_path / "dynamic.csv").write_text(excursion_recording())
        (tmp_path / "met.csv").write_text(met_observations_csv())
        (tmp_path / "exertion.csv").write_text(exertion_recording(model))
        subject = tmp_path / "subject.json"
        subject.write_text(json.dumps({
            "id": "cal-subject", "mass": 74.0, "height": 1.80,
            "gender": "female",
            "mvc": {c: 1.0 for c in
                    ("AD", "PD", "BC", "TC", "TR", "ES", "GM", "RF", "BF", "TA")},
        }))
        out = tmp_path / "profile.json"
        code = main([
            "calibrate", "--subject", str(subject),
            "--static", str(tmp_path / "static.csv"),
            "--dynamic", str(tmp_path / "dynamic.csv"),
            "--met", str(tmp_path / "met.csv"),
            "--exertion", str(tmp_path / "exertion.csv"),
            "--out", str(out),
        ])
        assert code == 0
        prof = load_profile(out)
        assert prof.missing_fields("load-estimation") == []
        assert prof.missing_fields("measured-wrench") == []
        # identified CoM coefficients agree with the analytic conversion
        np.testing.assert_allclose(
            prof.sesc_coeffs[:-2], truth.sesc_coeffs[:-2], atol=5e-4
        )
        # endurance fit recovers the generating fatigue rate
        np.testing.assert_allclose(prof.lambda_f, truth.lambda_f, rtol=1e-3)
        # the profile drives a session end to end
        sess = lifting_session(prof, weights=(2.5,), heights=("v2",))
        trial = tmp_path / "t.csv"
        trial.write_text(sess.csv_text)
        cfg = tmp_path / "session.json"
        cfg.write_text(json.dumps({
            "profile_path": str(out), "trials": [str(trial)],
            "mode": sess.mode, "rate": sess.rate, "windows": sess.windows,
        }))
        assert main(["analyze", "--config", str(cfg)]) == 0

    def test_static_without_cop_channel_fails(self, tmp_path):
        subject = tmp_path / "subject.json"
        subject.write_text(json.dumps({"id": "x", "mass": 70, "height": 1.7}))
        (tmp_path / "static.csv").write_text(excursion_recording(duration=4.0))
        code = main(["calibrate", "--subject", str(subject),
                     "--static", str(tmp_path / "static.csv"),
                     "--out", str(tmp_path / "p.json")])
        assert code == 1


class TestStream:
    def test_stdin_stream_subprocess(self, session_setup, tmp_path):
        cfg, base = session_setup
        data = (base / "trial.csv").read_bytes()
        proc = subprocess.run(
            [sys.executable, "-m", "ergokit.cli", "stream", "--config", str(cfg)],
            input=data, capture_output=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        summary = json.loads(proc.stdout.decode().strip().splitlines()[-1])
        assert summary["frames"] > 100
        assert summary["aborted"] is False
        assert [w["label"] for w in summary["windows"]] == ["2.5kg-V2", "5.0kg-V2"]

    def test_stream_emit_lines(self, session_setup, tmp_path):
        cfg, base = session_setup
        data = (base / "trial.csv").read_bytes()
        proc = subprocess.run(
            [sys.executable, "-m", "ergokit.cli", "stream", "--config", str(cfg),
             "--emit"],
            input=data, capture_output=True, timeout=120,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        lines = proc.stdout.decode().strip().splitlines()
        record = json.loads(lines[0])
        assert "overload_torque" in record and len(record["overload_torque"]) == 7

    def test_stream_reset_returns_runtime_code(self, session_setup, tmp_path):
        cfg, base = session_setup
        good = (base / "trial.csv").read_text().splitlines()
        scrambled = good[:50] + [good[10]] + good[50:80]
        proc = subprocess.run(
            [sys.executable, "-m", "ergokit.cli", "stream", "--config", str(cfg)],
            input="\n".join(scrambled).encode(), capture_output=True, timeout=120,
        )
        assert proc.returncode == 2
        assert b"aborted" in proc.stdout or b"reset" in proc.stderr


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0
