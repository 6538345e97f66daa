import json

import numpy as np
import pytest

from qtsector import instrument as inst
from qtsector.cli import main
from qtsector.corpus import qnd2


def _state_file(tmp_path, name, mat):
    path = tmp_path / name
    path.write_text(json.dumps(
        {"dim": len(mat), "matrix": inst._matrix_to_json(np.asarray(mat))}))
    return str(path)


def test_version(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--version"])
    assert exc.value.code == 0


def test_validate_corpus_name(capsys):
    assert main(["validate", "--instrument", "qnd2"]) == 0
    out = capsys.readouterr().out
    assert "pass" in out


def test_validate_missing_file(capsys):
    assert main(["validate", "--instrument", "/nonexistent/foo.json"]) == 1


def test_validate_malformed_json(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text("{this is not json")
    assert main(["validate", "--instrument", str(path)]) == 1


def test_validate_scaled_kraus(tmp_path, capsys):
    base = qnd2()
    bad = inst.Instrument(dim=2, outcomes=base.outcomes,
                          kraus={a: [1.05 * k for k in base.kraus[a]]
                                 for a in base.outcomes}, name="scaled")
    path = tmp_path / "scaled.json"
    inst.save_instrument(bad, path)
    assert main(["validate", "--instrument", str(path)]) == 2
    assert main(["decompose", "--instrument", str(path),
                 "--out", str(tmp_path / "o")]) == 2


def test_bad_tolerance_rejected(capsys):
    assert main(["validate", "--instrument", "qnd2", "--tol-channel", "-1"]) == 1


def test_validate_writes_report(tmp_path):
    out = tmp_path / "v"
    assert main(["validate", "--instrument", "qnd2", "--out", str(out)]) == 0
    data = json.loads((out / "validation.json").read_text())
    assert data["passed"] is True and data["deficit"] <= 1e-12


def test_decompose_outputs(tmp_path):
    out = tmp_path / "d"
    assert main(["decompose", "--instrument", "block4", "--out", str(out)]) == 0
    structure = json.loads((out / "structure.json").read_text())
    assert structure["r"] == 2
    secs = json.loads((out / "sectors.json").read_text())
    assert len(secs["partition"]) == 2
    assert secs["horizon"] == 1
    assert 0 < secs["kappa"] < 1
    # a witness word separating the two laws must be recorded
    assert secs["witnesses"]["0,1"]["equal"] is False
    assert secs["witnesses"]["0,1"]["word"] is not None


def test_decompose_single_sector(tmp_path):
    out = tmp_path / "f"
    assert main(["decompose", "--instrument", "flat2", "--out", str(out)]) == 0
    secs = json.loads((out / "sectors.json").read_text())
    assert len(secs["partition"]) == 1
    assert secs["kappa"] is None


def test_simulate_and_analyze(tmp_path, instruments):
    out = tmp_path / "run"
    rho0 = _state_file(tmp_path, "rho0.json", np.diag([0.4, 0.6]))
    rhohat = _state_file(tmp_path, "rhohat.json", np.eye(2) / 2)
    assert main(["simulate", "--instrument", "qnd2", "--out", str(out),
                 "--steps", "80", "--trajectories", "60", "--seed", "11",
                 "--record-stride", "4",
                 "--initial-state", rho0, "--filter-state", rhohat]) == 0
    for fname in ("records.csv", "run_meta.json", "summary.json"):
        assert (out / fname).exists()
    meta = json.loads((out / "run_meta.json").read_text())
    assert meta["config_hash"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["trajectories"] == 60 and summary["failed"] == 0

    assert main(["analyze", "--instrument", "qnd2", "--out", str(out),
                 "--steps", "80", "--trajectories", "60", "--seed", "11"]) == 0
    report = json.loads((out / "analysis.json").read_text())
    assert report["config_hash"] == meta["config_hash"]
    obs = sorted(report["born"]["observed"])
    assert abs(obs[0] - 0.4) < 0.25 and abs(obs[1] - 0.6) < 0.25
    assert report["w_decay"]["bound_ok"] is True
    assert report["w_decay_filter"]["bound_ok"] is True
    assert (out / "w_decay.csv").exists()
    # entropy-rate matrix has the diagonal near zero, off-diagonal positive
    ent = report["entropy_rates"]
    assert abs(ent["0,0"]["value"]) < 0.02 and abs(ent["1,1"]["value"]) < 0.02
    assert ent["0,1"]["value"] > 0.3 and ent["1,0"]["value"] > 0.3


def test_analyze_without_simulation(tmp_path):
    assert main(["analyze", "--instrument", "qnd2",
                 "--out", str(tmp_path / "empty")]) == 1


def test_pipeline_single_sector_note(tmp_path):
    out = tmp_path / "p"
    assert main(["pipeline", "--instrument", "adl", "--out", str(out),
                 "--steps", "20", "--trajectories", "10"]) == 0
    report = json.loads((out / "analysis.json").read_text())
    assert report["notes"]


def test_pipeline_byte_identical(tmp_path):
    args = ["pipeline", "--instrument", "qnd2", "--steps", "30",
            "--trajectories", "20", "--seed", "42", "--record-stride", "3"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    files1 = sorted(p.name for p in out1.iterdir())
    files2 = sorted(p.name for p in out2.iterdir())
    assert files1 == files2 and files1
    for name in files1:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
