import numpy as np
import pytest

from gmsfem_wave.cli import main
from gmsfem_wave.errors import ConfigurationError
from gmsfem_wave.harness import (Experiment, RunConfig, StageError, run_compare, run_sweep,
                                 run_verifiers)
from gmsfem_wave.media import read_raster
from gmsfem_wave.msbasis import build_bank

SMALL = dict(nx=32, blocks=4, T=0.05, media="synth:periodic:1:10:4")
FLAGS = ["--nx", "32", "--blocks", "4", "--T", "0.05", "--media", "synth:periodic:1:10:4"]
WALL = {"t_off", "t_on", "seconds_per_step", "fine_seconds"}


def _cfg(tmp_path, **kw):
    return RunConfig(**{**SMALL, "out": str(tmp_path), **kw}).validated()


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# desk run\nnx = 64\nblocks=4\ntheta = 0.8  # energy\nprobes = 0.01, 0.02\n"
                 "dt_auto = yes\n")
    cfg = RunConfig.from_file(p, {"m": 3, "theta": None})
    assert (cfg.nx, cfg.blocks, cfg.theta, cfg.m) == (64, 4, 0.8, 3)
    assert cfg.probes == (0.01, 0.02) and cfg.dt_auto is True
    again = RunConfig.from_mapping(dict(line.split(" = ") for line in cfg.to_text().splitlines()))
    assert again == cfg


@pytest.mark.parametrize("bad", [{"nx": 30, "blocks": 4}, {"theta": 0}, {"dt": "h/zero"},
                                 {"dirichlet": "x"}, {"media": "/no/such/file.bin"},
                                 {"colour": "red"}, {"m": "many"}])
def test_config_errors(bad):
    with pytest.raises(ConfigurationError):
        RunConfig.from_mapping(bad)


def test_step_policies():
    cfg = RunConfig()
    assert cfg.step_for(0.5) == pytest.approx(0.5 / 80)
    assert RunConfig(dt="h*0.01").step_for(2.0) == pytest.approx(0.02)
    assert RunConfig(dt="1e-4").step_for(2.0) == 1e-4


def test_compare_outputs_and_determinism(tmp_path):
    a = run_compare(_cfg(tmp_path / "a"))
    b = run_compare(_cfg(tmp_path / "b"))
    da, db = a.as_dict(), b.as_dict()
    for k in da:
        if k not in WALL and k != "config.out":
            assert da[k] == db[k], k
    for name in ("u_fine.bin", "u_gmsfem.bin"):
        x, ext = read_raster(tmp_path / "a" / name)
        y, _ = read_raster(tmp_path / "b" / name)
        assert x.shape == (32, 32) and ext == (1.0, 1.0)
        assert x.tobytes() == y.tobytes()
    text = (tmp_path / "a" / "report.txt").read_text()
    assert "config.media = synth:periodic:1:10:4" in text and "e2 = " in text
    assert 0 < a.e2 < 1 and a.t_off > 0 and a.t_on > 0


def test_probes_and_matrix_dump(tmp_path):
    cfg = _cfg(tmp_path, probes=(0.025,), dump_matrix=str(tmp_path / "S.mtx"))
    run_compare(cfg)
    assert (tmp_path / "S.mtx").exists()
    assert sorted(p.name for p in tmp_path.glob("u_*_*.bin")) == ["u_fine_000064.bin",
                                                                   "u_gmsfem_000064.bin"]


def test_unstable_step_rejected(tmp_path):
    exp = Experiment(_cfg(tmp_path, dt="h/2"))
    with pytest.raises(StageError) as info:
        exp.fine_run
    assert info.value.stage == "fine"


def test_stage_tagging(tmp_path):
    exp = Experiment(_cfg(tmp_path, m=50))
    with pytest.raises(StageError, match=r"\[offline\]"):
        exp.offline()


def test_verifiers_default_small(tmp_path):
    with pytest.warns(RuntimeWarning, match="below the provable threshold"):
        rep = run_verifiers(_cfg(tmp_path))
    assert rep.passed, rep.to_text()
    assert len(rep.checks) == 12


def test_verifier_small_penalty(tmp_path):
    with pytest.warns(RuntimeWarning):
        rep = run_verifiers(_cfg(tmp_path, gamma=0.01))
    assert not rep["coercivity"].passed and rep["coercivity"].value < 0.5


def test_verifier_tampered_bank(tmp_path):
    cfg = _cfg(tmp_path)
    exp = Experiment(cfg)
    bank = build_bank(exp.coarse, exp.field, cfg.theta, cfg.m)
    bank.blocks[5].modes[:, 2] = 0.0
    rep = run_verifiers(cfg, experiment=exp, bank=bank)
    assert not rep["orthonormality"].passed
    assert "worst block 5" in rep["orthonormality"].detail
    assert not rep["assembly"].passed and not rep.passed


def test_sweeps_share_reference(tmp_path):
    cfg = _cfg(tmp_path)
    exp = Experiment(cfg)
    # the CLI passes floats; they must behave like the integer counts
    rows, text = run_sweep(cfg, "m", [1.0, 2.0], experiment=exp)
    assert [r.meta["m"] for r in rows] == [1, 2]
    assert text.splitlines()[0].split(" | ")[0].strip() == "m"
    rows, text = run_sweep(cfg, "theta", [0.75, 0.8], experiment=exp)
    assert "75%" in text and "mu_min" in text
    rows, text = run_sweep(cfg, "oversample", [1], experiment=exp)
    assert "e2 (no oversampling)" in text and len(rows) == 2
    assert (tmp_path / "sweep_oversample.txt").exists()
    with pytest.raises(ConfigurationError):
        run_sweep(cfg, "gamma", [1], experiment=exp)
    with pytest.raises(ConfigurationError, match="integer"):
        run_sweep(cfg, "m", [1.5], experiment=exp)


def test_cli_resume_with_bank(tmp_path, capsys):
    bank = tmp_path / "bank.zip"
    assert main(["basis", "build", *FLAGS, "-o", str(bank)]) == 0
    assert main(["run-gmsfem", *FLAGS, "--out", str(tmp_path / "fresh")]) == 0
    assert main(["run-gmsfem", *FLAGS, "--bank", str(bank), "--out", str(tmp_path / "resumed")]) == 0
    x, _ = read_raster(tmp_path / "fresh" / "u_gmsfem.bin")
    y, _ = read_raster(tmp_path / "resumed" / "u_gmsfem.bin")
    assert np.array_equal(x, y)
    out = capsys.readouterr().out
    assert "n_dofs" in out and "bank" in out


def test_cli_fine_compare_verify(tmp_path, capsys):
    assert main(["run-fine", *FLAGS, "--out", str(tmp_path / "f")]) == 0
    assert (tmp_path / "f" / "u_fine.bin").exists()
    assert main(["compare", *FLAGS, "--out", str(tmp_path / "c")]) == 0
    assert "e2 = " in capsys.readouterr().out
    with pytest.warns(RuntimeWarning):
        assert main(["verify", *FLAGS, "--out", str(tmp_path / "v")]) == 0
    with pytest.warns(RuntimeWarning):
        assert main(["verify", *FLAGS, "--gamma", "0.01", "--out", str(tmp_path / "w")]) == 1
    assert "FAIL  coercivity" in (tmp_path / "w" / "verify.txt").read_text()
    assert main(["sweep", *FLAGS, "--kind", "m", "--values", "1,2",
                 "--out", str(tmp_path / "s")]) == 0


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["compare", "--nx", "30", "--blocks", "4"]) == 3
    assert "not divisible" in capsys.readouterr().err
    assert main(["run-fine", *FLAGS, "--dt", "h/2", "--out", str(tmp_path)]) == 3
    with pytest.raises(SystemExit):
        main(["sweep", "--kind", "gamma", "--values", "1"])


def test_cli_config_file(tmp_path, capsys):
    p = tmp_path / "c.cfg"
    p.write_text("nx = 32\nblocks = 4\nT = 0.05\nmedia = const:2\n")
    assert main(["run-gmsfem", "--config", str(p), "--interior", "2",
                 "--out", str(tmp_path / "o")]) == 0
    cfg = (tmp_path / "o" / "config.txt").read_text()
    assert "m = 2" in cfg and "media = const:2" in cfg
