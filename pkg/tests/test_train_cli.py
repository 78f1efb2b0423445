import json
import os

import numpy as np
import pytest

from tnneig import assembly, cli, config, report, tnn, train
from tnneig.errors import CheckpointError, ConfigError


def tiny_overrides(tmp_path, **extra):
    base = {"adam_steps": 40, "lbfgs_steps": 5, "out": str(tmp_path / "out"),
            "seed": 1, "k": 3, "p": 4, "width": 8,
            "quadrature": {"m_sub": 4, "n_quad": 8}}
    base.update(extra)
    return base


class TestConfig:
    def test_unknown_preset_rejected(self):
        with pytest.raises(ConfigError):
            config.load_config(None, "no-such-problem", {})

    def test_bad_values_rejected(self):
        with pytest.raises(ConfigError):
            config.load_config(None, "ho2d", {"k": 0})
        with pytest.raises(ConfigError):
            config.load_config(None, "ho2d", {"adam_lr": -1.0})

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"preset": "ho2d", "bogus": 1}))
        with pytest.raises(ConfigError):
            config.load_config(str(path))

    def test_file_then_cli_precedence(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"preset": "box-laplace", "seed": 5,
                                    "adam_steps": 7}))
        cfg = config.load_config(str(path), None, {"seed": 9})
        assert cfg.preset == "box-laplace"
        assert cfg.seed == 9
        assert cfg.adam_steps == 7

    def test_version_check(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"version": 99, "preset": "ho2d"}))
        with pytest.raises(ConfigError):
            config.load_config(str(path))

    def test_quadrature_merge(self):
        cfg = config.load_config(None, "ho2d", {"quadrature": {"hermite_n": 24}})
        assert cfg.quadrature["hermite_n"] == 24


class TestRun:
    def test_degenerate_schedule_pure_rayleigh_ritz(self, tmp_path):
        cfg = config.load_config(None, "box-laplace",
                                 tiny_overrides(tmp_path, adam_steps=0,
                                                lbfgs_steps=0))
        rep = train.run(cfg)
        assert len(rep.ritz_values) == cfg.k
        assert all(np.isfinite(v) for v in rep.ritz_values)
        assert rep.ritz_values == sorted(rep.ritz_values)

    def test_loss_history_finite_and_final_recorded(self, tmp_path):
        cfg = config.load_config(None, "box-laplace", tiny_overrides(tmp_path))
        rep = train.run(cfg)
        values = [v for _, v in rep.loss_history]
        assert all(np.isfinite(v) for v in values)
        assert rep.final_loss == values[-1]

    def test_determinism_byte_identical_reports(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            out = tmp_path / tag
            cfg = config.load_config(None, "box-laplace",
                                     tiny_overrides(tmp_path, out=str(out)))
            rep = train.run(cfg)
            report.report_emit(rep, str(out), quiet=True)
            outs.append(out)
        tsv_a = (outs[0] / "results.tsv").read_bytes()
        tsv_b = (outs[1] / "results.tsv").read_bytes()
        assert tsv_a == tsv_b
        doc_a = json.loads((outs[0] / "results.json").read_text())
        doc_b = json.loads((outs[1] / "results.json").read_text())
        doc_a.pop("timing")
        doc_b.pop("timing")
        ser = lambda d: json.dumps(d, sort_keys=True)
        assert ser(doc_a) == ser(doc_b)

    def test_checkpoint_roundtrip_reproduces_matrices_bitwise(self, tmp_path):
        cfg = config.load_config(None, "box-laplace",
                                 tiny_overrides(tmp_path, adam_steps=25,
                                                lbfgs_steps=0))
        rep = train.run(cfg)
        specs, problem = config.build_problem(cfg)
        model, _ = tnn.load_checkpoint(rep.checkpoint_path)
        pair1, _ = assembly.assemble(model, problem)
        model2, _ = tnn.load_checkpoint(rep.checkpoint_path)
        pair2, _ = assembly.assemble(model2, problem)
        assert np.array_equal(pair1.a, pair2.a)
        assert np.array_equal(pair1.b, pair2.b)

    def test_resume_zero_steps_reproduces_ritz_values(self, tmp_path):
        cfg = config.load_config(None, "box-laplace",
                                 tiny_overrides(tmp_path, adam_steps=30,
                                                lbfgs_steps=0))
        rep = train.run(cfg)
        resumed = config.load_config(None, "box-laplace", tiny_overrides(
            tmp_path, adam_steps=0, lbfgs_steps=0,
            out=str(tmp_path / "resumed"), resume=rep.checkpoint_path))
        rep2 = train.run(resumed)
        assert np.max(np.abs(np.array(rep.ritz_values)
                             - np.array(rep2.ritz_values))) <= 1e-14

    def test_resume_rejects_mismatched_architecture(self, tmp_path):
        cfg = config.load_config(None, "box-laplace",
                                 tiny_overrides(tmp_path, adam_steps=5,
                                                lbfgs_steps=0))
        rep = train.run(cfg)
        other = config.load_config(None, "box-laplace", tiny_overrides(
            tmp_path, p=5, adam_steps=0, lbfgs_steps=0,
            resume=rep.checkpoint_path))
        with pytest.raises(CheckpointError):
            train.run(other)

    def test_hydrogen_smoke_structure(self, tmp_path):
        cfg = config.load_config(None, "hydrogen", {
            "adam_steps": 3, "lbfgs_steps": 0, "k": 1, "p": 3, "width": 6,
            "depth": 2, "out": str(tmp_path / "h"), "seed": 0,
            "quadrature": {"laguerre_n": 24, "theta_m": 8, "theta_n": 6,
                           "phi_m": 8, "phi_n": 6}})
        rep = train.run(cfg)
        assert rep.rows[0]["state"] == "1s"
        assert rep.rows[0]["exact"] == -0.5


class TestReportEmit:
    def make_report(self, tmp_path, preset="box-laplace"):
        cfg = config.load_config(None, preset, tiny_overrides(tmp_path))
        return train.run(cfg), cfg

    def test_row_count_and_columns(self, tmp_path):
        rep, cfg = self.make_report(tmp_path)
        paths = report.report_emit(rep, cfg.out, quiet=True)
        lines = open(paths["tsv"]).read().strip().split("\n")
        assert lines[0].split("\t") == ["n", "state", "exact_E", "approx_E",
                                        "err_E", "err_L2", "err_H1"]
        assert len(lines) == 1 + cfg.k

    def test_missing_columns_rendered_as_dash(self, tmp_path):
        rep, cfg = self.make_report(tmp_path)
        for row in rep.rows:
            row["err_l2"] = None
            row["err_h1"] = None
        table = report.render_table(rep)
        assert "—" in table

    def test_figures_written(self, tmp_path):
        rep, cfg = self.make_report(tmp_path)
        paths = report.report_emit(rep, cfg.out, quiet=True)
        assert os.path.getsize(paths["loss_history"]) > 0
        assert os.path.getsize(paths["eigenvalue_errors"]) > 0

    def test_json_schema_fields(self, tmp_path):
        rep, cfg = self.make_report(tmp_path)
        paths = report.report_emit(rep, cfg.out, quiet=True)
        doc = json.loads(open(paths["json"]).read())
        for key in ("format_version", "config", "ritz_values", "rows",
                    "loss_history", "jitter_events", "timing"):
            assert key in doc
        assert doc["format_version"] == 1


class TestCli:
    def test_success_exit_code(self, tmp_path, capsys):
        out = tmp_path / "run"
        code = cli.main(["--preset", "box-laplace", "--seed", "2",
                         "--out", str(out), "--steps-adam", "10",
                         "--steps-lbfgs", "0", "--quiet",
                         "--config", self.write_cfg(tmp_path)])
        assert code == 0
        assert (out / "results.tsv").exists()
        assert (out / "checkpoint.ckpt").exists()

    def write_cfg(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({
            "preset": "box-laplace", "k": 3, "p": 3, "width": 6,
            "quadrature": {"m_sub": 4, "n_quad": 8}}))
        return str(path)

    def test_config_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert cli.main(["--config", str(bad), "--quiet"]) == 2

    def test_unknown_flag_exit_code(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["--no-such-flag"])
        assert info.value.code == 2

    def test_resume_flow(self, tmp_path):
        cfgfile = self.write_cfg(tmp_path)
        out1 = tmp_path / "first"
        assert cli.main(["--config", cfgfile, "--preset", "box-laplace",
                         "--seed", "3", "--out", str(out1),
                         "--steps-adam", "8", "--steps-lbfgs", "0",
                         "--quiet"]) == 0
        out2 = tmp_path / "second"
        assert cli.main(["--config", cfgfile, "--preset", "box-laplace",
                         "--seed", "3", "--out", str(out2),
                         "--steps-adam", "0", "--steps-lbfgs", "0",
                         "--resume", str(out1 / "checkpoint.ckpt"),
                         "--quiet"]) == 0
        doc1 = json.loads((out1 / "results.json").read_text())
        doc2 = json.loads((out2 / "results.json").read_text())
        assert np.allclose(doc1["ritz_values"], doc2["ritz_values"], atol=1e-14)
