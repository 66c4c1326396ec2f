"""Tests for the experiment configs, runners, data export, and CLI."""

import dataclasses
import json
import math
import os

import numpy as np
import pytest

from bnnlimits.cli import EXIT_CONFIG, EXIT_NUMERICAL, EXIT_OK, main
from bnnlimits.experiments import (
    ComparisonReport,
    ConfigError,
    ExperimentConfig,
    emit_figure_data,
    fit_loglog_slope,
    likelihood_lipschitz,
    likelihood_sup,
    read_figure_csv,
    run_bound_diagnostics,
    run_comparison,
    run_gaussian_baseline,
    run_posterior_convergence,
    run_prior_convergence,
)

FAST = dict(
    widths=(1, 2),
    draws=20,
    n_reps=2,
    k=3,
    test_grid=8,
    w1_grid=3,
    burn_in=10,
    hmc_steps=1,
)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.widths == (1, 2, 4, 8, 16, 32, 64, 128)
        assert cfg.architecture(4).widths == (1, 4, 4, 1)
        assert cfg.variances().weight == (5.0, 5.0, 5.0)

    def test_from_dict_round_trip(self):
        cfg = ExperimentConfig(**FAST)
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_from_dict_rejects_unknown_fields(self):
        with pytest.raises(ConfigError, match="unknown config fields"):
            ExperimentConfig.from_dict({"nonsense": 1})

    @pytest.mark.parametrize(
        "bad",
        [
            {"widths": (4, 2)},
            {"draws": 1},
            {"n_hidden_layers": 0},
            {"reference_fn": "cubic"},
            {"n_reps": 0},
            {"w1_grid": 9, "test_grid": 4},
            {"activation": "swish"},
            {"activation": "relu", "kernel_method": "analytic_erf"},
            {"activation": "erf", "kernel_method": "analytic_relu"},
        ],
    )
    def test_invalid_configs_rejected(self, bad):
        with pytest.raises(ConfigError):
            ExperimentConfig(**bad)

    def test_hash_sensitive_to_every_field(self):
        base = ExperimentConfig()
        assert base.hash() == ExperimentConfig().hash()
        tweaked = [
            ExperimentConfig(seed=1),
            ExperimentConfig(a=3.5),
            ExperimentConfig(draws=101),
            ExperimentConfig(activation="tanh", kernel_method="gauss_hermite"),
        ]
        hashes = {base.hash()} | {c.hash() for c in tweaked}
        assert len(hashes) == 1 + len(tweaked)

    def test_dataset_shapes_and_determinism(self):
        cfg = ExperimentConfig(k=5, seed=3)
        d1, d2 = cfg.make_dataset(), cfg.make_dataset()
        assert d1.x.shape == (1, 5) and d1.y.shape == (1, 5)
        np.testing.assert_array_equal(d1.y, d2.y)
        assert ExperimentConfig(k=0).make_dataset().k == 0

    def test_subgrid_is_within_test_grid(self):
        cfg = ExperimentConfig(test_grid=64, w1_grid=5)
        idx = cfg.w1_subgrid_idx()
        assert len(idx) == 5
        assert idx[0] == 0 and idx[-1] == 63
        assert ExperimentConfig(w1_grid=0).w1_subgrid_idx().size == 0


class TestSlopeFit:
    def test_recovers_exact_power_law(self):
        w = np.array([1.0, 2.0, 4.0, 8.0, 16.0])
        assert math.isclose(fit_loglog_slope(w, w**-0.5), -0.5, abs_tol=1e-12)

    def test_needs_four_positive_points(self):
        assert fit_loglog_slope([1, 2, 4], [1.0, 0.5, 0.25]) is None
        assert fit_loglog_slope([1, 2, 4, 8], [1.0, 0.5, 0.0, 0.0]) is None


class TestRunners:
    def test_prior_convergence_report_fields(self):
        cfg = ExperimentConfig(**FAST)
        rep = run_prior_convergence(cfg)
        assert rep.widths == [1, 2]
        assert len(rep.w1) == 2 and len(rep.w1_reps[0]) == cfg.n_reps
        assert all(lo <= v <= hi for v, lo, hi in zip(rep.w1, rep.w1_lo, rep.w1_hi))
        assert all(v > 0 for v in rep.w1)
        assert rep.slope is None  # only two widths
        assert rep.config_hash == cfg.hash()

    def test_prior_convergence_deterministic(self):
        cfg = ExperimentConfig(**FAST)
        assert run_prior_convergence(cfg).w1 == run_prior_convergence(cfg).w1

    def test_posterior_convergence_smoke(self):
        cfg = ExperimentConfig(**FAST)
        rep = run_posterior_convergence(cfg)
        assert len(rep.w1) == 2 and all(v > 0 for v in rep.w1)
        assert len(rep.limit_mean) == cfg.test_grid
        assert rep.constraint is not None

    def test_gaussian_baseline_smoke(self):
        cfg = ExperimentConfig(**FAST)
        rep = run_gaussian_baseline(cfg)
        assert len(rep.w1) == 2 and all(v > 0 for v in rep.w1)

    def test_comparison_bands_ordered_and_t_wider(self):
        cfg = ExperimentConfig(k=4, test_grid=16)
        rep = run_comparison(cfg)
        assert len(rep.grid) == 16
        for tb, gb in zip(rep.tp_bands, rep.gp_bands):
            assert tb[0] < tb[1] < tb[2]
            assert gb[0] < gb[1] < gb[2]

    def test_comparison_empty_grid(self):
        rep = run_comparison(ExperimentConfig(k=3, test_grid=0, w1_grid=0))
        assert rep.grid == [] and rep.tp_bands == []


class TestBoundDiagnostics:
    def test_formulas_standard_normal_case(self):
        # sigma2 = 1, n = 1: sup = 1/sqrt(2 pi), Lipschitz = e^{-1/2}/sqrt(2 pi)
        assert math.isclose(likelihood_sup(1.0, 1), 0.3989422804014327, rel_tol=1e-12)
        assert math.isclose(
            likelihood_lipschitz(1.0, 1), 0.24197072451914337, rel_tol=1e-12
        )

    def test_numeric_maximization_matches_formulas(self):
        cfg = ExperimentConfig(k=2, test_grid=4, w1_grid=2)
        diag = run_bound_diagnostics(cfg)
        for sf, sn, lf, ln, (s2, _), r2 in zip(
            diag.sup_formula,
            diag.sup_numeric,
            diag.lip_formula,
            diag.lip_numeric,
            diag.settings,
            diag.argmax_resid2,
        ):
            assert abs(sn - sf) <= 1e-5 * sf
            assert abs(ln - lf) <= 1e-5 * lf
            assert abs(r2 - s2) <= 1e-4


class TestDataExport:
    def test_convergence_csv_round_trip(self, tmp_path):
        cfg = ExperimentConfig(**FAST)
        rep = run_prior_convergence(cfg)
        paths = emit_figure_data(rep, str(tmp_path), cfg)
        cols = read_figure_csv(paths[0])
        assert cols["width"] == [1.0, 2.0]
        assert cols["w1"] == rep.w1
        assert cols["w1_lo"] == rep.w1_lo and cols["w1_hi"] == rep.w1_hi
        meta = json.load(open(paths[1]))
        assert meta["config_hash"] == cfg.hash()
        assert meta["config"] == cfg.to_dict() or meta["config"] == json.loads(
            json.dumps(cfg.to_dict())
        )

    def test_bands_csv_round_trip(self, tmp_path):
        rep = run_comparison(ExperimentConfig(k=3, test_grid=8))
        paths = emit_figure_data(rep, str(tmp_path))
        cols = read_figure_csv(paths[0])
        assert cols["x"] == rep.grid
        assert cols["tp_med"] == [b[1] for b in rep.tp_bands]

    def test_diagnostics_csv_round_trip(self, tmp_path):
        diag = run_bound_diagnostics(ExperimentConfig(k=2, test_grid=4, w1_grid=2))
        paths = emit_figure_data(diag, str(tmp_path))
        cols = read_figure_csv(paths[0])
        assert cols["sup_formula"] == diag.sup_formula

    def test_export_byte_identical_across_runs(self, tmp_path):
        cfg = ExperimentConfig(**FAST)
        out = []
        for sub in ("a", "b"):
            paths = emit_figure_data(run_prior_convergence(cfg), str(tmp_path / sub), cfg)
            out.append(open(paths[0], "rb").read())
        assert out[0] == out[1]

    def test_unsupported_report_rejected(self, tmp_path):
        with pytest.raises(TypeError):
            emit_figure_data({"not": "a report"}, str(tmp_path))


class TestCli:
    def _cfg_file(self, tmp_path, **extra):
        d = dict(FAST)
        d["widths"] = list(d["widths"])
        d.update(extra)
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(d))
        return str(path)

    def test_prior_convergence_exit_ok(self, tmp_path, capsys):
        rc = main(
            [
                "prior-convergence",
                "--config",
                self._cfg_file(tmp_path),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert rc == EXIT_OK
        printed = capsys.readouterr().out.splitlines()
        assert all(os.path.exists(p) for p in printed)
        assert any(p.endswith("w1_vs_width.csv") for p in printed)

    def test_compare_and_diagnostics_exit_ok(self, tmp_path):
        cfgp = self._cfg_file(tmp_path)
        assert main(["compare", "--config", cfgp, "--out", str(tmp_path / "c")]) == EXIT_OK
        assert (
            main(["diagnostics", "--config", cfgp, "--out", str(tmp_path / "d")])
            == EXIT_OK
        )

    def test_seed_override(self, tmp_path):
        cfgp = self._cfg_file(tmp_path)
        for seed, sub in ((1, "s1"), (2, "s2")):
            assert (
                main(
                    [
                        "prior-convergence",
                        "--config",
                        cfgp,
                        "--seed",
                        str(seed),
                        "--out",
                        str(tmp_path / sub),
                    ]
                )
                == EXIT_OK
            )
        m1 = json.load(open(tmp_path / "s1" / "w1_vs_width.meta.json"))
        m2 = json.load(open(tmp_path / "s2" / "w1_vs_width.meta.json"))
        assert m1["seed"] == 1 and m2["seed"] == 2
        assert m1["config_hash"] != m2["config_hash"]

    def test_bad_config_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"widths": [4, 2]}))
        assert main(["prior-convergence", "--config", str(path)]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_unreadable_and_malformed_config_exit_2(self, tmp_path):
        assert main(["compare", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG
        path = tmp_path / "mal.json"
        path.write_text("{not json")
        assert main(["compare", "--config", str(path)]) == EXIT_CONFIG
        path2 = tmp_path / "list.json"
        path2.write_text("[1, 2]")
        assert main(["compare", "--config", str(path2)]) == EXIT_CONFIG

    def test_degenerate_kernel_exit_3(self, tmp_path, capsys):
        # duplicated training inputs make the rescaled train kernel singular
        # only beyond repair when quadrature noise is added on top
        cfg = self._cfg_file(
            tmp_path,
            activation="relu",
            kernel_method="gauss_hermite",
            bias_variance=0.001,
            weight_variance=2.0,
            n_hidden_layers=3,
            test_grid=64,
            w1_grid=3,
            k=8,
        )
        rc = main(["prior-convergence", "--config", cfg, "--out", str(tmp_path / "o")])
        assert rc == EXIT_NUMERICAL
        assert "numerical failure" in capsys.readouterr().err


class TestConstraintReporting:
    def test_constraint_logged_in_posterior_report(self):
        cfg = ExperimentConfig(**FAST)
        rep = run_posterior_convergence(cfg)
        c = rep.constraint
        assert c is not None
        assert c.op_norm > 0 and c.b_lower_bound > 0
        assert isinstance(c.ok, bool)

    def test_constraint_in_meta_json(self, tmp_path):
        cfg = ExperimentConfig(**FAST)
        rep = run_posterior_convergence(cfg)
        paths = emit_figure_data(rep, str(tmp_path), cfg)
        meta = json.load(open(paths[1]))
        assert "constraint" in meta
        assert set(meta["constraint"]) == {
            f.name for f in dataclasses.fields(type(rep.constraint))
        }
