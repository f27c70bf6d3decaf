"""Command-line front end: config handling, presets, data products, exit codes."""

import json
import math

import numpy as np
import pytest

from omjump.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_STATS,
    EXIT_UNCONVERGED,
    PRESETS,
    ConfigError,
    RunConfig,
    load_config,
    main,
)


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(kw))
    return str(path)


SMALL = dict(task="steady", detuning=0.3, g0=0.2, alpha_L=0.1,
             kappa_in=0.2, kappa_out=0.2, gamma_m=0.02,
             n_photon_max=4, n_phonon_max=4, seed=7)


class TestConfig:
    def test_round_trip(self):
        cfg = RunConfig.from_dict(SMALL)
        again = RunConfig.from_dict(cfg.to_dict())
        assert cfg == again

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown config keys"):
            RunConfig.from_dict({"task": "steady", "coupling": 1.0})

    def test_preset_overridable(self):
        cfg = load_config(None, "fig2a", {"task": "steady", "alpha_L": 0.01})
        assert cfg.alpha_L == 0.01
        assert cfg.g0 == 0.5

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="preset"):
            load_config(None, "fig99", {})


class TestPresets:
    def test_fig2a_caption_parameters(self):
        p = PRESETS["fig2a"]
        assert p["detuning"] == pytest.approx(1.0 - 0.5 ** 2)   # Omega - g0^2/Omega
        assert p["g0"] == 0.5
        assert p["alpha_L"] == 5e-3
        assert p["gamma_m"] == 1e-3
        assert p["kappa_in"] + p["kappa_out"] == pytest.approx(1.0 / 8.0)
        assert p["kappa_in"] == p["kappa_out"]
        assert p["n_th"] == 0.0

    def test_fig2d_bad_cavity(self):
        p = PRESETS["fig2d"]
        assert p["kappa_in"] + p["kappa_out"] == pytest.approx(5.0)
        assert p["g0"] / (p["kappa_in"] + p["kappa_out"]) == pytest.approx(0.1)

    def test_fig5_caption_parameters(self):
        p = PRESETS["fig5"]
        g0 = 1.0 / math.sqrt(2.0)
        assert p["g0"] == pytest.approx(g0)
        assert p["detuning"] == pytest.approx(-2 * g0 ** 2)
        assert p["kappa_in"] + p["kappa_out"] == pytest.approx(g0 / 4.0)
        assert p["gamma_m"] == 1e-3
        assert p["cascade_n"] == 2

    def test_fig7a_caption_parameters(self):
        p = PRESETS["fig7a"]
        assert p["detuning"] == pytest.approx(-3 * 0.5 ** 2)
        assert p["g0"] == 0.5
        assert p["g0"] / (p["kappa_in"] + p["kappa_out"]) == pytest.approx(4.0)
        assert p["cascade_n"] == 3
        assert p["n_photon_max"] >= 8


class TestMain:
    def test_no_arguments_prints_usage(self, capsys):
        assert main([]) == EXIT_OK
        out = capsys.readouterr().out
        assert "usage" in out.lower()

    def test_config_error_exit(self, tmp_path):
        path = write_config(tmp_path, task="steady", bogus=1)
        assert main(["run", path]) == EXIT_CONFIG

    def test_invalid_params_exit(self, tmp_path):
        path = write_config(tmp_path, **{**SMALL, "eta": 2.0})
        assert main(["run", path]) == EXIT_CONFIG

    def test_steady_task_products(self, tmp_path):
        path = write_config(tmp_path, **SMALL, out=str(tmp_path / "out"))
        assert main(["run", path]) == EXIT_OK
        payload = json.loads((tmp_path / "out" / "steady.json").read_text())
        assert payload["config"]["g0"] == 0.2
        assert payload["results"]["nbar"] > 0
        pops = (tmp_path / "out" / "populations.csv").read_text().splitlines()
        assert pops[0].startswith("# omjump")
        assert "config:" in pops[1]

    def test_g2_task(self, tmp_path):
        cfg = dict(SMALL, task="g2", tau_points=30, tau_max=20.0,
                   out=str(tmp_path / "g2out"))
        path = write_config(tmp_path, **cfg)
        assert main(["run", path]) == EXIT_OK
        rows = [l for l in (tmp_path / "g2out" / "g2.csv").read_text().splitlines()
                if not l.startswith("#")]
        assert rows[0] == "tau,g2"
        assert len(rows) == 32   # tau = 0 plus the log grid

    def test_trajectories_task(self, tmp_path):
        cfg = dict(SMALL, task="trajectories", t_total=30.0, dt=0.02, n_traj=2,
                   initial="vacuum", out=str(tmp_path / "tr"))
        path = write_config(tmp_path, **cfg)
        assert main(["run", path]) == EXIT_OK
        assert (tmp_path / "tr" / "traj_000.csv").exists()
        assert (tmp_path / "tr" / "traj_001.csv").exists()
        summary = json.loads((tmp_path / "tr" / "trajectories.json").read_text())
        assert summary["results"]["n_traj"] == 2

    def test_counting_task_deterministic(self, tmp_path):
        cfg = dict(SMALL, task="counting", t_total=800.0, n_traj=12,
                   t_s_min=2.0, t_s_max=40.0, t_s_points=4,
                   out=str(tmp_path / "c1"))
        path = write_config(tmp_path, **cfg)
        assert main(["run", path]) == EXIT_OK
        cfg["out"] = str(tmp_path / "c2")
        path2 = write_config(tmp_path, **cfg)
        assert main(["run", path2]) == EXIT_OK
        for name in ("detections.csv", "fano_curve.csv", "histogram.csv"):
            a = (tmp_path / "c1" / name).read_text()
            b = (tmp_path / "c2" / name).read_text()
            assert a.replace("c1", "") == b.replace("c2", "")

    def test_counting_insufficient_statistics(self, tmp_path):
        cfg = dict(SMALL, task="counting", t_total=5.0, n_traj=1,
                   t_s_min=2.0, t_s_max=4.0, t_s_points=2,
                   out=str(tmp_path / "short"))
        path = write_config(tmp_path, **cfg)
        assert main(["run", path]) == EXIT_STATS

    def test_cascade_map_task(self, tmp_path):
        cfg = dict(task="cascade-map", cascade_n=2, g0=1 / math.sqrt(2),
                   g0_over_kappa=4.0, alpha_min=0.05, alpha_max=0.4,
                   alpha_points=8, g0_min=0.4, g0_max=1.0, g0_points=5,
                   out=str(tmp_path / "map"))
        path = write_config(tmp_path, **cfg)
        assert main(["run", path]) == EXIT_OK
        payload = json.loads((tmp_path / "map" / "regime_map.json").read_text())
        assert payload["results"]["cells"] == 40
        assert payload["results"]["window_alpha_lo"] < 0.15 < \
            payload["results"]["window_alpha_hi"]

    def test_unconverged_exit_and_override(self, tmp_path):
        # an absurdly tight tail tolerance forces the convergence flag
        cfg = dict(SMALL, task="counting", t_total=800.0, n_traj=12,
                   t_s_min=2.0, t_s_max=40.0, t_s_points=4, tail_tol=1e-30,
                   out=str(tmp_path / "u1"))
        path = write_config(tmp_path, **cfg)
        assert main(["run", path]) == EXIT_UNCONVERGED
        assert main(["run", path, "--allow-unconverged"]) == EXIT_OK

    def test_cli_overrides(self, tmp_path):
        path = write_config(tmp_path, **SMALL)
        out = tmp_path / "ov"
        code = main(["run", path, "--out", str(out), "--set", "alpha_L=0.05"])
        assert code == EXIT_OK
        stored = json.loads((out / "config.json").read_text())
        assert stored["alpha_L"] == 0.05
