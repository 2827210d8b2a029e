import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sevae.datagen import GenSpec, generate
from sevae.errors import ConfigError
from sevae.harness import config as hconfig
from sevae.harness import runs
from sevae.harness.config import FLAG_NAMES, config_from_dict, default_config_text, load_config
from sevae.harness.plots import emit_plots, summarize
from sevae.harness.runs import (ablation_cells, ablation_deltas, ablation_tasks, read_rows,
                                resolve_threads, run_ablation, run_seed, run_sweep, subsample,
                                sweep_tasks)
from sevae.metrics import METRIC_NAMES

SVG = "{http://www.w3.org/2000/svg}"


class TestConfig:
    def test_shipped_default_loads(self):
        cfg = load_config()
        assert [m.kind for m in cfg.models] == ["sevae", "vae", "beta_vae", "factor_vae",
                                                "dip_vae", "beta_tcvae"]
        assert cfg.ablation.flags["anneal"] == [False, True]
        assert load_config("default.json").hash() == cfg.hash()

    def test_round_trip_keeps_hash(self, tiny_dict):
        cfg = config_from_dict(tiny_dict)
        again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
        assert again.hash() == cfg.hash()

    def test_hash_ignores_output_dir_only(self, tiny_dict):
        base = config_from_dict(tiny_dict).hash()
        tiny_dict["output_dir"] = "elsewhere"
        assert config_from_dict(tiny_dict).hash() == base
        tiny_dict["train"]["epochs"] = 3
        assert config_from_dict(tiny_dict).hash() != base

    @pytest.mark.parametrize("mutate", [
        lambda d: d.update(colour=1),
        lambda d: d["train"].update(momentum=0.9),
        lambda d: d.update(models=[]),
        lambda d: d["models"].append({"name": "x", "kind": "gan"}),
        lambda d: d["models"].append(dict(d["models"][0])),
        lambda d: d["models"][0]["params"].update(depth=3),
        lambda d: d.update(sample_sizes=[301]),
        lambda d: d["ablation"].update(sample_sizes=[10**6]),
        lambda d: d.update(seeds=[1, 1]),
        lambda d: d["split"].update(train_frac=1.0),
        lambda d: d["metrics"].update(bins=1),
        lambda d: d["ablation"].update(flags={"beta": [2.0, 2.0]}),
        lambda d: d["ablation"].update(flags={"dropout": [0, 1]}),
        lambda d: d["ablation"].update(flags={"gamma": [1.0]}),
    ])
    def test_invalid(self, tiny_dict, mutate):
        mutate(tiny_dict)
        with pytest.raises(ConfigError):
            config_from_dict(tiny_dict)

    def test_bad_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")
        (tmp_path / "bad.json").write_text("{not json")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "bad.json")
        (tmp_path / "list.json").write_text("[]")
        with pytest.raises(ConfigError):
            load_config(tmp_path / "list.json")

    def test_default_text_is_json(self):
        assert json.loads(default_config_text())["seeds"] == [0, 1, 2]

    def test_ablation_seeds_fall_back(self, tiny_dict):
        del tiny_dict["ablation"]["seeds"]
        assert config_from_dict(tiny_dict).ablation_seeds == [0, 1, 2]

    def test_flag_values_in_default(self):
        assert hconfig.DEFAULT_FLAGS == {"beta": [1.0, 4.0], "gamma": [0.0, 5.0],
                                         "alpha": [0.0, 10.0], "anneal": [False, True]}


@pytest.fixture(scope="module")
def pool():
    return generate(GenSpec(K=2, J=2, N=400, seed=1))


class TestSubsample:
    def test_full_size_is_identity(self, pool):
        assert subsample(pool, pool.n, 7).X.tobytes() == pool.X.tobytes()

    @settings(max_examples=25, deadline=None)
    @given(a=st.integers(1, 400), b=st.integers(1, 400), seed=st.integers(0, 10**6))
    def test_nested(self, pool, a, b, seed):
        small, large = sorted((a, b))
        rows_small = {r.tobytes() for r in subsample(pool, small, seed).X}
        rows_large = {r.tobytes() for r in subsample(pool, large, seed).X}
        assert rows_small <= rows_large

    def test_deterministic(self, pool):
        assert subsample(pool, 50, 3).X.tobytes() == subsample(pool, 50, 3).X.tobytes()
        assert subsample(pool, 50, 3).X.tobytes() != subsample(pool, 50, 4).X.tobytes()

    @pytest.mark.parametrize("n", [0, 401, -1])
    def test_out_of_range(self, pool, n):
        with pytest.raises(ConfigError):
            subsample(pool, n, 0)


class TestSeedsAndThreads:
    def test_run_seed_stable(self):
        assert run_seed("vae-N150-s0", 0) == run_seed("vae-N150-s0", 0)
        assert len({run_seed(k, s) for k in ("a", "b") for s in (0, 1)}) == 4

    def test_env_overrides(self, monkeypatch):
        monkeypatch.setenv(runs.THREADS_ENV, "3")
        assert resolve_threads(1) == 3
        monkeypatch.setenv(runs.THREADS_ENV, "many")
        with pytest.raises(ConfigError):
            resolve_threads()

    def test_defaults_and_bounds(self, monkeypatch):
        monkeypatch.delenv(runs.THREADS_ENV, raising=False)
        assert resolve_threads() == 1
        with pytest.raises(ConfigError):
            resolve_threads(0)


class TestSweep:
    @pytest.fixture
    def tiny(self, tiny_dict):
        return config_from_dict(tiny_dict)

    def test_grid_and_resume(self, tiny, tmp_path):
        rows = run_sweep(tiny, 1, tmp_path)
        assert len(rows) == 12
        assert all(r["status"] == "ok" for r in rows)
        assert [r["run_id"] for r in rows] == [t.run_id for t in sweep_tasks(tiny)]
        csv_bytes = (tmp_path / "results.csv").read_bytes()
        again = run_sweep(tiny, 1, tmp_path)
        assert len(again) == 12
        assert (tmp_path / "results.csv").read_bytes() == csv_bytes

    def test_interrupted_resume_matches_clean_run(self, tiny, tmp_path, monkeypatch):
        clean = tmp_path / "clean"
        run_sweep(tiny, 1, clean)
        expected = (clean / "results.csv").read_bytes()

        crashed = tmp_path / "crashed"
        calls = {"n": 0}
        real_train = runs.train

        def dying_train(*args, **kwargs):
            calls["n"] += 1
            if calls["n"] > 5:
                raise KeyboardInterrupt
            return real_train(*args, **kwargs)

        monkeypatch.setattr(runs, "train", dying_train)
        with pytest.raises(KeyboardInterrupt):
            run_sweep(tiny, 1, crashed)
        monkeypatch.setattr(runs, "train", real_train)
        partial = read_rows(crashed / "results.csv")
        assert len(partial) == 5
        # a crash mid-write leaves a torn last line; resume must discard it
        with (crashed / "results.csv").open("a") as fh:
            fh.write("sevae-N300-s2,sevae,sev")
        run_sweep(tiny, 1, crashed)
        assert (crashed / "results.csv").read_bytes() == expected

    def test_failed_run_recorded(self, tiny, tmp_path, monkeypatch):
        real_train = runs.train

        def flaky(model_cfg, data, tc):
            if data.n == 150 and tc.seed == run_seed("vae-N150-s1", 1):
                raise FloatingPointError("diverged")
            return real_train(model_cfg, data, tc)

        monkeypatch.setattr(runs, "train", flaky)
        rows = run_sweep(tiny, 1, tmp_path)
        bad = [r for r in rows if r["status"] == "error"]
        assert [r["run_id"] for r in bad] == ["vae-N150-s1"]
        assert "diverged" in bad[0]["error"] and bad[0].get("mig", "") == ""
        on_disk = {r["run_id"]: r for r in read_rows(tmp_path / "results.csv")}
        assert on_disk["vae-N150-s1"]["mig"] == ""

    def test_stale_results_rejected(self, tiny_dict, tmp_path):
        tiny_dict.update(sample_sizes=[150], seeds=[0], models=tiny_dict["models"][1:])
        run_sweep(config_from_dict(tiny_dict), 1, tmp_path)
        tiny_dict["train"]["lr"] = 0.01
        with pytest.raises(ConfigError, match="different config"):
            run_sweep(config_from_dict(tiny_dict), 1, tmp_path)


class TestAblation:
    def test_sixteen_distinct_cells(self, tiny_dict):
        cells = ablation_cells()
        assert len({c.label for c in cells}) == 16
        tasks = ablation_tasks(config_from_dict(tiny_dict))
        assert len(tasks) == 16 and len({t.run_id for t in tasks}) == 16
        # common random numbers within a block
        assert len({t.train_seed for t in tasks}) == 1
        params = [t.model_config for t in tasks]
        assert {(p.beta, p.gamma, p.alpha, p.anneal) for p in params} == {
            (b, g, a, k) for b in (1.0, 4.0) for g in (0.0, 5.0) for a in (0.0, 10.0)
            for k in (False, True)}

    def _fake_rows(self, seeds=(0, 1)):
        # metric = 1*beta + 2*gamma + 0*alpha + 3*anneal + seed-specific offset
        rows = []
        for seed in seeds:
            for cell in ablation_cells():
                on = cell.active
                value = on["beta"] + 2 * on["gamma"] + 3 * on["anneal"] + 0.1 * seed
                rows.append({"N": 150, "seed": seed, "status": "ok",
                             **{k: int(v) for k, v in on.items()},
                             **{m: value for m in METRIC_NAMES}})
        return rows

    def test_pairing(self):
        deltas = {(d.component, d.metric): d for d in ablation_deltas(self._fake_rows())}
        for comp, effect in zip(FLAG_NAMES, (1.0, 2.0, 0.0, 3.0)):
            d = deltas[(comp, "mig")]
            assert d.n_pairs == 16
            assert d.mean == pytest.approx(effect, abs=1e-12)
            assert d.sd == pytest.approx(0.0, abs=1e-12)

    def test_sd_uses_ddof_one(self):
        rows = self._fake_rows(seeds=(0,))
        for r in rows:
            if r["gamma"] and r["beta"]:
                r["mig"] += 1.0
        d = next(d for d in ablation_deltas(rows, ["gamma"]) if d.metric == "mig")
        assert d.n_pairs == 8
        vals = [2.0] * 4 + [3.0] * 4
        assert d.sd == pytest.approx(np.std(vals, ddof=1))

    def test_missing_partner_skips_pair(self):
        rows = self._fake_rows(seeds=(0,))
        rows[0]["status"] = "error"
        d = next(d for d in ablation_deltas(rows, ["beta"]) if d.metric == "sap")
        assert d.n_pairs == 7

    @pytest.mark.parametrize("components", [["beta", "beta"], ["dropout"]])
    def test_bad_components(self, components):
        with pytest.raises(ConfigError):
            ablation_deltas([], components)

    def test_degenerate_flag_rejected_before_training(self, tiny_dict, tmp_path):
        cfg = config_from_dict(tiny_dict)
        cfg.ablation.flags["alpha"] = [3.0, 3.0]
        with pytest.raises(ConfigError, match="itself"):
            run_ablation(cfg, 1, tmp_path)
        assert not (tmp_path / "ablation_runs.csv").exists()

    @pytest.mark.slow
    def test_end_to_end(self, tiny_dict, tmp_path):
        tiny_dict["train"]["epochs"] = 1
        deltas = run_ablation(config_from_dict(tiny_dict), 1, tmp_path, ["gamma", "anneal"])
        assert len(read_rows(tmp_path / "ablation_runs.csv")) == 16
        table = read_rows(tmp_path / "ablation.csv")
        assert len(table) == len(deltas) == 2 * len(METRIC_NAMES)
        assert {r["n_pairs"] for r in table} == {"8"}


class TestPlots:
    def _rows(self, seeds=(0, 1, 2)):
        rng = np.random.default_rng(0)
        return [{"model": model, "N": n, "seed": s, "status": "ok",
                 **{m: float(rng.uniform()) for m in METRIC_NAMES}}
                for model in ("sevae", "vae & co") for n in (150, 300) for s in seeds]

    def test_six_wellformed_files(self, tmp_path):
        paths = emit_plots(self._rows(), tmp_path)
        assert sorted(p.name for p in paths) == sorted(f"metric_{m}.svg" for m in METRIC_NAMES)
        for p in paths:
            root = ET.parse(p).getroot()
            assert root.tag == f"{SVG}svg"
            assert len(root.findall(f"{SVG}polyline")) == 2

    def test_single_seed_zero_width_band(self, tmp_path):
        path = emit_plots(self._rows(seeds=(0,)), tmp_path, ["mig"])[0]
        for poly in ET.parse(path).getroot().findall(f"{SVG}polygon"):
            pts = poly.get("points").split()
            upper, lower = pts[:len(pts) // 2], pts[len(pts) // 2:][::-1]
            assert upper == lower

    def test_summary_statistics(self):
        rows = self._rows()
        series = summarize(rows, "sap")["sevae"]
        vals = [r["sap"] for r in rows if r["model"] == "sevae" and r["N"] == 150]
        assert series[0] == (150, pytest.approx(np.mean(vals)),
                             pytest.approx(np.std(vals, ddof=1)))

    def test_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            emit_plots([], tmp_path)
        one_size = [r for r in self._rows() if r["N"] == 150]
        with pytest.raises(ConfigError, match="2 sample sizes"):
            emit_plots(one_size, tmp_path)
        failed = [dict(r, status="error") for r in self._rows()]
        with pytest.raises(ConfigError):
            emit_plots(failed, tmp_path)
