import json

import numpy as np
import pytest

from tsarag.agents import TaskKind, TaskResponse, TraceStep
from tsarag.core_data import SeriesMatrix
from tsarag.dataio import (
    ExperimentConfig,
    SyntheticSpec,
    derive_seed,
    gen_synthetic,
    load_pool,
    read_csv,
    read_labels,
    read_mask_csv,
    read_response,
    save_pool,
    write_csv,
    write_labels,
    write_mask_csv,
    write_results,
)
from tsarag.errors import InvalidSpec, ParseError, RaggedRows
from tsarag.missingness import point_mask
from tsarag.pool import PromptPool, Projection


class TestCsv:
    def test_shape_and_orientation(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3,4\n5,6\n")
        data, mask = read_csv(path)
        assert data.n_series == 2 and data.n_steps == 3
        np.testing.assert_array_equal(data.values, [[1, 3, 5], [2, 4, 6]])
        assert mask.flags.all()

    def test_empty_cell_becomes_missing(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("a,b\n1,2\n3,\n5,6\n")
        data, mask = read_csv(path)
        assert mask.flags[1, 1] == 0
        assert data.values[1, 1] == 0.0
        assert mask.flags.sum() == 5

    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(0)
        data = SeriesMatrix(values=rng.standard_normal((3, 7)) * 1e3,
                            series_ids=("x", "y", "z"))
        path = tmp_path / "rt.csv"
        write_csv(data, path)
        back, _ = read_csv(path)
        np.testing.assert_array_equal(back.values, data.values)
        assert back.series_ids == data.series_ids

    def test_round_trip_with_mask(self, tmp_path):
        rng = np.random.default_rng(1)
        data = SeriesMatrix(values=rng.standard_normal((2, 9)),
                            series_ids=("x", "y"))
        mask = point_mask(2, 9, 0.3, seed=2)
        path = tmp_path / "m.csv"
        write_csv(data, path, mask=mask)
        back, back_mask = read_csv(path)
        np.testing.assert_array_equal(back_mask.flags, mask.flags)
        observed = mask.flags.astype(bool)
        np.testing.assert_array_equal(back.values[observed], data.values[observed])

    def test_ragged_rows_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3\n")
        with pytest.raises(RaggedRows):
            read_csv(path)

    def test_parse_error_carries_position(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n3,oops\n")
        with pytest.raises(ParseError) as err:
            read_csv(path)
        assert err.value.line == 3
        assert err.value.column == 2

    def test_mask_csv_round_trip(self, tmp_path):
        mask = point_mask(4, 11, 0.4, seed=3)
        path = tmp_path / "mask.csv"
        write_mask_csv(mask, [f"s{i}" for i in range(4)], path)
        np.testing.assert_array_equal(read_mask_csv(path).flags, mask.flags)

    def test_labels_round_trip(self, tmp_path):
        labels = np.array([0, 1, 1, 0, 2])
        path = tmp_path / "labels.csv"
        write_labels(labels, path)
        np.testing.assert_array_equal(read_labels(path), labels)


def tiny_response():
    return TaskResponse(
        kind=TaskKind.FORECAST,
        payload={
            "t": np.array([5, 6]),
            "series_id": np.array(["a", "a"], dtype=object),
            "prediction": np.array([1.25, -0.5]),
            "truth": np.array([1.0, 0.0]),
        },
        metrics={"MAE": 0.375, "RMSE": 0.3952847075210474, "MAPE": 25.0},
        trace=(
            TraceStep(thought="got request", action="route", observation="kind=Forecast"),
            TraceStep(thought="fit", action="train", observation="2 epochs"),
            TraceStep(thought="wrap", action="synthesize", observation="MAE=0.375"),
        ),
    )


class TestResults:
    def test_write_results_files(self, tmp_path):
        resp = tiny_response()
        out = write_results(resp, tmp_path / "run")
        assert (out / "response.json").is_file()
        assert (out / "payload.csv").is_file()
        header = (out / "payload.csv").read_text().splitlines()[0]
        assert header == "t,series_id,prediction,truth"

    def test_response_round_trip(self, tmp_path):
        resp = tiny_response()
        out = write_results(resp, tmp_path / "run")
        reloaded = read_response(out / "response.json")
        assert resp.equals(reloaded)

    def test_config_round_trip(self, tmp_path):
        cfg = ExperimentConfig(
            task="impute", data_path="d.csv", out_dir="o", seed=7,
            missing={"pattern": "block", "rate": 0.3, "mean_block_len": 5},
        )
        again = ExperimentConfig.from_json(cfg.to_json())
        assert again == cfg

    def test_config_rejects_unknown_fields(self):
        with pytest.raises(InvalidSpec):
            ExperimentConfig.from_dict({"task": "forecast", "data_path": "x",
                                        "out_dir": "o", "seed": 1, "bogus": 2})

    def test_config_requires_seed(self):
        with pytest.raises(InvalidSpec):
            ExperimentConfig.from_dict({"task": "forecast", "data_path": "x",
                                        "out_dir": "o"})


class TestPoolSerialization:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(4)
        pool = PromptPool.random(5, 3, 4, rng)
        proj = Projection.random(2, 3, 4, rng)
        path = tmp_path / "pool.json"
        save_pool(pool, proj, path)
        pool2, proj2 = load_pool(path)
        np.testing.assert_array_equal(pool2.keys, pool.keys)
        np.testing.assert_array_equal(pool2.values, pool.values)
        np.testing.assert_array_equal(proj2.weight, proj.weight)

    def test_version_tag_checked(self, tmp_path):
        path = tmp_path / "pool.json"
        path.write_text(json.dumps({"version": "other"}))
        with pytest.raises(InvalidSpec):
            load_pool(path)


class TestGenSynthetic:
    def test_seasonal_components_periodic_when_noiseless(self):
        spec = SyntheticSpec(
            generator="seasonal_sines", n_series=2, n_steps=200, noise=0.0,
            seed=0, params={"periods": (24.0, 10.0), "amplitudes": (1.0, 0.0),
                            "period_spread": 0.0},
        )
        data, labels = gen_synthetic(spec)
        assert labels is None
        np.testing.assert_allclose(
            data.values[:, 24:], data.values[:, :-24], atol=1e-9
        )

    def test_second_component_periodicity(self):
        spec = SyntheticSpec(
            generator="seasonal_sines", n_series=1, n_steps=100, noise=0.0,
            seed=0, params={"periods": (24.0, 10.0), "amplitudes": (0.0, 1.0),
                            "period_spread": 0.0},
        )
        data, _ = gen_synthetic(spec)
        np.testing.assert_allclose(data.values[:, 10:], data.values[:, :-10],
                                   atol=1e-9)

    def test_ar1_spike_count_and_placement(self):
        spec = SyntheticSpec(generator="ar1_spikes", n_series=3, n_steps=2000,
                             noise=1.0, seed=5,
                             params={"n_spikes": 10, "spike_len": 6})
        data, labels = gen_synthetic(spec)
        runs = np.flatnonzero(np.diff(np.concatenate([[0], labels, [0]])) == 1)
        assert len(runs) == 10
        assert labels[: int(0.8 * 2000)].sum() == 0
        assert set(labels[labels == 1]) == {1}

    def test_regime_switch_boundaries(self):
        spec = SyntheticSpec(generator="regime_switch", n_series=2,
                             n_steps=600, noise=0.0, seed=1,
                             params={"segment_len": 150})
        data, labels = gen_synthetic(spec)
        changes = np.flatnonzero(np.diff(labels)) + 1
        np.testing.assert_array_equal(changes, [150, 300, 450])

    def test_determinism(self):
        spec = SyntheticSpec(generator="ar1_spikes", n_series=2, n_steps=500,
                             noise=1.0, seed=9, params={"n_spikes": 3})
        a, la = gen_synthetic(spec)
        b, lb = gen_synthetic(spec)
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(la, lb)

    def test_unknown_generator_rejected(self):
        with pytest.raises(InvalidSpec):
            SyntheticSpec(generator="white_noise")


class TestDeriveSeed:
    def test_stable_and_distinct(self):
        assert derive_seed(7, "pool") == derive_seed(7, "pool")
        assert derive_seed(7, "pool") != derive_seed(7, "mask")
        assert derive_seed(7, "pool") != derive_seed(8, "pool")
