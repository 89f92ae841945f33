import csv

import numpy as np
import pytest

from fedvid import experiment, labeling, mapping, model as mdl, plates, scenario
from fedvid.labeling import DatasetMode


def _small_world():
    return scenario.WorldConfig(seed=0, num_vehicles=15, duration=30.0, weather="light_haze")


def test_config_rejects_overlapping_seeds():
    with pytest.raises(ValueError):
        experiment.ExperimentConfig(train_seeds=(5, 6), eval_seed=5)


def test_autolabel_rates_bounds():
    cct = plates.default_conversion_table()
    state, run = experiment.simulate_and_label(_small_world(), 301, cct)
    with_rate, without_rate = experiment.autolabel_rates(state, run, cct)
    assert 0.0 <= without_rate <= with_rate <= 1.0


def test_predict_run_covers_every_sender():
    cct = plates.default_conversion_table()
    _, run = experiment.simulate_and_label(_small_world(), 303, cct)
    params = mdl.init_model(mdl.ModelConfig(), np.random.default_rng(0))
    preds = experiment.predict_run(params, run, mapping.MappingConfig())
    assert len(preds) == len(run.observations)
    for p, obs in zip(preds, run.observations):
        assert set(p.entries) == {m.id for m in obs.messages}
        for inside, box in p.entries.values():
            assert 0.0 < inside < 1.0
            assert box is None or 0 <= box < len(obs.front_boxes)


def test_evaluate_model_deterministic():
    cct = plates.default_conversion_table()
    _, run = experiment.simulate_and_label(_small_world(), 305, cct)
    params = mdl.init_model(mdl.ModelConfig(), np.random.default_rng(0))
    a = experiment.evaluate_model(params, run, mapping.MappingConfig())
    b = experiment.evaluate_model(params, run, mapping.MappingConfig())
    assert a == b


def test_split_shards_disjoint_and_complete():
    arrays = labeling.TrainingArrays(X=np.arange(30).reshape(10, 3).astype(float),
                                     FB=np.zeros((10, 4)), Y=np.zeros((10, 5)))
    shards = experiment.split_shards(arrays, 3)
    assert sum(s.X.shape[0] for s in shards) == 10
    seen = np.concatenate([s.X[:, 0] for s in shards])
    assert sorted(seen.tolist()) == sorted(arrays.X[:, 0].tolist())


def test_run_experiment_writes_reports(tmp_path):
    cfg = experiment.ExperimentConfig(
        train_seeds=(401, 402), eval_seed=403,
        world=_small_world(),
        dataset_modes=(DatasetMode.AL, DatasetMode.MANUAL),
        training_modes=("central",),
        epochs=3,
    )
    rows = experiment.run_experiment(cfg, tmp_path)
    assert len(rows) == 2
    with open(tmp_path / "report.csv") as f:
        report = list(csv.DictReader(f))
    assert [r["dataset"] for r in report] == ["AL", "MANUAL"]
    for row in report:
        assert 0.0 <= float(row["cr_total"]) <= 1.0
        num = int(row["p_correctly"]) + int(row["p_outside"])
        den = int(row["n_inside"]) + int(row["n_outside"])
        assert float(row["cr_total"]) == pytest.approx(num / den, abs=1e-5)
    with open(tmp_path / "autolabel.csv") as f:
        auto = list(csv.DictReader(f))
    assert [int(r["scenario_seed"]) for r in auto] == [401, 402]
    for r in auto:
        assert 0.0 <= float(r["rate_without_conversion"]) <= float(r["rate_with_conversion"])


def test_run_experiment_repeatable(tmp_path):
    cfg = experiment.ExperimentConfig(
        train_seeds=(411,), eval_seed=412, world=_small_world(),
        dataset_modes=(DatasetMode.AL,), training_modes=("central",), epochs=2,
    )
    a = experiment.run_experiment(cfg, tmp_path / "a")
    b = experiment.run_experiment(cfg, tmp_path / "b")
    assert a == b
    assert (tmp_path / "a" / "report.csv").read_text() == (tmp_path / "b" / "report.csv").read_text()


def test_unknown_training_mode_rejected(tmp_path):
    cfg = experiment.ExperimentConfig(
        train_seeds=(421,), eval_seed=422, world=_small_world(),
        dataset_modes=(DatasetMode.AL,), training_modes=("quantum",), epochs=1,
    )
    with pytest.raises(ValueError):
        experiment.run_experiment(cfg, tmp_path)
