"""Experiment documents: parsing, validation and overrides."""

import copy

import pytest

from app.utils.errors import ConfigError
from app.utils.experiment import ExperimentConfig, load_experiment


def test_load_experiment(experiment_document, write_experiment):
    experiment = load_experiment(write_experiment(experiment_document))
    assert experiment.n_list == (25,)
    assert experiment.events == 20000
    assert experiment.seed == 7
    assert experiment.probes == (0.5, 1.0)
    assert experiment.fluid.initial == "fresh"
    assert experiment.diffusion.reflection is None
    assert [sys.n for sys in experiment.systems()] == [25]


def test_round_trip(experiment_document):
    document = dict(experiment_document, clocks={"theta": [0.0, 1.0]}, limit={"u_max": 6.0, "points": 11})
    experiment = ExperimentConfig.from_dict(document)
    assert ExperimentConfig.from_dict(experiment.to_dict()) == experiment


def test_every_problem_is_reported(experiment_document):
    document = copy.deepcopy(experiment_document)
    document["model"]["regions"][0]["mu"] = -1.0
    document.update(n_list=[0, 4], events=5, seed=-1, colour="blue", diffusion={"step": 0.2}, fluid={"initial": "late"})
    del document["service"]
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(document)
    errors = "\n".join(info.value.errors)
    for expected in [
        "model.regions[0].mu",
        "service is required",
        "n_list[0]",
        "events must be an integer >= 10000",
        "seed must be an unsigned 64-bit integer",
        "colour is not a known field",
        "diffusion.step",
        "fluid.initial",
    ]:
        assert expected in errors


def test_bad_renewal_is_named(experiment_document):
    document = dict(experiment_document, arrival={"kind": "erlang", "k": 0})
    with pytest.raises(ConfigError, match="arrival: erlang.k"):
        ExperimentConfig.from_dict(document)


def test_config_error_is_a_value_error():
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict([])


def test_overrides(experiment_document):
    experiment = ExperimentConfig.from_dict(experiment_document)
    updated = experiment.with_overrides(seed=5, events=None, n_list=[4, 9])
    assert updated.seed == 5
    assert updated.events == experiment.events
    assert updated.n_list == (4, 9)
    with pytest.raises(ConfigError, match="events"):
        experiment.with_overrides(events=10)


def test_missing_and_broken_files(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_experiment(str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_experiment(str(broken))
