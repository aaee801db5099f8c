import numpy as np
import pytest

from grader_audit.data import (
    Dataset,
    DatasetKind,
    FactorTable,
    GradeRecord,
    GraderType,
    dataset_from_grade_records,
)
from grader_audit.design import preset
from grader_audit.inference import SamplerConfig, sample
from grader_audit.simulate import default_scenario, simulate


def tiny_scores_dataset(n_items=12, seed=0):
    ds, _ = simulate(default_scenario("q1_2", seed=seed))
    return ds


@pytest.fixture(scope="session")
def q1_2_dataset():
    ds, truth = simulate(default_scenario("q1_2", seed=101))
    return ds, truth


@pytest.fixture(scope="session")
def q1_2_fit(q1_2_dataset):
    ds, truth = q1_2_dataset
    cfg = SamplerConfig(chains=2, warmup_iterations=300, sampling_iterations=300, seed=5)
    return sample(preset("q1_2"), ds, cfg)


@pytest.fixture(scope="session")
def q5_dataset():
    ds, truth = simulate(default_scenario("q5", seed=101))
    return ds, truth


@pytest.fixture(scope="session")
def q5_fit(q5_dataset):
    ds, truth = q5_dataset
    cfg = SamplerConfig(chains=2, warmup_iterations=300, sampling_iterations=300, seed=5)
    return sample(preset("q5"), ds, cfg)


@pytest.fixture(scope="session")
def q4_small():
    """Shrunken item-level scenario for fast agreement tests."""
    import dataclasses

    cfg = default_scenario("q4", seed=77)
    cfg = dataclasses.replace(cfg, counts={"n_items": 4, "n_repeats": 5})
    ds, truth = simulate(cfg)
    cfg_s = SamplerConfig(chains=2, warmup_iterations=300, sampling_iterations=300, seed=9)
    draws = sample(preset("q4"), ds, cfg_s)
    return ds, truth, draws


def two_grader_empty_dataset(k=3):
    """Dataset shell with factors but no records (prior-only models)."""
    return Dataset(
        kind=DatasetKind.SCORES,
        records=(),
        factors={
            "grader": FactorTable("grader", ("human_1", "bot_1")),
            "llm": FactorTable("llm", ("llm_a", "llm_b")),
        },
        n_categories=k,
        grader_types={"human_1": GraderType.HUMAN, "bot_1": GraderType.AUTOGRADER},
    )
