"""Pytest configuration and fixtures for tests."""
from typing import Dict

import numpy as np
import pytest

from app.models.flow import FeatureMatrix
from app.models.gen_config import GenConfig
from app.models.labels import Category
from app.models.run_config import RunConfig, TrainConfig
from app.services.dataset_service import DatasetService
from app.services.oracle_service import AnnotationConfig, OracleService
from app.services.tracegen_service import TraceGenService


TEST_SEED = 1234

SMALL_COUNTS: Dict[Category, int] = {
    Category.NORMAL: 40,
    Category.REUSE_ONLY: 6,
    Category.DOWNGRADE_ONLY: 6,
    Category.LIFETIME_ONLY: 6,
    Category.REUSE_DOWNGRADE: 2,
    Category.REUSE_LIFETIME: 3,
    Category.DOWNGRADE_LIFETIME: 2,
    Category.REUSE_DOWNGRADE_LIFETIME: 2,
}


def small_gen_config(seed: int = TEST_SEED, **overrides) -> GenConfig:
    """Generator config with a few traces per category."""
    return GenConfig(category_counts=dict(SMALL_COUNTS), seed=seed, **overrides)


def fast_train_config(seed: int = TEST_SEED, **overrides) -> TrainConfig:
    """Short training runs for unit tests."""
    values = {"optimizer": "adam", "learning_rate": 5e-3, "batch_size": 64, "max_epochs": 30, "patience": 5,
              "seed": seed}
    values.update(overrides)
    return TrainConfig(**values)


@pytest.fixture(scope="function")
def gen_config() -> GenConfig:
    return small_gen_config()


@pytest.fixture(scope="function")
def generator(gen_config: GenConfig) -> TraceGenService:
    return TraceGenService(gen_config)


@pytest.fixture(scope="function")
def oracle() -> OracleService:
    return OracleService(AnnotationConfig())


@pytest.fixture(scope="module")
def small_corpus():
    """
    Small corpus covering every category, with its oracle labels.
    Shared per module since generation is deterministic.
    """
    config = small_gen_config()
    corpus = TraceGenService(config).generate_corpus()
    labeled = OracleService(AnnotationConfig.from_gen_config(config)).annotate_corpus(corpus)
    return config, corpus, labeled


@pytest.fixture(scope="session")
def desk_corpus():
    """
    The 21,000-trace desk corpus and its labels.
    Built once per session for the integration tests.
    """
    config = GenConfig.desk_scale(seed=TEST_SEED)
    corpus = TraceGenService(config).generate_corpus()
    labeled = OracleService(AnnotationConfig.from_gen_config(config)).annotate_corpus(corpus)
    return config, corpus, labeled


@pytest.fixture(scope="module")
def flow_table():
    """Synthetic flow-like fixture with 10,000 chronological rows."""
    return DatasetService().synthesize_flows(10_000, seed=TEST_SEED)


@pytest.fixture(scope="function")
def separable_matrix() -> FeatureMatrix:
    """
    Standardized-looking matrix whose three intents depend on single columns.
    """
    rng = np.random.default_rng(TEST_SEED)
    values = rng.normal(size=(600, 5))
    labels = {
        "reuse": (values[:, 0] > 0.8).astype(np.int64),
        "downgrade": (values[:, 1] > 0.5).astype(np.int64),
        "lifetime": (values[:, 2] > 1.0).astype(np.int64),
    }
    return FeatureMatrix(values=values, row_ids=np.arange(600), columns=[f"f{i}" for i in range(5)],
                         labels=labels)


@pytest.fixture(scope="function")
def tiny_run_config() -> RunConfig:
    """
    Run config small enough for CLI round trips.
    """
    return RunConfig(
        seed=TEST_SEED,
        gen=small_gen_config().model_dump(mode="json"),
        train={"max_epochs": 3, "batch_size": 64, "patience": 2},
        iforest={"n_trees": 10, "subsample": 32},
        shift_traces=20,
        flow_rows=600,
        trace_shift_factors=[3.0],
        flow_shift_factors=[2.0],
    )
