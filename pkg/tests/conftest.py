import pytest

from flowgate.corpus import make_synthetic_corpus
from flowgate.dataset import write_dataset
from flowgate.pipeline import PipelineConfig


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Small train/test CSVs for fast pipeline-level tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    normals, anomalies = make_synthetic_corpus(seed=21, n_normal=360, n_anomaly=60)
    train_csv = root / "train.csv"
    test_csv = root / "test.csv"
    write_dataset(normals[:300], train_csv)
    write_dataset(normals[300:] + anomalies, test_csv)
    return train_csv, test_csv


def tiny_pipeline_config(workdir, train_csv, test_csv, **overrides) -> PipelineConfig:
    base = dict(
        workdir=str(workdir), train_csv=str(train_csv), test_csv=str(test_csv),
        seed=3, noise_grid=((0.0, 1.0),), ratio=0.5,
        latent_dim=16, encoder_widths=(1600, 64, 16),
        disc_widths=(1600, 32, 16, 1), classifier_widths=(16, 16, 8, 1),
        flow_blocks=4, flow_hidden=16, epochs=4, batch_size=64, patience=5)
    base.update(overrides)
    return PipelineConfig(**base)
