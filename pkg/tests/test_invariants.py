"""Cross-module behavior on a mid-size synthetic corpus.

These checks need genuinely trained models: the flow must push latents of
anomalous traffic outside the base distribution, and synthesized
pseudo-anomalies must land away from the normal latent cloud.
"""
import numpy as np
import pytest

from flowgate.corpus import make_synthetic_corpus
from flowgate.dataset import values_matrix
from flowgate.extractor import ExtractorConfig, extractor_from_checkpoint, train_extractor
from flowgate.flow import FlowConfig, FlowModel, train_flow
from flowgate.synthesis import NoiseSpec, SynthesisConfig, synthesize


@pytest.fixture(scope="module")
def trained_stack():
    normals, anomalies = make_synthetic_corpus(seed=31, n_normal=1300, n_anomaly=200)
    X_train = values_matrix(normals[:1100])
    X_hold = values_matrix(normals[1100:])
    X_anom = values_matrix(anomalies)
    ext_ckpt = train_extractor(X_train, ExtractorConfig(epochs=15), seed=51)
    extractor = extractor_from_checkpoint(ext_ckpt)
    z_train = extractor.encode(X_train)
    z_hold = extractor.encode(X_hold)
    z_anom = extractor.encode(X_anom)
    flow_cfg = FlowConfig(epochs=20)
    flow = FlowModel.create(flow_cfg, seed=52)
    train_flow(flow, z_train, flow_cfg, seed=52)
    return flow, z_train, z_hold, z_anom


def test_anomalous_latents_fall_outside_base_distribution(trained_stack):
    # held-out normals map near the base distribution; anomalies do not
    flow, _, z_hold, z_anom = trained_stack
    c_hold, _ = flow.normalize(z_hold)
    c_anom, _ = flow.normalize(z_anom)
    normal_sq = np.mean(np.sum(c_hold ** 2, axis=1))
    anomaly_sq = np.mean(np.sum(c_anom ** 2, axis=1))
    assert normal_sq < anomaly_sq


def mean_pairwise(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean(np.linalg.norm(a[:, None, :] - b[None, :, :], axis=2)))


@pytest.mark.parametrize("mu", [-5.0, 5.0, -9.0, -25.0])
def test_pseudo_anomalies_separate_from_normals(trained_stack, mu):
    flow, z_train, _, _ = trained_stack
    spec = NoiseSpec(mu=mu, sigma=5.0, seed=77)
    pseudo = synthesize(flow, z_train, spec, SynthesisConfig(ratio=0.5))
    normals = z_train[:200]
    intra = mean_pairwise(normals, z_train[200:400])
    cross = mean_pairwise(pseudo[:200], normals)
    assert cross > intra


def test_flow_training_leaves_inputs_unchanged(trained_stack):
    flow, z_train, _, _ = trained_stack
    copy = z_train.copy()
    flow.normalize(z_train)
    np.testing.assert_array_equal(z_train, copy)
