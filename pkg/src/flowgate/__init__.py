"""Semi-supervised anomaly traffic detection trained on normal packets only.

Three trained stages: an adversarial reconstruction model whose encoder
embeds packets, a bidirectional coupling flow that normalizes those latents,
and a classifier that separates normal latents from flow-synthesized
pseudo-anomalies. Inference needs only the encoder and the classifier.
"""

__version__ = "0.1.0"

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .classifier import ClassifierConfig, ClassifierModel, train_classifier
from .corpus import make_synthetic_corpus
from .dataset import read_dataset, write_dataset
from .extractor import ExtractorConfig, FeatureExtractor, train_extractor
from .flow import FlowConfig, FlowModel, train_flow
from .metrics import EvalReport, ScoredSample, auroc, evaluate
from .packets import EncodedPacket, Label
from .pipeline import InferenceEngine, PipelineConfig, infer, run_pipeline
from .synthesis import NoiseSpec, SynthesisConfig, sample_noise, synthesize

__all__ = [
    "Checkpoint", "ClassifierConfig", "ClassifierModel", "EncodedPacket",
    "EvalReport", "ExtractorConfig", "FeatureExtractor", "FlowConfig",
    "FlowModel", "InferenceEngine", "Label", "NoiseSpec", "PipelineConfig",
    "ScoredSample", "SynthesisConfig", "auroc", "evaluate", "infer",
    "load_checkpoint", "make_synthetic_corpus", "read_dataset",
    "sample_noise", "save_checkpoint", "synthesize", "train_classifier",
    "train_extractor", "train_flow", "run_pipeline", "write_dataset",
    "__version__",
]
