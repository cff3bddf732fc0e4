"""Weakly supervised video anomaly localization with event-completeness priors."""

from .featio import FeatureSequence, Manifest, SynthConfig, TextBank, VideoAnnotation, load_manifest, read_features, synth_dataset, write_features
from .infer import AnomalyInstance, InferConfig, detect
from .metrics import EvalReport, average_precision, detection_map, roc_auc, temporal_iou
from .model import LECVAD
from .trainer import ModelState, TrainConfig, fit, grad_check, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
