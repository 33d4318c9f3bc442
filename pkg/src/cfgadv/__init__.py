"""Adversarial robustness experiments for CFG-feature malware classifiers."""

__version__ = "0.1.0"

from .graph import Cfg, CfgError, Label, make_cfg, parse_cfg, serialize_cfg, validate
from .features import Normalizer, apply_normalizer, extract_features, fit_normalizer
from .classifier import Model, TrainConfig, evaluate, train
from .attacks import AttackConfig, AttackOutcome, Method, run_attack, run_attack_suite
from .gea import GeaSplice, check_splice, gea_attack, select_target, splice
from .corpus import CorpusSpec, generate_corpus, load_corpus, split

__all__ = [
    "Cfg", "CfgError", "Label", "make_cfg", "parse_cfg", "serialize_cfg", "validate",
    "Normalizer", "apply_normalizer", "extract_features", "fit_normalizer",
    "Model", "TrainConfig", "evaluate", "train",
    "AttackConfig", "AttackOutcome", "Method", "run_attack", "run_attack_suite",
    "GeaSplice", "check_splice", "gea_attack", "select_target", "splice",
    "CorpusSpec", "generate_corpus", "load_corpus", "split",
]
