"""Run configuration: a sectioned ``key = value`` file plus command-line overrides.

Example::

    seed = 42

    [corpus]
    benign_count = 276
    malicious_median = 60

    [train]
    epochs = 300
    hidden = 64, 32

    [pgd]
    step_size = 0.01

    [gea]
    density_levels = 0, 10, 20, 40, 80

Keys before the first section header belong to the ``run`` section.
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .attacks import DEFAULTS, AttackConfig, Method
from .classifier import TrainConfig
from .corpus import ClassProfile, CorpusSpec


class ConfigError(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class RunConfig:
    seed: int = 42
    corpus: CorpusSpec = field(default_factory=CorpusSpec)
    split_ratio: float = 0.8
    train: TrainConfig = field(default_factory=TrainConfig)
    attacks: dict = field(default_factory=lambda: dict(DEFAULTS))
    gea_strategies: tuple[str, ...] = ("min", "median", "max")
    density_levels: tuple[int, ...] = (0, 10, 20, 40, 80)
    density_target: str = "median"
    density_direction: str = "mal2ben"

    def with_seed(self, seed: int) -> "RunConfig":
        """One seed drives corpus, split, training and density sampling."""
        return dataclasses.replace(self, seed=seed, corpus=dataclasses.replace(self.corpus, seed=seed),
                                   train=dataclasses.replace(self.train, seed=seed))

    def attack_configs(self) -> list[AttackConfig]:
        return [self.attacks[m] for m in Method]


_METHOD_SECTIONS = {m.value.lower(): m for m in Method}
_PROFILE_KEYS = {"count": int, "median": float, "dispersion": float, "p_branch": float, "p_back": float}
_PROFILE_FIELDS = {"count": "count", "median": "median_nodes", "dispersion": "dispersion",
                   "p_branch": "p_branch", "p_back": "p_back"}


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.replace(",", " ").split())


def _strs(text: str) -> tuple[str, ...]:
    return tuple(p for p in text.replace(",", " ").split())


def _coerce(kind, text):
    if kind is bool:
        return _bool(text)
    return kind(text)


def _line_of(text: str, section: str, key: str) -> Optional[int]:
    current = "run"
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip().lower()
        elif current == section and s.split("=", 1)[0].strip().lower() == key:
            return i
    return None


def parse_config(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    """Parse config text and apply ``section.key=value`` overrides (later wins)."""
    cp = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), default_section="__none__")
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        if lineno is None and getattr(exc, "errors", None):
            lineno = exc.errors[0][0]
        raise ConfigError(str(exc).splitlines()[0].split(": ", 1)[-1],
                          lineno - 1 if lineno else None) from None

    entries: list[tuple[str, str, str, Optional[int]]] = []
    for section in cp.sections():
        for key, value in cp.items(section):
            entries.append((section.lower(), key, value, _line_of(text, section.lower(), key)))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not section.key=value")
        lhs, value = item.split("=", 1)
        section, key = lhs.rsplit(".", 1)
        entries.append((section.strip().lower(), key.strip().lower(), value.strip(), None))

    cfg = RunConfig()
    corpus = {"benign": dataclasses.asdict(cfg.corpus.benign),
              "malicious": dataclasses.asdict(cfg.corpus.malicious)}
    corpus_extra = {}
    train = dataclasses.asdict(cfg.train)
    attacks = {m: {} for m in Method}
    for section, key, value, line in entries:
        try:
            if section == "run":
                if key == "seed":
                    cfg.seed = int(value)
                else:
                    raise KeyError(key)
            elif section == "corpus":
                cls, _, name = key.partition("_")
                if cls in corpus and name in _PROFILE_KEYS:
                    corpus[cls][_PROFILE_FIELDS[name]] = _PROFILE_KEYS[name](value)
                    ClassProfile(**corpus[cls])
                elif key == "max_nodes":
                    corpus_extra["max_nodes"] = int(value)
                else:
                    raise KeyError(key)
            elif section == "split":
                if key != "ratio":
                    raise KeyError(key)
                cfg.split_ratio = float(value)
            elif section == "train":
                kinds = {"learning_rate": float, "batch_size": int, "epochs": int,
                         "class_weighting": bool, "optimizer": str}
                if key == "hidden":
                    train["hidden"] = _ints(value)
                elif key in kinds:
                    train[key] = _coerce(kinds[key], value)
                else:
                    raise KeyError(key)
                TrainConfig(**train)
            elif section in _METHOD_SECTIONS:
                fields = {f.name: f.type for f in dataclasses.fields(AttackConfig)}
                if key not in fields or key == "method":
                    raise KeyError(key)
                kind = bool if key == "early_stop" else int if key in ("max_iter", "binary_steps") else float
                method = _METHOD_SECTIONS[section]
                attacks[method][key] = _coerce(kind, value)
                # validate now so the error carries this key's line
                DEFAULTS[method].with_(**attacks[method])
            elif section == "gea":
                if key == "strategies":
                    cfg.gea_strategies = _strs(value)
                elif key == "density_levels":
                    cfg.density_levels = _ints(value)
                elif key == "density_target":
                    cfg.density_target = value.strip()
                elif key == "density_direction":
                    if value.strip() not in ("mal2ben", "ben2mal"):
                        raise ValueError("density_direction must be mal2ben or ben2mal")
                    cfg.density_direction = value.strip()
                else:
                    raise KeyError(key)
            else:
                raise ConfigError(f"unknown section [{section}]", line)
        except KeyError:
            raise ConfigError(f"unknown key {key!r} in [{section}]", line) from None
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad value for {section}.{key}: {exc}", line) from None

    try:
        cfg.corpus = CorpusSpec(ClassProfile(**corpus["benign"]), ClassProfile(**corpus["malicious"]),
                                seed=cfg.seed, **corpus_extra)
        cfg.train = TrainConfig(**train)
        cfg.attacks = {m: DEFAULTS[m].with_(**attacks[m]) for m in Method}
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not 0 < cfg.split_ratio < 1:
        raise ConfigError("split.ratio must lie strictly between 0 and 1")
    return cfg.with_seed(cfg.seed)
