"""Flat ``key=value`` training configuration."""
from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    seed: int = 1
    # model
    use_e2t: bool = True
    encoder: str = "cnn"
    pooling: str = "firm"
    gate: bool = True
    vector_gate: bool = False
    k: int = 5
    word_dim: int = 300
    entity_dim: int = 1000
    state_size: int = 500
    entity_state_size: int = 500
    filter_sizes: tuple = (3, 4, 5)
    feature_maps: tuple = (400, 300, 300)
    topic_size: int = 0  # 0 -> width of the disambiguated encoding
    vocab_cap: int = 50000
    word_embeddings: str = ""
    entity_embeddings: str = ""
    # optimisation
    batch_size: int = 80
    dropout: float = 0.5
    max_epochs: int = 15
    patience: int = 3
    rho: float = 0.95
    epsilon: float = 1e-6
    maxnorm: float = 3.0
    dev_subset: int = 2000
    # k tuning
    k_candidates: tuple = (1, 2, 5, 10, 20)
    tune_k_epochs: int = 3
    # decoding
    beam_size: int = 10
    max_decode_len: int = 30
    length_norm: bool = False

    def validate(self):
        positive = ["k", "word_dim", "entity_dim", "state_size", "entity_state_size", "batch_size",
                    "max_epochs", "patience", "beam_size", "max_decode_len", "tune_k_epochs", "maxnorm"]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if self.vocab_cap <= 4:
            raise ConfigError("vocab_cap must exceed 4")
        if self.encoder not in ("rnn", "cnn"):
            raise ConfigError(f"encoder must be rnn or cnn, got {self.encoder!r}")
        if self.pooling not in ("firm", "soft"):
            raise ConfigError(f"pooling must be firm or soft, got {self.pooling!r}")
        if len(self.filter_sizes) != len(self.feature_maps):
            raise ConfigError("filter_sizes and feature_maps must have equal length")
        if list(self.k_candidates) != sorted(set(self.k_candidates)):
            raise ConfigError("k_candidates must be strictly increasing")
        return self

    def replace(self, **changes):
        return dataclasses.replace(self, **changes).validate()

    def to_text(self):
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name}={v}")
        return "\n".join(lines) + "\n"


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(name, default, raw):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(x) for x in raw.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


def apply_overrides(config, pairs):
    """Apply ``key=value`` strings; unknown keys are rejected."""
    defaults = {f.name: getattr(config, f.name) for f in fields(config)}
    changes = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in defaults:
            raise ConfigError(f"unknown config key {key!r}")
        changes[key] = _coerce(key, defaults[key], raw)
    return config.replace(**changes)


def load_config(path=None, overrides=(), env=None):
    config = TrainConfig()
    if path:
        pairs = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value")
                pairs.append(line)
        config = apply_overrides(config, pairs)
    env = os.environ if env is None else env
    if env.get("E2T_SEED"):
        config = apply_overrides(config, [f"seed={env['E2T_SEED']}"])
    # command-line overrides win over both the file and the environment
    return apply_overrides(config, overrides)
