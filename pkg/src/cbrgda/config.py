"""Engine configuration: sectioned ``key = value`` text (INI syntax).

Every key is optional; unknown sections or keys are rejected. See
``data/reference.ini`` for the documented defaults.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Dict, Optional, Tuple

from .adaptation import GeneratorConfig, PathwayWeights, parse_rules
from .embedding import EmbedderConfig
from .exceptions import ConfigError
from .gda import GdaConfig
from .learning import RetentionConfig
from .metrics import QualityWeights
from .retrieval import RetrievalConfig

SCHEMA = {
    "engine": {"seed": int},
    "embedder": {"dim": int, "ngram": int},
    "retrieval": {"tau": float, "top_k": int, "lambda_semantic": float, "lambda_feature": float,
                  "lambda_structural": float, "weights": str, "cluster_threshold": float},
    "retention": {"delta": float, "alpha": float, "beta": float, "gamma": float,
                  "neighborhood_k": int},
    "gda": {"theta_p": float, "theta_m": float, "monitor_period": int, "max_depth": int},
    "generator": {"mode": str, "rules": str},
    "quality": {"alpha": float, "beta": float, "gamma": float, "delta": float},
    "pathways": {"omega": str, "cot_confidence": float, "parametric_confidence": float},
    "transfer": {"eta": float},
}


@dataclass(frozen=True)
class EngineConfig:
    seed: int = 0
    embedder: EmbedderConfig = EmbedderConfig()
    retrieval: RetrievalConfig = RetrievalConfig()
    cluster_threshold: float = 0.7
    retention: RetentionConfig = RetentionConfig()
    gda: GdaConfig = GdaConfig()
    generator: Optional[GeneratorConfig] = None
    quality: QualityWeights = QualityWeights()
    omega: Optional[PathwayWeights] = None
    cot_confidence: float = 0.3
    parametric_confidence: float = 0.4
    eta: float = 0.1

    def with_seed(self, seed: Optional[int]) -> "EngineConfig":
        if seed is None:
            return self
        gen = self.generator
        if gen is not None:
            gen = replace(gen, seed=seed)
        return replace(self, seed=seed, embedder=replace(self.embedder, seed=seed), generator=gen)


def _parse_weights(text: str) -> Optional[Dict[str, float]]:
    text = text.strip()
    if not text:
        return None
    out = {}
    for part in text.split(","):
        name, sep, value = part.partition(":")
        if not sep:
            raise ConfigError(f"feature weight {part!r} should be name:value")
        out[name.strip()] = float(value)
    return out


def _read(parser: configparser.ConfigParser) -> Dict[str, Dict[str, object]]:
    values: Dict[str, Dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section, raw=True):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            try:
                values.setdefault(section, {})[key] = SCHEMA[section][key](raw)
            except ValueError:
                raise ConfigError(f"bad value {raw!r} for {section}.{key}") from None
    return values


def parse_config(text: str, base_dir: str = ".", seed: Optional[int] = None) -> EngineConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    v = _read(parser)
    get = lambda s, k, d: v.get(s, {}).get(k, d)  # noqa: E731

    base = EngineConfig()
    cfg_seed = get("engine", "seed", base.seed)
    embedder = EmbedderConfig(get("embedder", "dim", 256), get("embedder", "ngram", 3), cfg_seed)
    r = base.retrieval
    retrieval = RetrievalConfig(
        get("retrieval", "tau", r.tau),
        _parse_weights(get("retrieval", "weights", "")),
        (get("retrieval", "lambda_semantic", r.lambdas[0]),
         get("retrieval", "lambda_feature", r.lambdas[1]),
         get("retrieval", "lambda_structural", r.lambdas[2])),
        get("retrieval", "top_k", r.top_k),
    )
    rt = base.retention
    retention = RetentionConfig(
        get("retention", "delta", rt.delta), get("retention", "alpha", rt.alpha),
        get("retention", "beta", rt.beta), get("retention", "gamma", rt.gamma),
        get("retention", "neighborhood_k", rt.neighborhood_k),
    )
    g = base.gda
    gda = GdaConfig(get("gda", "theta_p", g.theta_p), get("gda", "theta_m", g.theta_m),
                    get("gda", "monitor_period", g.monitor_period), get("gda", "max_depth", g.max_depth))
    generator = None
    rules_path = get("generator", "rules", "").strip()
    if rules_path:
        path = rules_path if os.path.isabs(rules_path) else os.path.join(base_dir, rules_path)
        with open(path, encoding="utf-8") as fh:
            rules = parse_rules(fh)
        generator = GeneratorConfig(get("generator", "mode", "template"), rules, cfg_seed)
    q = base.quality
    quality = QualityWeights(get("quality", "alpha", q.alpha), get("quality", "beta", q.beta),
                             get("quality", "gamma", q.gamma), get("quality", "delta", q.delta))
    omega_text = get("pathways", "omega", "").strip()
    omega = None
    if omega_text:
        try:
            omega = PathwayWeights(tuple(float(x) for x in omega_text.split(",")))
        except ValueError:
            raise ConfigError(f"bad omega {omega_text!r}") from None
    eta = get("transfer", "eta", base.eta)
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must lie in [0, 1]")
    cfg = EngineConfig(cfg_seed, embedder, retrieval, get("retrieval", "cluster_threshold", 0.7),
                       retention, gda, generator, quality, omega,
                       get("pathways", "cot_confidence", base.cot_confidence),
                       get("pathways", "parametric_confidence", base.parametric_confidence), eta)
    return cfg.with_seed(seed)


def load_config(path: Optional[str] = None, seed: Optional[int] = None) -> EngineConfig:
    if path is None:
        return EngineConfig().with_seed(seed)
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), os.path.dirname(os.path.abspath(path)), seed)


def reference_config_text() -> str:
    return resources.files("cbrgda").joinpath("data", "reference.ini").read_text(encoding="utf-8")
