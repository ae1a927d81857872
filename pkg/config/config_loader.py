import logging
import os
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from core.errors import ConfigError

logger = logging.getLogger(__name__)


class RunConfig(BaseModel):
    """运行配置（扁平键值）。未知键直接拒绝；除输入路径外均有默认值"""
    model_config = ConfigDict(extra="forbid")

    input: Optional[str] = None
    method: Literal["fairgroups", "kmeans", "fixed"] = "fairgroups"
    k: int = Field(5, ge=1)
    m: int = Field(100, ge=2)
    m2: int = Field(20, ge=2)
    grid_low: Optional[float] = None
    grid_high: Optional[float] = None
    grid_low2: Optional[float] = None
    grid_high2: Optional[float] = None
    target: Literal["y", "y_hat", "score"] = "y"
    score_threshold: float = Field(0.5, ge=0.0, le=1.0)
    min_group_count: int = Field(1, ge=1)
    fast_path: bool = True
    scheme: Optional[Literal["fitzpatrick_ita", "l60", "default_2d"]] = None
    thresholds: Optional[List[float]] = None
    lab_coordinate: Optional[Literal["lightness", "ita", "lightness_hue"]] = None
    alphas: List[float] = [1.0, 0.5, 0.25, 0.0]
    quantile_resolution: int = Field(512, ge=16)
    test_fraction: float = Field(0.5, gt=0.0, lt=1.0)
    hgr_bins: int = Field(20, ge=2)
    ci_level: float = Field(0.95, gt=0.0, lt=1.0)
    seed: int = 7
    threads: int = Field(1, ge=1)
    output: str = "output"
    preset: Literal["paper-uniform", "paper-truncnormal", "paper-biased"] = "paper-uniform"
    n: int = Field(50000, ge=1)


class ConfigLoader:
    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self.config: Dict[str, Any] = {}
        if config_path is not None:
            self.load_config(config_path)

    def load_config(self, config_path: Optional[str] = None):
        path = config_path or self.config_path
        if not os.path.exists(path):
            raise FileNotFoundError(f"Config file not found: {path}")

        with open(path, 'r', encoding='utf-8') as f:
            try:
                loaded = yaml.safe_load(f)
            except yaml.YAMLError as e:
                raise ConfigError(f"config file {path} is not valid YAML: {e}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a key-value mapping")
        self.config_path = path
        self.config = loaded
        logger.debug(f"loaded {len(loaded)} config keys from {path}")

    def update_config(self, key: str, value: Any):
        self.config[key] = value

    def run_config(self, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """命令行参数 > 配置文件 > 默认值；值为 None 的参数视为未指定"""
        for key, value in (overrides or {}).items():
            if value is not None:
                self.update_config(key, value)
        try:
            return RunConfig.model_validate(self.config)
        except ValidationError as e:
            problems = "; ".join(
                f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
            )
            raise ConfigError(f"invalid run configuration: {problems}")

