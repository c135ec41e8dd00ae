"""
Experiment configuration files.

Training configurations resolve as TrainConfig defaults < file < explicit
overrides. Files may be YAML or JSON (JSON parses as YAML).
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar, Union

import yaml
from pydantic import BaseModel, ValidationError

from src.models.synthetic import SyntheticSpec
from src.models.training import SearchSpace, TrainConfig, apply_overrides
from src.utils.errors import InvalidInputError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def read_mapping(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise InvalidInputError(f"configuration file not found: {path}", module="config")
    try:
        content = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as e:
        raise InvalidInputError(f"cannot parse {path}: {e}", module="config")
    if content is None:
        return {}
    if not isinstance(content, dict):
        raise InvalidInputError(f"{path} must contain a mapping at the top level", module="config")
    return content


def _validated(model: Type[ModelT], data: Dict[str, Any], source: str) -> ModelT:
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise InvalidInputError(f"invalid {model.__name__} in {source}: {e}", module="config")


def load_train_config(path: Optional[Union[str, Path]] = None,
                      overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """
    Resolve a training configuration.

    Args:
        path: Optional YAML/JSON file with TrainConfig fields
        overrides: Field values taking precedence over the file; None values are ignored.
            Dotted names address regularization weights ("regularization.l1").

    Returns:
        TrainConfig
    """
    config = TrainConfig()
    if path is not None:
        config = _validated(TrainConfig, read_mapping(path), str(path))
        logger.info(f"Loaded training configuration from {path}")
    given = {k: v for k, v in (overrides or {}).items() if v is not None}
    if not given:
        return config
    try:
        return apply_overrides(config, given)
    except ValidationError as e:
        raise InvalidInputError(f"invalid configuration override: {e}", module="config")


def load_search_space(path: Union[str, Path]) -> SearchSpace:
    return _validated(SearchSpace, read_mapping(path), str(path))


def load_synthetic_spec(path: Union[str, Path]) -> SyntheticSpec:
    return _validated(SyntheticSpec, read_mapping(path), str(path))


def default_search_space() -> SearchSpace:
    """Ranges used when no search space file is given"""
    return SearchSpace.model_validate({
        "parameters": {
            "hidden_width": {"choices": [0, 1, 2, 3]},
            "grid_intervals": {"low": 3, "high": 8, "integer": True},
            "lambda_reg": {"low": 1e-4, "high": 1e-1, "log": True},
            "learning_rate": {"low": 1e-3, "high": 5e-2, "log": True},
            "weight_decay": {"low": 1e-6, "high": 1e-3, "log": True},
            "base_kind": {"choices": ["silu", "identity"]},
        }
    })
