"""
Text documents for trained networks, symbolic models, configurations and
tabular exports.

Network files are indented JSON; floats are written in their shortest
round-trip form so every parameter reloads exactly. The creation
timestamp lives on the single `metadata` line.
"""

import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Union

import numpy as np
import orjson
import pandas as pd
import yaml
from pydantic import ValidationError

from src.config.settings import settings
from src.models.network import (
    BaseKind,
    GridDocument,
    LayerDocument,
    NetworkDocument,
    NormalizerDocument,
)
from src.models.symbolic import SymbolicModel
from src.models.training import TrainConfig
from src.services.kan_core import FeatureNormalizer, KanLayer, KanNetwork
from src.services.splines import SplineGrid
from src.utils.errors import HazardKanError, SerializationError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def creation_metadata() -> str:
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return f"created {stamp} by {settings.app_name} {settings.app_version}"


def network_to_document(net: KanNetwork, metadata: str = "") -> NetworkDocument:
    if "\n" in metadata:
        raise SerializationError("metadata must fit on one line", module="serialization")
    layers = [
        LayerDocument(
            grids=[GridDocument(lower=g.lower, upper=g.upper, intervals=g.intervals, degree=g.degree)
                   for g in layer.grids],
            coefficients=layer.coefficients.tolist(),
            base_weight=layer.base_weight.tolist(),
            spline_weight=layer.spline_weight.tolist(),
            mask=layer.mask.tolist(),
        )
        for layer in net.layers
    ]
    normalizer = NormalizerDocument(
        feature_names=list(net.normalizer.feature_names),
        means=net.normalizer.means.tolist(),
        stds=net.normalizer.stds.tolist(),
        time_scale=net.normalizer.time_scale,
    )
    return NetworkDocument(
        metadata=metadata, widths=net.widths, base_kind=net.base_kind, normalizer=normalizer, layers=layers
    )


def network_from_document(document: NetworkDocument) -> KanNetwork:
    try:
        layers = [
            KanLayer(
                grids=[SplineGrid(g.lower, g.upper, g.intervals, g.degree) for g in layer.grids],
                coefficients=np.array(layer.coefficients, dtype=float),
                base_weight=np.array(layer.base_weight, dtype=float),
                spline_weight=np.array(layer.spline_weight, dtype=float),
                mask=np.array(layer.mask, dtype=bool),
            )
            for layer in document.layers
        ]
        normalizer = FeatureNormalizer(
            feature_names=list(document.normalizer.feature_names),
            means=np.array(document.normalizer.means, dtype=float),
            stds=np.array(document.normalizer.stds, dtype=float),
            time_scale=document.normalizer.time_scale,
        )
        net = KanNetwork(layers, normalizer, BaseKind(document.base_kind))
    except (HazardKanError, ValueError) as e:
        raise SerializationError(f"model document is inconsistent: {e}", module="serialization")
    if net.widths != document.widths:
        raise SerializationError(
            f"declared widths {document.widths} do not match the layers {net.widths}", module="serialization"
        )
    return net


def dumps_network(net: KanNetwork, metadata: str = "") -> bytes:
    document = network_to_document(net, metadata)
    return orjson.dumps(document.model_dump(mode="json"), option=orjson.OPT_INDENT_2) + b"\n"


def loads_network(payload: Union[bytes, str]) -> KanNetwork:
    try:
        document = NetworkDocument.model_validate(orjson.loads(payload))
    except orjson.JSONDecodeError as e:
        raise SerializationError(f"model file is not valid JSON: {e}", module="serialization")
    except ValidationError as e:
        raise SerializationError(f"model file does not describe a network: {e}", module="serialization")
    return network_from_document(document)


def save_network(net: KanNetwork, path: PathLike, metadata: Optional[str] = None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(dumps_network(net, creation_metadata() if metadata is None else metadata))
    logger.info(f"Saved network {net.widths} to {path}")


def load_network(path: PathLike) -> KanNetwork:
    path = Path(path)
    if not path.is_file():
        raise SerializationError(f"model file not found: {path}", module="serialization")
    return loads_network(path.read_bytes())


def save_symbolic_model(model: SymbolicModel, path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(orjson.dumps(model.model_dump(mode="json"), option=orjson.OPT_INDENT_2) + b"\n")


def load_symbolic_model(path: PathLike) -> SymbolicModel:
    try:
        return SymbolicModel.model_validate(orjson.loads(Path(path).read_bytes()))
    except (OSError, orjson.JSONDecodeError, ValidationError) as e:
        raise SerializationError(f"cannot read symbolic model {path}: {e}", module="serialization")


def save_config(config: TrainConfig, path: PathLike):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(config.model_dump(mode="json"), sort_keys=True), encoding="utf-8")


def write_frame(frame: pd.DataFrame, path: PathLike):
    """Delimited table with full-precision floats"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=settings.float_format)


def write_key_values(values: dict, path: PathLike):
    """key=value lines, floats at full precision"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key, value in values.items():
        rendered = settings.float_format % value if isinstance(value, float) else str(value)
        lines.append(f"{key}={rendered}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
