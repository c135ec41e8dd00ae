from typing import Annotated

import numpy as np
from pydantic import BeforeValidator, PlainSerializer


def _as_float_array(value) -> np.ndarray:
    array = np.array(value, dtype=float)
    array.setflags(write=False)
    return array


def _as_int_array(value) -> np.ndarray:
    raw = np.asarray(value)
    if raw.size and not np.all(np.isfinite(raw.astype(float))):
        raise ValueError("integer array contains non-finite values")
    array = np.array(raw, dtype=np.int64)
    if raw.size and not np.array_equal(array, raw.astype(float)):
        raise ValueError("integer array contains non-integral values")
    array.setflags(write=False)
    return array


FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_float_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]

IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_int_array),
    PlainSerializer(lambda a: a.tolist(), return_type=list),
]
