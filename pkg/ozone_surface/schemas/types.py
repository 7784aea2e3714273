from typing import Annotated, Any

import numpy as np
from pydantic import BeforeValidator, PlainSerializer, WithJsonSchema


def _as_float_array(value: Any) -> np.ndarray:
    return np.asarray(value, dtype=np.float64)


def _to_nested_list(value: np.ndarray) -> list:
    return np.asarray(value, dtype=np.float64).tolist()


# float64 array field: accepts nested lists on input, serializes to nested lists
NDArray = Annotated[
    np.ndarray,
    BeforeValidator(_as_float_array),
    PlainSerializer(_to_nested_list, return_type=list),
    WithJsonSchema({"type": "array", "items": {}}),
]
