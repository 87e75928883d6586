"""Shared base for immutable models that carry numpy arrays"""

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator


class FrozenModel(BaseModel):
    """Frozen pydantic model; array fields are stored read-only"""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    @field_validator('*', mode='before')
    @classmethod
    def lock_arrays(cls, v):
        if isinstance(v, np.ndarray) and v.flags.writeable:
            v = v.copy()
            v.flags.writeable = False
        return v
