"""Estimator plumbing: sklearn-compatible get_params/set_params and input checks."""

from __future__ import annotations

import inspect

import numpy as np

from .errors import LengthMismatch


class ParamsMixin:
    """Duck-typed sklearn parameter protocol.

    Constructor keyword arguments are the parameters; subclasses must
    store each one under the same attribute name.
    """

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return [
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        ]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError(
                    f"invalid parameter {key!r} for {type(self).__name__}; "
                    f"valid parameters: {sorted(valid)}"
                )
            setattr(self, key, value)
        return self

    def __repr__(self):
        args = ", ".join(
            f"{k}={v!r}" for k, v in self.get_params().items()
            if not isinstance(v, np.ndarray)
        )
        return f"{type(self).__name__}({args})"


def check_llr_frames(x, n: int) -> np.ndarray:
    """Coerce to a (B, n) float64 matrix of finite LLRs."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise LengthMismatch(f"expected (*, {n}) LLR frames, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValueError("LLR frames must be finite")
    return arr


def check_bit_frames(x, n: int) -> np.ndarray:
    """Coerce to a (B, n) uint8 matrix of bits."""
    arr = np.asarray(x)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != n:
        raise LengthMismatch(f"expected (*, {n}) bit frames, got shape {arr.shape}")
    if not np.isin(arr, (0, 1)).all():
        raise ValueError("bit frames must contain only 0 and 1")
    return arr.astype(np.uint8)
