"""Estimator plumbing: parameter introspection and input validation.

The mixin reproduces the scikit-learn get_params/set_params contract from
the constructor signature alone, so estimators here drop into sklearn
pipelines and grid searches without importing sklearn.
"""

from __future__ import annotations

import inspect


class ParamsMixin:
    """get_params/set_params over the constructor's keyword parameters."""

    @classmethod
    def _param_names(cls) -> list[str]:
        sig = inspect.signature(cls.__init__)
        return sorted(
            name
            for name, p in sig.parameters.items()
            if name != "self" and p.kind not in (p.VAR_POSITIONAL, p.VAR_KEYWORD)
        )

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}; "
                    f"valid parameters are {sorted(valid)}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


def check_score(name: str, value: float) -> float:
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must be in [0, 1], got {value}")
    return float(value)


def check_texts(X) -> list[str]:
    if isinstance(X, str):
        raise TypeError("expected an iterable of texts, got a single string")
    out = list(X)
    for i, item in enumerate(out):
        if not isinstance(item, str):
            raise TypeError(f"X[{i}] is not a string")
    return out


def check_graphs(X) -> list:
    from .extraction import AttackGraph

    out = list(X)
    for i, item in enumerate(out):
        if not isinstance(item, AttackGraph):
            raise TypeError(f"X[{i}] is not an AttackGraph")
    return out
