"""Gauge-invariant nonlinearities ``f(u) = g(|u|^2) u``.

``G`` is the antiderivative of ``g`` with ``G(0) = 0`` so that the potential
energy density is ``G(|u|^2) / 2``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import InvalidParameter


@dataclass(frozen=True)
class Nonlinearity:
    kind: str
    g: Callable[[np.ndarray], np.ndarray]
    G: Callable[[np.ndarray], np.ndarray]
    params: tuple = ()

    def __repr__(self):
        return f"Nonlinearity({self.kind}{self.params})"


def power(sign: float = 1.0, p: float = 3.0) -> Nonlinearity:
    """``f(u) = sign |u|^(p-1) u``; ``sign=+1`` is focusing."""
    if p <= 1:
        raise InvalidParameter(f"power nonlinearity needs p > 1, got {p}")
    sign = float(np.sign(sign)) or 1.0
    e = (p - 1.0) / 2.0
    if p == 3.0:
        g = lambda s: sign * s
        G = lambda s: 0.5 * sign * s * s
    else:
        g = lambda s: sign * np.power(s, e)
        G = lambda s: sign * np.power(s, e + 1.0) / (e + 1.0)
    return Nonlinearity("power", g, G, (sign, p))


def cubic() -> Nonlinearity:
    return power(1.0, 3.0)


def double_power(p: float, q: float) -> Nonlinearity:
    """``f(u) = |u|^(p-1) u - |u|^(q-1) u``."""
    if p <= 1 or q <= 1:
        raise InvalidParameter("double power nonlinearity needs p, q > 1")
    ep, eq = (p - 1.0) / 2.0, (q - 1.0) / 2.0
    g = lambda s: np.power(s, ep) - np.power(s, eq)
    G = lambda s: np.power(s, ep + 1.0) / (ep + 1.0) - np.power(s, eq + 1.0) / (eq + 1.0)
    return Nonlinearity("double_power", g, G, (p, q))


def linear() -> Nonlinearity:
    """``g = 0``: the flow reduces to inverse iteration on ``[H]``."""
    zero = lambda s: np.zeros_like(s)
    return Nonlinearity("none", zero, zero)


def custom(g, G) -> Nonlinearity:
    return Nonlinearity("custom", g, G)


def from_spec(spec: Mapping | None) -> Nonlinearity:
    if spec is None:
        return cubic()
    kind = spec.get("kind", "power")
    if kind == "power":
        return power(spec.get("sign", 1.0), spec.get("p", 3.0))
    if kind == "double_power":
        return double_power(spec["p"], spec["q"])
    if kind in ("none", "linear"):
        return linear()
    raise InvalidParameter(f"unknown nonlinearity kind {kind!r}")
