"""Named nonlinearities that system files can reference by string.

Register additional ones with :func:`register`::

    @register("my_f1")
    def my_f1(x, u):
        ...
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["REGISTRY", "register", "lookup"]

REGISTRY: dict = {}


def register(name: str):
    def deco(fn):
        if name in REGISTRY:
            raise ValueError(f"nonlinearity {name!r} already registered")
        REGISTRY[name] = fn
        return fn
    return deco


def lookup(name: str):
    try:
        return REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown nonlinearity {name!r}; registered: "
                       + ", ".join(sorted(REGISTRY))) from None


@register("zero_vector")
def zero_vector(x, u):
    return np.zeros(len(x))


@register("zero_column")
def zero_column(x, u):
    return np.zeros((len(x), 1))


@register("zero_theta")
def zero_theta(t, x, u):
    return np.zeros(1)


@register("zero_input")
def zero_input(t):
    return np.zeros(1)


@register("example1_mu")
def example1_mu(x):
    return 3 * np.sin(x)


# Example 2 plant

@register("example2_f1")
def example2_f1(x, u):
    u = u[0]
    return np.array([3 * u + 0.8 * math.sin(x[1]),
                     2 * u + 0.9 * math.cos(x[0]),
                     -u + 0.8 * math.sin(x[2])])


@register("example2_f2")
def example2_f2(x, u):
    return np.array([[3 * math.sin(x[1])], [0.0], [0.0]])


@register("example2_theta")
def example2_theta(t, x, u):
    return np.array([3 * math.sin(t)])


@register("example2_input")
def example2_input(t):
    return np.array([8 * math.cos(t)])


# two-state plant for the reduced-order demo; |df1/dx| <= 0.4

@register("reduced_f1")
def reduced_f1(x, u):
    return np.array([u[0] + 0.3 * math.sin(x[1]), 0.4 * math.cos(x[1])])


@register("reduced_f2")
def reduced_f2(x, u):
    return np.array([[0.5 * math.cos(x[0])], [0.0]])


@register("reduced_theta")
def reduced_theta(t, x, u):
    return np.array([math.sin(2 * t)])


@register("reduced_input")
def reduced_input(t):
    return np.array([math.sin(t)])
