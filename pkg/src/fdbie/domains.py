"""Implicit domains and harmonic reference solutions.

A domain is described by a level-set function that is negative inside the
interior region, positive outside and zero on the interface.  All callables
here act on arrays of points of shape ``(m, d)`` and return shape ``(m,)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

LevelSet = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ImplicitDomain:
    dim: int
    level_set: LevelSet
    half_width: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dim}")
        if self.half_width <= 0:
            raise ConfigError("box half-width must be positive")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.level_set(np.atleast_2d(points)), dtype=float)

    def is_exterior(self, point: Sequence[float]) -> bool:
        return bool(self(np.asarray(point, dtype=float)[None, :])[0] > 0)


@dataclass(frozen=True)
class HarmonicFunction:
    """A harmonic function with an optional singular point (must lie outside)."""

    name: str
    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    singular_point: tuple | None = None

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.func(np.atleast_2d(points)), dtype=float)


def circle(radius=0.7, center=(0.0, 0.0), half_width=1.0) -> ImplicitDomain:
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def ls(x):
        return np.sum((x - c) ** 2, axis=1) - r2

    return ImplicitDomain(2, ls, half_width, "circle", {"radius": radius, "center": list(center)})


def ellipse(a=0.7, b=0.5, center=(0.0, 0.0), half_width=1.0) -> ImplicitDomain:
    c = np.asarray(center, dtype=float)

    def ls(x):
        y = x - c
        return y[:, 0] ** 2 / a**2 + y[:, 1] ** 2 / b**2 - 1.0

    return ImplicitDomain(2, ls, half_width, "ellipse", {"a": a, "b": b, "center": list(center)})


def star(a=0.7, b=0.15, k=5, center=(0.0, 0.0), half_width=1.0) -> ImplicitDomain:
    """Star r < a + b cos(k theta).  Not C^2 at the center, which is interior."""
    c = np.asarray(center, dtype=float)

    def ls(x):
        y = x - c
        r = np.hypot(y[:, 0], y[:, 1])
        theta = np.arctan2(y[:, 1], y[:, 0])
        return r - (a + b * np.cos(k * theta))

    return ImplicitDomain(2, ls, half_width, "star", {"a": a, "b": b, "k": k, "center": list(center)})


def sphere(radius=0.6, center=(0.0, 0.0, 0.0), half_width=1.0) -> ImplicitDomain:
    c = np.asarray(center, dtype=float)
    r2 = float(radius) ** 2

    def ls(x):
        return np.sum((x - c) ** 2, axis=1) - r2

    return ImplicitDomain(3, ls, half_width, "sphere", {"radius": radius, "center": list(center)})


def ellipsoid(a=0.7, b=0.6, c=0.5, center=(0.0, 0.0, 0.0), half_width=1.0) -> ImplicitDomain:
    ctr = np.asarray(center, dtype=float)
    axes = np.array([a, b, c], dtype=float)

    def ls(x):
        return np.sum(((x - ctr) / axes) ** 2, axis=1) - 1.0

    return ImplicitDomain(3, ls, half_width, "ellipsoid", {"a": a, "b": b, "c": c, "center": list(center)})


DOMAIN_FAMILIES = {
    "circle": circle,
    "ellipse": ellipse,
    "star": star,
    "sphere": sphere,
    "ellipsoid": ellipsoid,
}


def make_domain(name: str, **params) -> ImplicitDomain:
    try:
        factory = DOMAIN_FAMILIES[name]
    except KeyError:
        raise ConfigError(f"unknown domain family {name!r}; known: {sorted(DOMAIN_FAMILIES)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for domain {name!r}: {exc}") from None


# -- harmonic reference functions -------------------------------------------


def complex_power(m: int, part="re", z0=(0.0, 0.0)) -> HarmonicFunction:
    """Real or imaginary part of (z - z0)**m; m may be negative."""
    if part not in ("re", "im"):
        raise ConfigError("part must be 're' or 'im'")
    zc = complex(*z0)

    def f(x):
        z = (x[:, 0] + 1j * x[:, 1] - zc) ** m
        return z.real if part == "re" else z.imag

    sing = tuple(z0) if m < 0 else None
    return HarmonicFunction(f"{part}(z-z0)^{m}", 2, f, sing)


def log_distance(z0=(1.5, 0.0)) -> HarmonicFunction:
    c = np.asarray(z0, dtype=float)

    def f(x):
        return np.log(np.linalg.norm(x - c, axis=1))

    return HarmonicFunction("log|z-z0|", 2, f, tuple(z0))


def inverse_distance(x0=(0.0, 0.0, 1.5)) -> HarmonicFunction:
    c = np.asarray(x0, dtype=float)

    def f(x):
        return 1.0 / np.linalg.norm(x - c, axis=1)

    return HarmonicFunction("1/|x-x0|", 3, f, tuple(x0))


def harmonic_polynomial(name: str, dim: int = 2) -> HarmonicFunction:
    polys2 = {
        "x": lambda x: x[:, 0],
        "x2-y2": lambda x: x[:, 0] ** 2 - x[:, 1] ** 2,
        "xy": lambda x: x[:, 0] * x[:, 1],
        "const": lambda x: np.ones(len(x)),
    }
    polys3 = {
        "x": lambda x: x[:, 0],
        "x2-y2": lambda x: x[:, 0] ** 2 - x[:, 1] ** 2,
        "x2+y2-2z2": lambda x: x[:, 0] ** 2 + x[:, 1] ** 2 - 2 * x[:, 2] ** 2,
        "xyz": lambda x: x[:, 0] * x[:, 1] * x[:, 2],
        "const": lambda x: np.ones(len(x)),
    }
    table = polys2 if dim == 2 else polys3
    if name not in table:
        raise ConfigError(f"unknown {dim}D harmonic polynomial {name!r}")
    return HarmonicFunction(name, dim, table[name])


def sin_cosh() -> HarmonicFunction:
    return HarmonicFunction("sin(x)cosh(y)", 2, lambda x: np.sin(x[:, 0]) * np.cosh(x[:, 1]))


def make_solution(spec: dict, dim: int) -> HarmonicFunction:
    """Build a reference solution from a config mapping such as
    ``{"kind": "complex_power", "m": 3, "part": "re"}``."""
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind == "complex_power":
        return complex_power(int(spec.pop("m")), spec.pop("part", "re"), tuple(spec.pop("z0", (0.0, 0.0))))
    if kind == "log_distance":
        return log_distance(tuple(spec.pop("z0")))
    if kind == "inverse_distance":
        return inverse_distance(tuple(spec.pop("x0")))
    if kind == "polynomial":
        return harmonic_polynomial(spec.pop("name"), dim)
    if kind == "sin_cosh":
        return sin_cosh()
    raise ConfigError(f"unknown solution kind {kind!r}")
