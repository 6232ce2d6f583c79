"""Built-in scenes used by the check suites and the command line."""

from __future__ import annotations

from .errors import ConfigError
from .fileio import Scene
from .geometry import Ball

__all__ = ["STANDARD_SUITE", "builtin_scene", "BUILTIN_SCENES"]


def _concentric2d() -> Scene:
    return Scene(
        "concentric2d",
        2,
        Ball((0.0, 0.0), 1.0),
        Ball((0.0, 0.0), 1.0),
        Ball((0.5, 0.0), 0.8),
    )


def _overlap2d() -> Scene:
    return Scene(
        "overlap2d",
        2,
        Ball((-0.7, 0.0), 1.0),
        Ball((0.7, 0.0), 1.0),
        Ball((0.0, 0.8), 1.0),
    )


def _disjoint2d() -> Scene:
    return Scene(
        "disjoint2d",
        2,
        Ball((-2.2, 0.0), 1.0),
        Ball((2.2, 0.0), 1.0),
        Ball((0.0, 2.4), 1.0),
    )


def _intervals1d() -> Scene:
    from .geometry import Box

    return Scene("intervals1d", 1, Box((0.0,), (2.0,)), Box((1.0,), (3.0,)), Box((-1.5,), (-0.5,)))


def _concentric3d() -> Scene:
    return Scene(
        "concentric3d",
        3,
        Ball((0.0, 0.0, 0.0), 1.0),
        Ball((0.0, 0.0, 0.0), 1.0),
        Ball((0.4, 0.0, 0.0), 0.8),
    )


BUILTIN_SCENES = {
    "concentric2d": _concentric2d,
    "overlap2d": _overlap2d,
    "disjoint2d": _disjoint2d,
    "intervals1d": _intervals1d,
    "concentric3d": _concentric3d,
}

# The three-scene battery every suite-level tolerance is calibrated on.
STANDARD_SUITE = ("concentric2d", "overlap2d", "disjoint2d")


def builtin_scene(name: str) -> Scene:
    try:
        return BUILTIN_SCENES[name]()
    except KeyError:
        raise ConfigError(
            f"unknown scene {name!r}; built-ins: {sorted(BUILTIN_SCENES)}"
        ) from None
