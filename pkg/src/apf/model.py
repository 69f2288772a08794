"""Core value types shared by every layer: colors, moves, robots and configurations."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import NamedTuple


class ApfError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ApfError):
    """A configuration or pattern violates a documented constraint.

    ``code`` is one of DuplicatePosition, RadiusOutOfRange, TooFewRobots,
    NonInitialColors, SizeMismatch, DuplicateId.
    """

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        self.detail = detail
        super().__init__(f"{code}: {detail}" if detail else code)


class UnknownRobotId(ApfError, KeyError):
    pass


class Color(str, enum.Enum):
    OFF = "off"
    TERMINAL1 = "terminal1"
    CANDIDATE = "candidate"
    CALL = "call"
    MOVING1 = "moving1"
    REACHED = "reached"
    LEADER1 = "leader1"
    LEADER = "leader"
    DONE = "done"

    def __str__(self) -> str:
        return self.value


class Move(str, enum.Enum):
    NONE = "N"
    LEFT = "L"
    RIGHT = "R"
    UP = "U"  # local up: interpreted through the robot's chirality
    DOWN = "D"

    def __str__(self) -> str:
        return self.value


class BlockingMode(str, enum.Enum):
    CLOSED = "closed"
    OPEN = "open"

    def __str__(self) -> str:
        return self.value


class Decision(NamedTuple):
    new_color: Color
    move: Move = Move.NONE


GridPoint = tuple[int, int]


@dataclass(frozen=True)
class Robot:
    id: int
    pos: GridPoint
    color: Color = Color.OFF
    chirality: int = 1


def parse_rad(value) -> Fraction:
    """Parse a radius given as a rational string ("1/2"), int, float or Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**6)
    try:
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValidationError("RadiusOutOfRange", f"cannot parse radius {value!r}") from exc


@dataclass(frozen=True)
class WorldConfig:
    robots: tuple[Robot, ...]
    rad: Fraction = Fraction(1, 2)
    blocking: BlockingMode = BlockingMode.CLOSED
    _index: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "robots", tuple(self.robots))
        object.__setattr__(self, "rad", parse_rad(self.rad))
        object.__setattr__(self, "blocking", BlockingMode(self.blocking))
        object.__setattr__(self, "_index", {r.id: r for r in self.robots})

    @classmethod
    def from_positions(cls, positions, rad=Fraction(1, 2), blocking=BlockingMode.CLOSED,
                       chirality=None, colors=None) -> "WorldConfig":
        robots = []
        for i, p in enumerate(positions):
            robots.append(Robot(
                id=i,
                pos=(int(p[0]), int(p[1])),
                color=Color(colors[i]) if colors is not None else Color.OFF,
                chirality=int(chirality[i]) if chirality is not None else 1,
            ))
        return cls(tuple(robots), rad, blocking)

    @property
    def n(self) -> int:
        return len(self.robots)

    def robot(self, rid: int) -> Robot:
        try:
            return self._index[rid]
        except KeyError:
            raise UnknownRobotId(rid) from None

    def positions(self) -> list[GridPoint]:
        return [r.pos for r in self.robots]

    def with_robots(self, robots) -> "WorldConfig":
        return replace(self, robots=tuple(robots))


def validate_config(cfg: WorldConfig, initial: bool = True) -> None:
    """Raise ValidationError unless ``cfg`` is a legal (initial) configuration."""
    if not (0 < cfg.rad <= Fraction(1, 2)):
        raise ValidationError("RadiusOutOfRange", f"rad={cfg.rad} not in (0, 1/2]")
    ids = [r.id for r in cfg.robots]
    if len(set(ids)) != len(ids):
        raise ValidationError("DuplicateId", "robot ids must be unique")
    seen = {}
    for r in cfg.robots:
        if r.pos in seen:
            raise ValidationError("DuplicatePosition",
                                  f"robots {seen[r.pos]} and {r.id} share {r.pos}")
        seen[r.pos] = r.id
        if r.chirality not in (1, -1):
            raise ValidationError("BadChirality", f"robot {r.id} chirality {r.chirality}")
    if cfg.n < 3:
        raise ValidationError("TooFewRobots", f"n={cfg.n} < 3")
    if initial and any(r.color is not Color.OFF for r in cfg.robots):
        raise ValidationError("NonInitialColors", "initial robots must all be off")
