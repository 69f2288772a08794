"""Target patterns: normalization, ordering, solvability gate and the end-state check."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .model import ApfError, Color, ValidationError, WorldConfig
from .protocol import EmbeddedTargets


class Unsolvable(ApfError):
    """The configuration mirrors onto itself across a robot-free horizontal axis."""

    def __init__(self, axis: Fraction):
        self.axis = axis
        super().__init__(f"Unsolvable: mirror axis y={axis} carries no robot")


@dataclass(frozen=True)
class TargetPattern:
    points: frozenset

    def __init__(self, points: Iterable[Sequence[int]]):
        pts = [(int(p[0]), int(p[1])) for p in points]
        if len(set(pts)) != len(pts):
            raise ValidationError("DuplicatePosition", "pattern points must be distinct")
        object.__setattr__(self, "points", frozenset(pts))

    @property
    def n(self) -> int:
        return len(self.points)


def mirror_axis(positions: Iterable[Sequence[int]]) -> Optional[Fraction]:
    """The horizontal axis the point set is mirror-symmetric about, if any."""
    pts = {(int(x), int(y)) for x, y in positions}
    if not pts:
        return None
    ys = [y for _, y in pts]
    s = min(ys) + max(ys)
    if all((x, s - y) in pts for x, y in pts):
        return Fraction(s, 2)
    return None


def check_solvable(cfg: WorldConfig) -> None:
    """Raise Unsolvable if the robots mirror across a horizontal line that carries no robot."""
    axis = mirror_axis(cfg.positions())
    if axis is None:
        return
    if axis.denominator == 1 and any(y == axis for _, y in cfg.positions()):
        return
    raise Unsolvable(axis)


def embed_pattern(pattern) -> EmbeddedTargets:
    pts = pattern.points if isinstance(pattern, TargetPattern) else {tuple(p) for p in pattern}
    mx = min(x for x, _ in pts)
    my = min(y for _, y in pts)
    moved = [(x - mx + 1, y - my + 1) for x, y in pts]
    moved.sort(key=lambda p: (-p[1], -p[0]))
    return EmbeddedTargets(moved)


def match_reflection(positions: Iterable[Sequence[int]], pattern) -> Optional[int]:
    """Sign σ for which (x, σy) translates onto the pattern, or None."""
    pts = pattern.points if isinstance(pattern, TargetPattern) else {tuple(p) for p in pattern}
    target = sorted(embed_pattern(pts))
    pos = list(positions)
    if len(pos) != len(pts):
        return None
    for sigma in (1, -1):
        if sorted(embed_pattern([(x, sigma * y) for x, y in pos])) == target:
            return sigma
    return None


def pattern_formed(cfg: WorldConfig, pattern) -> bool:
    if any(r.color is not Color.DONE for r in cfg.robots):
        return False
    return match_reflection(cfg.positions(), pattern) is not None
