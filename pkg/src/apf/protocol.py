"""Robot decision logic: local views, view predicates and the two-phase transition function.

Everything here is pure. A robot's whole knowledge is a ``LocalView``; the
output is a ``Decision``. Vertical quantities in a view are already expressed
in the observer's own y-orientation, so ``Move.UP`` always means "up as this
robot perceives it".
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Sequence

from .geometry import visible
from .model import ApfError, Color, Decision, Move, WorldConfig

PAIR_COLORS = frozenset({Color.CANDIDATE, Color.CALL, Color.REACHED})
PHASE2_RESET = frozenset({Color.MOVING1, Color.CANDIDATE, Color.TERMINAL1})


class ProtocolError(ApfError):
    pass


class IllegalViewState(ProtocolError):
    pass


class NoCandidatePair(ProtocolError):
    pass


class MoreThanOnePair(ProtocolError):
    pass


class EqualSequences(ProtocolError):
    pass


class NoLeaderVisible(ProtocolError):
    pass


class FrameConflict(ProtocolError):
    pass


class LocalizationFailed(ProtocolError):
    pass


class Side(str, enum.Enum):
    UP = "up"
    DOWN = "down"


class Seen(NamedTuple):
    dx: int
    dy: int
    color: Color


@dataclass(frozen=True)
class LocalView:
    self_color: Color
    others: tuple = ()

    def __post_init__(self):
        norm = tuple(sorted(Seen(int(dx), int(dy), Color(c)) for dx, dy, c in self.others))
        if any(s.dx == 0 and s.dy == 0 for s in norm):
            raise ValueError("a view cannot contain the observer's own cell")
        object.__setattr__(self, "self_color", Color(self.self_color))
        object.__setattr__(self, "others", norm)

    @classmethod
    def trusted(cls, self_color: Color, others: list) -> "LocalView":
        """Build from already-typed ``Seen`` entries without re-validation."""
        v = object.__new__(cls)
        object.__setattr__(v, "self_color", self_color)
        others.sort()
        object.__setattr__(v, "others", tuple(others))
        return v

    def mirrored(self) -> "LocalView":
        """Same scene seen with the opposite chirality."""
        return LocalView(self.self_color, tuple((s.dx, -s.dy, s.color) for s in self.others))


@dataclass(frozen=True)
class ProtocolOptions:
    # Only the leftmost robot on the leader's row may lift off. Disabling it
    # reproduces the plain pseudocode and is used to exercise the explorer.
    leftmost_liftoff: bool = True


DEFAULT_OPTIONS = ProtocolOptions()


def build_local_view(cfg: WorldConfig, rid: int, vis: Optional[Iterable[int]] = None) -> LocalView:
    """Snapshot of ``cfg`` as robot ``rid`` perceives it.

    ``vis`` optionally supplies precomputed ids of robots visible to ``rid``.
    """
    me = cfg.robot(rid)
    if vis is None:
        vis = [r.id for r in cfg.robots if r.id != rid and visible(cfg, rid, r.id)]
    x0, y0 = me.pos
    ch = me.chirality
    others = []
    for sid in vis:
        s = cfg.robot(sid)
        others.append((s.pos[0] - x0, ch * (s.pos[1] - y0), s.color))
    return LocalView(me.color, tuple(others))


class ViewQueries:
    """Region predicates over the visible robots of one view."""

    def __init__(self, view: LocalView):
        self.view = view
        self.others = view.others
        self.vline = [s for s in self.others if s.dx == 0]
        self.hline = [s for s in self.others if s.dy == 0]
        lefts = [s.dx for s in self.others if s.dx < 0]
        rights = [s.dx for s in self.others if s.dx > 0]
        self.L_I_dx = max(lefts) if lefts else None
        self.R_I_dx = min(rights) if rights else None
        self.L_I = [s for s in self.others if s.dx == self.L_I_dx] if lefts else []
        self.R_I = [s for s in self.others if s.dx == self.R_I_dx] if rights else []

    @property
    def is_terminal(self) -> bool:
        # topmost or bottommost on its own column
        return not (any(s.dy > 0 for s in self.vline) and any(s.dy < 0 for s in self.vline))

    @property
    def left_open_half_empty(self) -> bool:
        return self.L_I_dx is None

    @property
    def singleton_in_closed_left(self) -> bool:
        return not any(s.dx <= 0 for s in self.others)

    @property
    def leftmost_on_own_hline(self) -> bool:
        return not any(s.dx < 0 for s in self.hline)

    @property
    def next_right_vline_nonempty(self) -> bool:
        return any(s.dx == 1 for s in self.others)

    def occupied(self, dx: int, dy: int) -> bool:
        return any(s.dx == dx and s.dy == dy for s in self.others)

    def colors_on_vline(self) -> set:
        return {s.color for s in self.vline}

    def colors_in_L_I(self) -> set:
        return {s.color for s in self.L_I}

    def colors_in_R_I(self) -> set:
        return {s.color for s in self.R_I}

    def all_R_I_off(self) -> bool:
        return all(s.color is Color.OFF for s in self.R_I)

    def lowest_hline_with(self, color: Color) -> Optional[int]:
        ys = [s.dy for s in self.others if s.color is color]
        return min(ys) if ys else None


def view_queries(view: LocalView) -> ViewQueries:
    return ViewQueries(view)


class KLine(NamedTuple):
    two_y: int

    @property
    def on_grid_row(self) -> bool:
        return self.two_y % 2 == 0


def compute_K(view: LocalView, vline: Optional[int] = None) -> KLine:
    """Midline of the unique pair of candidate/call/reached robots sharing a column.

    ``vline`` restricts the search to one column (dx).
    """
    cols: dict[int, list[int]] = {}
    if view.self_color in PAIR_COLORS:
        cols.setdefault(0, []).append(0)
    for s in view.others:
        if s.color in PAIR_COLORS:
            cols.setdefault(s.dx, []).append(s.dy)
    if vline is not None:
        cols = {vline: cols.get(vline, [])}
    pairs = [ys for ys in cols.values() if len(ys) >= 2]
    if not pairs:
        raise NoCandidatePair("no two candidate/call/reached robots share a column")
    if len(pairs) > 1 or len(pairs[0]) > 2:
        raise MoreThanOnePair("ambiguous candidate pair")
    return KLine(sum(pairs[0]))


def _lambda_index(doubled_offset: int, on_row: bool) -> int:
    a = abs(doubled_offset)
    return a // 2 if on_row else (a + 1) // 2


def lambda_from_rows(ys: Iterable[int], K: KLine) -> tuple[tuple, tuple, bool]:
    on_row = K.on_grid_row
    up, down = set(), set()
    for y in ys:
        off = 2 * y - K.two_y
        if off == 0:
            continue
        (up if off > 0 else down).add(_lambda_index(off, on_row))
    m = max(up | down, default=0)
    lu = tuple(1 if i in up else 0 for i in range(1, m + 1))
    ld = tuple(1 if i in down else 0 for i in range(1, m + 1))
    return lu, ld, lu == ld


def lambda_and_symmetry(view: LocalView, vline: int, K: KLine) -> tuple[tuple, tuple, bool]:
    """Occupancy sequences of column ``vline`` read outward from K on both sides."""
    ys = [s.dy for s in view.others if s.dx == vline]
    if vline == 0:
        ys.append(0)
    return lambda_from_rows(ys, K)


def dominant_side(lambda_up: Sequence[int], lambda_down: Sequence[int]) -> Side:
    m = max(len(lambda_up), len(lambda_down))
    u = tuple(lambda_up) + (0,) * (m - len(lambda_up))
    d = tuple(lambda_down) + (0,) * (m - len(lambda_down))
    if u == d:
        raise EqualSequences("no dominant side for equal sequences")
    return Side.UP if u > d else Side.DOWN


# ---------------------------------------------------------------- phase 1

def _outward(q: ViewQueries) -> Move:
    """Vertical step away from the rest of the own column (positive y if alone)."""
    if any(s.dy > 0 for s in q.vline):
        return Move.DOWN
    return Move.UP


def _left_or_sidestep(q: ViewQueries) -> Decision:
    if not q.occupied(-1, 0):
        return Decision(Color.MOVING1, Move.LEFT)
    if q.is_terminal:
        step = _outward(q)
        if not q.occupied(0, 1 if step is Move.UP else -1):
            return Decision(Color.MOVING1, step)
    return Decision(Color.MOVING1)


def _phase1_off(q: ViewQueries) -> Decision:
    if (q.left_open_half_empty
            and not any(s.color is Color.LEADER1 for s in q.R_I + q.vline)
            and q.is_terminal):
        return Decision(Color.TERMINAL1)
    if len(q.L_I) == 2 and all(s.color is Color.CALL for s in q.L_I):
        two_y = q.L_I[0].dy + q.L_I[1].dy
        mine = abs(two_y)
        if all(abs(2 * s.dy - two_y) >= mine for s in q.vline):
            return Decision(Color.LEADER1 if two_y == 0 else Color.MOVING1)
    if any(s.color is Color.MOVING1 for s in q.vline):
        return Decision(Color.MOVING1)
    return Decision(Color.OFF)


def _phase1_terminal1(q: ViewQueries) -> Decision:
    if q.left_open_half_empty:
        return Decision(Color.CANDIDATE, Move.LEFT)
    if Color.CANDIDATE in q.colors_in_L_I():
        return Decision(Color.OFF)
    return Decision(Color.TERMINAL1)


def _phase1_candidate(q: ViewQueries) -> Decision:
    if q.singleton_in_closed_left and q.all_R_I_off():
        return Decision(Color.LEADER1)
    partners = [s for s in q.vline if s.color in (Color.CANDIDATE, Color.CALL)]
    if partners and q.is_terminal and q.all_R_I_off():
        if len(partners) > 1:
            raise IllegalViewState("candidate sees several partners on its column")
        K = KLine(partners[0].dy)
        if q.R_I_dx is None:
            ys = []
        else:
            ys = [s.dy for s in q.R_I]
        lu, ld, sym = lambda_from_rows(ys, K)
        if sym:
            return Decision(Color.CALL)
        side = dominant_side(lu, ld)
        mine = Side.UP if -K.two_y > 0 else Side.DOWN
        return Decision(Color.LEADER1 if side is mine else Color.CANDIDATE)
    if any(s.color is Color.LEADER1 for s in q.vline):
        return Decision(Color.OFF)
    return Decision(Color.CANDIDATE)


def _phase1_moving1(q: ViewQueries) -> Decision:
    li = q.colors_in_L_I()
    if Color.CALL in li and Color.REACHED not in li and q.is_terminal:
        if any(s.dy >= 0 for s in q.L_I) and any(s.dy <= 0 for s in q.L_I):
            step = _outward(q)
            if q.occupied(0, 1 if step is Move.UP else -1):
                return Decision(Color.MOVING1)
            return Decision(Color.MOVING1, step)
        return _left_or_sidestep(q)
    if Color.REACHED in q.colors_on_vline() and q.all_R_I_off():
        return _left_or_sidestep(q)
    if Color.REACHED in li or Color.CANDIDATE in li:
        return Decision(Color.OFF)
    return Decision(Color.MOVING1)


def _phase1_call(q: ViewQueries) -> Decision:
    v = q.colors_on_vline()
    if (Color.MOVING1 in v or Color.REACHED in v) and q.all_R_I_off():
        return Decision(Color.REACHED)
    if Color.LEADER1 in q.colors_in_R_I():
        return Decision(Color.OFF)
    return Decision(Color.CALL)


def _phase1_reached(q: ViewQueries) -> Decision:
    v = q.colors_on_vline()
    if (Color.REACHED in v or Color.CANDIDATE in v) and q.is_terminal and q.all_R_I_off():
        return Decision(Color.CANDIDATE)
    return Decision(Color.REACHED)


def _phase1_leader1(q: ViewQueries) -> Decision:
    blocked = Color.CALL in q.colors_in_L_I() or Color.CANDIDATE in q.colors_on_vline()
    if not q.singleton_in_closed_left or q.next_right_vline_nonempty:
        if not blocked:
            return Decision(Color.LEADER1, Move.LEFT)
    if blocked:
        return Decision(Color.LEADER1)
    if any(s.dy >= 0 for s in q.others) and any(s.dy <= 0 for s in q.others):
        if q.occupied(0, 1):
            return Decision(Color.LEADER1)
        return Decision(Color.LEADER1, Move.UP)
    return Decision(Color.LEADER)


_PHASE1 = {
    Color.OFF: _phase1_off,
    Color.TERMINAL1: _phase1_terminal1,
    Color.CANDIDATE: _phase1_candidate,
    Color.MOVING1: _phase1_moving1,
    Color.CALL: _phase1_call,
    Color.REACHED: _phase1_reached,
    Color.LEADER1: _phase1_leader1,
}


def phase1_transition(view: LocalView) -> Decision:
    if any(s.color is Color.LEADER for s in view.others) or view.self_color is Color.LEADER:
        raise IllegalViewState("phase-1 rule applied to a view containing a leader")
    if view.self_color is Color.DONE:
        return Decision(Color.DONE)
    if sum(1 for s in view.others if s.color is Color.LEADER1) + (view.self_color is Color.LEADER1) > 1:
        raise IllegalViewState("two leader1 robots in one view")
    return _PHASE1[view.self_color](ViewQueries(view))


# ---------------------------------------------------------------- phase 2

class EmbeddedTargets(tuple):
    """Ordered target points t_0 .. t_{n-1} in the leader-anchored frame."""

    def __new__(cls, points: Iterable[Sequence[int]]):
        return super().__new__(cls, tuple((int(x), int(y)) for x, y in points))

    @property
    def n(self) -> int:
        return len(self)


class Frame(NamedTuple):
    leader_at: tuple  # leader displacement in the local view, or None if self is the leader
    y_sign: Optional[int]  # +1 / -1, or None when undetermined


def infer_global_frame(view: LocalView) -> Frame:
    leaders = [s for s in view.others if s.color is Color.LEADER]
    if not leaders:
        raise NoLeaderVisible("no leader in view")
    if len(leaders) > 1:
        raise IllegalViewState("several leaders in view")
    ld = leaders[0]
    sides = {1 if s.dy > ld.dy else -1 for s in view.others if s.dy != ld.dy}
    if ld.dy != 0:
        sides.add(1 if 0 > ld.dy else -1)
    if len(sides) > 1:
        raise FrameConflict("robots on both sides of the leader's row")
    return Frame((ld.dx, ld.dy), sides.pop() if sides else None)


class _Global:
    """A view re-expressed in the leader-anchored frame (leader at (0,-1))."""

    def __init__(self, view: LocalView, frame: Frame):
        self.ysign = frame.y_sign or 1
        lx, ly = frame.leader_at
        self.me = (-lx, self.ysign * (-ly) - 1)
        self.robots = [((s.dx - lx, self.ysign * (s.dy - ly) - 1), s.color) for s in view.others]
        self.cells = {p for p, _ in self.robots}

    def up(self) -> Move:
        return Move.UP if self.ysign == 1 else Move.DOWN

    def down(self) -> Move:
        return Move.DOWN if self.ysign == 1 else Move.UP

    def step(self, move: Move, color: Color) -> Decision:
        """Decision for a move given in global terms, or a wait if the cell is taken."""
        x, y = self.me
        dx, dy = {Move.LEFT: (-1, 0), Move.RIGHT: (1, 0), Move.UP: (0, 1), Move.DOWN: (0, -1)}[move]
        if (x + dx, y + dy) in self.cells:
            return Decision(color)
        local = move
        if move is Move.UP:
            local = self.up()
        elif move is Move.DOWN:
            local = self.down()
        return Decision(color, local)

    def leader_row(self) -> list:
        return sorted(p[0] for p, c in self.robots if p[1] == -1 and c is not Color.LEADER)

    def any_color(self, color: Color) -> bool:
        return any(c is color for _, c in self.robots)


def _goto_line(g: _Global, column: int, color: Color = Color.OFF) -> Decision:
    x, y = g.me
    if y > 0:
        return g.step(Move.DOWN, color)
    if x > column:
        return g.step(Move.LEFT, color)
    if x < column:
        return g.step(Move.RIGHT, color)
    return g.step(Move.DOWN, color)


def _goto_target(g: _Global, target: tuple, color: Color = Color.OFF) -> Decision:
    x, y = g.me
    tx, ty = target
    if (x, y) == (tx, ty):
        return Decision(Color.DONE)
    if y < ty - 1:
        return g.step(Move.UP, color)
    if y > ty - 1 and x != tx:
        return g.step(Move.DOWN, color)
    if x > tx:
        return g.step(Move.LEFT, color)
    if x < tx:
        return g.step(Move.RIGHT, color)
    return g.step(Move.UP if y < ty else Move.DOWN, color)


def goto_line_step(view: LocalView, frame: Frame, column: int) -> Decision:
    """One GotoLine step toward (column, -1): down to row 0, across, then down."""
    return _goto_line(_Global(view, frame), column)


def goto_target_step(view: LocalView, frame: Frame, target) -> Decision:
    """One GotoTarget step: vertical to the row below the target, across, then up."""
    return _goto_target(_Global(view, frame), tuple(target))


def _row_shape(xs: list, n: int) -> tuple[str, int]:
    i = len(xs)
    if i == 0:
        return "empty", 0
    if xs == list(range(1, i + 1)):
        return "prefix", i
    if xs == list(range(n - i, n)):
        return "suffix", i
    return "other", i


def _eligible(g: _Global) -> bool:
    x, y = g.me
    if y <= -1:
        return False
    for (ox, oy), _ in g.robots:
        if oy == y and ox < x:
            return False
        if -1 < oy < y:
            return False
    return True


def _phase2_off(g: _Global, targets: EmbeddedTargets, opts: ProtocolOptions) -> Decision:
    n = targets.n
    x, y = g.me
    if _eligible(g):
        shape, i = _row_shape(g.leader_row(), n)
        if shape == "empty":
            if g.any_color(Color.DONE):
                return _goto_target(g, targets[n - 2])
            return _goto_line(g, 1)
        if shape == "prefix":
            return _goto_line(g, i + 1)
        if shape == "suffix":
            return _goto_target(g, targets[n - i - 2])
        return Decision(Color.OFF)
    if y == -1 and x > 0:
        if any(p[1] > -1 and c is not Color.DONE for p, c in g.robots):
            return Decision(Color.OFF)
        if opts.leftmost_liftoff and any(p[1] == -1 and 0 < p[0] < x for p, _ in g.robots):
            return Decision(Color.OFF)
        return g.step(Move.UP, Color.OFF)
    return Decision(Color.OFF)


def _phase2_reset(g: _Global, targets: EmbeddedTargets) -> Decision:
    if _eligible(g) and not g.any_color(Color.DONE):
        shape, i = _row_shape(g.leader_row(), targets.n)
        if shape in ("empty", "prefix"):
            return _goto_line(g, i + 1, Color.OFF)
    # stale phase-1 colour: drop to off in place and let the off rules take over
    return Decision(Color.OFF)


def localize_leader(view: LocalView, targets: EmbeddedTargets) -> tuple[tuple, int]:
    """Own position in the target frame, from the leftmost done robot on the lowest done row."""
    done = [s for s in view.others if s.color is Color.DONE]
    if not done:
        raise LocalizationFailed("no done robot visible")
    sides = {1 if s.dy > 0 else -1 for s in view.others if s.dy != 0}
    if len(sides) > 1:
        raise FrameConflict("leader sees robots on both sides of its row")
    ysign = sides.pop() if sides else 1
    low = min(ysign * s.dy for s in done)
    ref = min((s for s in done if ysign * s.dy == low), key=lambda s: s.dx)
    tx, ty = targets[targets.n - 2]
    return (tx - ref.dx, ty - ysign * ref.dy), ysign


def leader_move_step(view: LocalView, targets: EmbeddedTargets) -> Decision:
    (x, y), ysign = localize_leader(view, targets)
    g = _Global.__new__(_Global)
    g.ysign = ysign
    g.me = (x, y)
    g.cells = set()
    for s in view.others:
        g.cells.add((x + s.dx, y + ysign * s.dy))
    tx, ty = targets[targets.n - 1]
    if (x, y) == (tx, ty):
        return Decision(Color.DONE)
    if y < 0:
        return g.step(Move.UP, Color.LEADER)
    if y == 0 and x != tx:
        return g.step(Move.RIGHT if x < tx else Move.LEFT, Color.LEADER)
    return g.step(Move.UP if y < ty else Move.DOWN, Color.LEADER)


def phase2_transition(view: LocalView, targets: EmbeddedTargets,
                      opts: ProtocolOptions = DEFAULT_OPTIONS) -> Decision:
    me = view.self_color
    if me is Color.LEADER:
        if any(s.color is Color.LEADER for s in view.others):
            raise IllegalViewState("leader sees another leader")
        if view.others and all(s.color is Color.DONE for s in view.others):
            return leader_move_step(view, targets)
        return Decision(Color.LEADER)
    if me is Color.DONE:
        return Decision(Color.DONE)
    g = _Global(view, infer_global_frame(view))
    if me is Color.OFF:
        return _phase2_off(g, targets, opts)
    if me in PHASE2_RESET:
        return _phase2_reset(g, targets)
    return Decision(me)


@lru_cache(maxsize=500_000)
def _decide(view: LocalView, targets: EmbeddedTargets, opts: ProtocolOptions) -> Decision:
    if view.self_color is Color.LEADER or any(s.color is Color.LEADER for s in view.others):
        return phase2_transition(view, targets, opts)
    return phase1_transition(view)


def decide(view: LocalView, targets: EmbeddedTargets, opts: ProtocolOptions = DEFAULT_OPTIONS) -> Decision:
    """Full transition function: phase 2 once a leader is in sight, phase 1 otherwise."""
    return _decide(view, EmbeddedTargets(targets), opts)
