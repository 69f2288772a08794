"""Discrete-event execution of the protocol under synchronous and asynchronous schedulers.

A robot's cycle is Look (snapshot + decision) followed, possibly much later,
by Move (apply the stale decision). Monitors run after every applied event.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .embedding import TargetPattern, check_solvable, embed_pattern, match_reflection
from .geometry import VisibilityTable
from .model import ApfError, Color, Decision, Move, Robot, WorldConfig, validate_config
from .protocol import (DEFAULT_OPTIONS, FrameConflict, EmbeddedTargets, LocalView,
                       ProtocolError, ProtocolOptions, Seen, decide)

log = logging.getLogger(__name__)

LEGAL_EDGES = {
    Color.OFF: {Color.TERMINAL1, Color.MOVING1, Color.LEADER1, Color.DONE},
    Color.TERMINAL1: {Color.CANDIDATE, Color.OFF},
    Color.CANDIDATE: {Color.LEADER1, Color.CALL, Color.OFF},
    Color.CALL: {Color.REACHED, Color.OFF},
    Color.MOVING1: {Color.OFF},
    Color.REACHED: {Color.CANDIDATE},
    Color.LEADER1: {Color.LEADER},
    Color.LEADER: {Color.DONE},
    Color.DONE: set(),
}

PROTOCOL_DECISIONS = (
    "terminal robot = topmost or bottommost on its column",
    "lift-off only for the leftmost non-leader on the leader's row",
    "lift-off waits until no unfinished robot is above the leader's row",
    "leader1 waits while a call robot is on the left line or a candidate shares its column",
    "moving1 steps outward on its column when its left cell is taken",
    "undetermined y-orientation falls back to own chirality",
)


class StateSpaceBudgetExceeded(ApfError):
    pass


# ---------------------------------------------------------------- policies

@dataclass(frozen=True)
class Fsync:
    name = "fsync"

    def params(self):
        return {"name": self.name}


@dataclass(frozen=True)
class Ssync:
    activation_prob: float = 0.5
    seed: int = 0
    name = "ssync"

    def __post_init__(self):
        if not 0 < self.activation_prob <= 1:
            raise ValueError("activation_prob must lie in (0, 1]")

    def params(self):
        return {"name": self.name, "p": self.activation_prob, "seed": self.seed}


@dataclass(frozen=True)
class AsyncRandom:
    seed: int = 0
    max_pending_window: int = 8
    fairness: Optional[int] = None
    name = "async-random"

    def params(self):
        return {"name": self.name, "seed": self.seed, "window": self.max_pending_window,
                "fairness": self.fairness}


@dataclass(frozen=True)
class AsyncAdversarial:
    seed: int = 0
    max_pending_window: int = 32
    fairness: Optional[int] = None
    name = "async-adversarial"

    def params(self):
        return {"name": self.name, "seed": self.seed, "window": self.max_pending_window,
                "fairness": self.fairness}


def policy_from_params(p: dict):
    name = p["name"]
    if name == "fsync":
        return Fsync()
    if name == "ssync":
        return Ssync(p.get("p", 0.5), p.get("seed", 0))
    if name == "async-random":
        return AsyncRandom(p.get("seed", 0), p.get("window", 8), p.get("fairness"))
    if name == "async-adversarial":
        return AsyncAdversarial(p.get("seed", 0), p.get("window", 32), p.get("fairness"))
    raise ValueError(f"unknown scheduler {name!r}")


# ---------------------------------------------------------------- outcome

@dataclass
class Outcome:
    kind: str  # Formed | Collision | MonitorViolation | Stuck | BudgetExceeded
    events: int = 0
    detail: str = ""
    monitor: Optional[str] = None
    sigma: Optional[int] = None

    def to_json(self) -> dict:
        d = {"verdict": self.kind, "events": self.events}
        if self.detail:
            d["detail"] = self.detail
        if self.monitor:
            d["monitor"] = self.monitor
        if self.sigma is not None:
            d["sigma"] = self.sigma
        return d


class Collision(ApfError):
    pass


class MonitorViolation(ApfError):
    def __init__(self, name: str, detail: str = ""):
        self.name = name
        self.detail = detail
        super().__init__(f"{name}: {detail}")


_DELTA = {Move.LEFT: (-1, 0), Move.RIGHT: (1, 0), Move.UP: (0, 1), Move.DOWN: (0, -1)}


def move_target(pos, move: Move, chirality: int):
    if move is Move.NONE:
        return pos
    dx, dy = _DELTA[move]
    return (pos[0] + dx, pos[1] + chirality * dy)


def apply_moves(cfg: WorldConfig, moves: dict, synchronous: bool = True) -> WorldConfig:
    """Apply ``{robot_id: target}`` at once; raise Collision on any conflict."""
    pos = {r.id: r.pos for r in cfg.robots}
    for rid, t in moves.items():
        p = pos[rid]
        if abs(p[0] - t[0]) + abs(p[1] - t[1]) != 1:
            raise ValueError(f"robot {rid}: {p}->{t} is not a unit step")
    if not synchronous and len(moves) != 1:
        raise ValueError("asynchronous application moves one robot at a time")
    targets = {}
    for rid, t in moves.items():
        if t in targets:
            raise Collision(f"same target {t} for robots {targets[t]} and {rid}")
        targets[t] = rid
    stationary = {p: rid for rid, p in pos.items() if rid not in moves}
    for rid, t in moves.items():
        if t in stationary:
            raise Collision(f"robot {rid} moves onto stationary robot {stationary[t]} at {t}")
    by_pos = {p: rid for rid, p in pos.items()}
    for rid, t in moves.items():
        other = by_pos.get(t)
        if other is not None and other in moves and moves[other] == pos[rid]:
            raise Collision(f"robots {rid} and {other} swap across an edge")
    return cfg.with_robots(Robot(r.id, moves.get(r.id, r.pos), r.color, r.chirality) for r in cfg.robots)


# ---------------------------------------------------------------- world

class World:
    """Mutable simulation state with visibility cached per position version."""

    def __init__(self, cfg: WorldConfig):
        self.ids = [r.id for r in cfg.robots]
        self.idx = {rid: k for k, rid in enumerate(self.ids)}
        self.pos = [r.pos for r in cfg.robots]
        self.col = [r.color for r in cfg.robots]
        self.chi = [r.chirality for r in cfg.robots]
        self.rad = cfg.rad
        self.blocking = cfg.blocking
        self.pos_version = 0
        self.version = 0
        self._table = None
        self._rows: dict = {}

    @property
    def n(self) -> int:
        return len(self.pos)

    def config(self) -> WorldConfig:
        return WorldConfig(tuple(Robot(self.ids[k], self.pos[k], self.col[k], self.chi[k])
                                 for k in range(self.n)), self.rad, self.blocking)

    def table(self) -> VisibilityTable:
        if self._table is None:
            self._table = VisibilityTable(self.pos, self.rad, self.blocking)
        return self._table

    def visible_from(self, k: int) -> list:
        row = self._rows.get(k)
        if row is None:
            row = self.table().row(k)
            self._rows[k] = row
        return row

    def view(self, k: int) -> LocalView:
        x0, y0 = self.pos[k]
        ch = self.chi[k]
        pos, col = self.pos, self.col
        return LocalView.trusted(col[k], [Seen(pos[j][0] - x0, ch * (pos[j][1] - y0), col[j])
                                          for j in self.visible_from(k)])

    def set_pos(self, k: int, p) -> None:
        self.pos[k] = p
        self.pos_version += 1
        self.version += 1
        self._table = None
        self._rows.clear()

    def set_col(self, k: int, c: Color) -> None:
        self.col[k] = c
        self.version += 1

    def occupied_by(self, p) -> Optional[int]:
        try:
            return self.pos.index(p)
        except ValueError:
            return None


class Monitors:
    def __init__(self, world: World):
        self.w = world
        self.leader1_ever: set = set()
        self.leader_ever: set = set()
        self.line_complete = False

    def on_color(self, k: int, old: Color, new: Color) -> None:
        if old is new:
            return
        legal = new in LEGAL_EDGES[old]
        if not legal:
            raise MonitorViolation("M4", f"robot {self.w.ids[k]}: {old}->{new}")
        if new is Color.LEADER:
            self._check_leader_birth(k)

    def _check_leader_birth(self, k: int) -> None:
        w = self.w
        x, y = w.pos[k]
        rest = [w.pos[j] for j in range(w.n) if j != k]
        if any(px <= x for px, _ in rest):
            raise MonitorViolation("M5", "new leader's closed left half is not singleton")
        if any(py >= y for _, py in rest) and any(py <= y for _, py in rest):
            raise MonitorViolation("M5", "robots on both closed vertical halves of new leader")

    def check(self) -> None:
        w = self.w
        if len(set(w.pos)) != w.n:
            raise MonitorViolation("M1", "two robots share a grid point")
        l1 = [k for k in range(w.n) if w.col[k] is Color.LEADER1]
        ld = [k for k in range(w.n) if w.col[k] is Color.LEADER]
        self.leader1_ever.update(l1)
        self.leader_ever.update(ld)
        if len(l1) > 1 or len(ld) > 1 or len(self.leader1_ever) > 1 or len(self.leader_ever) > 1:
            raise MonitorViolation("M2", f"leader1={sorted(self.leader1_ever)} leader={sorted(self.leader_ever)}")
        for k in l1:
            x, y = w.pos[k]
            if (x - 1, y) in w.pos:
                raise MonitorViolation("M3", f"leader1 robot {w.ids[k]} has an occupied left cell")
        if ld:
            row = w.pos[ld[0]][1]
            if not self.line_complete:
                self.line_complete = all(w.pos[j][1] == row for j in range(w.n))
            if self.line_complete:
                loose = [j for j in range(w.n) if w.col[j] is Color.OFF and w.pos[j][1] != row]
                if len(loose) > 1:
                    raise MonitorViolation("M6", f"{len(loose)} off robots left the line at once")


# ---------------------------------------------------------------- trace

@dataclass
class Trace:
    header: dict
    events: list = field(default_factory=list)
    record: bool = True

    def add(self, **ev) -> None:
        if self.record:
            ev = {"seq": len(self.events), **ev}
            self.events.append(ev)
        else:
            self.events.append(None)

    def __len__(self) -> int:
        return len(self.events)


def _dec_json(d: Decision) -> dict:
    return {"col": d.new_color.value, "mv": d.move.value}


def make_header(cfg: WorldConfig, pattern, policy, opts: ProtocolOptions, max_events: int) -> dict:
    return {
        "header": True,
        "policy": policy.params(),
        "seed": getattr(policy, "seed", None),
        "blocking": cfg.blocking.value,
        "rad": str(cfg.rad),
        "max_events": max_events,
        "leftmost_liftoff": opts.leftmost_liftoff,
        "protocol_decisions": list(PROTOCOL_DECISIONS),
        "robots": [{"id": r.id, "pos": list(r.pos), "chirality": r.chirality} for r in cfg.robots],
        "pattern": sorted([list(p) for p in (pattern.points if isinstance(pattern, TargetPattern) else pattern)]),
    }


# ---------------------------------------------------------------- runner

class _Runner:
    def __init__(self, cfg, pattern, policy, max_events, opts, record):
        self.w = World(cfg)
        self.pattern = pattern if isinstance(pattern, TargetPattern) else TargetPattern(pattern)
        self.targets = embed_pattern(self.pattern)
        self.policy = policy
        self.max_events = max_events
        self.opts = opts
        self.mon = Monitors(self.w)
        self.trace = Trace(make_header(cfg, self.pattern, policy, opts, max_events), record=record)
        self.null_since_change: set = set()
        self._dec_cache: dict = {}
        self.done_count = sum(1 for c in self.w.col if c is Color.DONE)

    # decisions -----------------------------------------------------
    def decide(self, k: int) -> Decision:
        key = (k, self.w.version)
        d = self._dec_cache.get(key)
        if d is None:
            view = self.w.view(k)
            try:
                d = decide(view, self.targets, self.opts)
            except FrameConflict as exc:
                raise MonitorViolation("M7", str(exc)) from exc
            except ProtocolError as exc:
                raise MonitorViolation(type(exc).__name__, str(exc)) from exc
            if len(self._dec_cache) > 4096:
                self._dec_cache.clear()
            self._dec_cache[key] = d
        return d

    def is_null(self, k: int, d: Decision) -> bool:
        return d.move is Move.NONE and d.new_color is self.w.col[k]

    def look(self, k: int) -> Decision:
        d = self.decide(k)
        w = self.w
        self.trace.add(r=w.ids[k], k="look", pos=list(w.pos[k]), col=w.col[k].value, dec=_dec_json(d))
        return d

    # effects -------------------------------------------------------
    def _recolor(self, k: int, c: Color) -> bool:
        old = self.w.col[k]
        if c is old:
            return False
        self.mon.on_color(k, old, c)
        self.w.set_col(k, c)
        self.done_count += (c is Color.DONE) - (old is Color.DONE)
        self.trace.add(r=self.w.ids[k], k="color", pos=list(self.w.pos[k]), col=c.value)
        return True

    def apply_one(self, k: int, d: Decision) -> bool:
        """Asynchronous Move of a single robot; returns whether the world changed."""
        w = self.w
        changed = self._recolor(k, d.new_color)
        if d.move is not Move.NONE:
            t = move_target(w.pos[k], d.move, w.chi[k])
            other = w.occupied_by(t)
            if other is not None:
                raise Collision(f"robot {w.ids[k]} moves onto robot {w.ids[other]} at {t}")
            w.set_pos(k, t)
            self.trace.add(r=w.ids[k], k="move", pos=list(t), col=w.col[k].value)
            changed = True
        if changed:
            self.null_since_change.clear()
            self.mon.check()
        return changed

    def apply_sync(self, decisions: dict) -> bool:
        w = self.w
        moves = {}
        for k, d in decisions.items():
            if d.move is not Move.NONE:
                moves[k] = move_target(w.pos[k], d.move, w.chi[k])
        if moves:
            cfg = apply_moves(w.config(), {w.ids[k]: t for k, t in moves.items()})
            del cfg
        changed = False
        for k, d in decisions.items():
            changed |= self._recolor(k, d.new_color)
        for k, t in moves.items():
            w.set_pos(k, t)
            self.trace.add(r=w.ids[k], k="move", pos=list(t), col=w.col[k].value)
            changed = True
        if changed:
            self.mon.check()
        return changed

    def formed(self) -> Optional[int]:
        if self.done_count != self.w.n:
            return None
        return match_reflection(self.w.pos, self.pattern)

    # schedulers ----------------------------------------------------
    def run(self) -> Outcome:
        try:
            self.mon.check()
            if isinstance(self.policy, (Fsync, Ssync)):
                return self._run_sync()
            return self._run_async()
        except Collision as exc:
            return Outcome("Collision", len(self.trace), str(exc))
        except MonitorViolation as exc:
            return Outcome("MonitorViolation", len(self.trace), exc.detail, exc.name)

    def _finish(self) -> Optional[Outcome]:
        sigma = self.formed()
        if sigma is not None:
            return Outcome("Formed", len(self.trace), sigma=sigma)
        if len(self.trace) >= self.max_events:
            return Outcome("BudgetExceeded", len(self.trace))
        return None

    def _run_sync(self) -> Outcome:
        rng = random.Random(getattr(self.policy, "seed", 0))
        n = self.w.n
        p = self.policy.activation_prob if isinstance(self.policy, Ssync) else 1.0
        idle_rounds = 0
        while True:
            out = self._finish()
            if out:
                return out
            if p >= 1.0:
                active = list(range(n))
            else:
                active = [k for k in range(n) if rng.random() < p] or [rng.randrange(n)]
            decisions = {k: self.look(k) for k in active}
            if self.apply_sync(decisions):
                idle_rounds = 0
                self.null_since_change.clear()
            else:
                self.null_since_change.update(active)
                idle_rounds += 1
                if len(self.null_since_change) == n:
                    return Outcome("Stuck", len(self.trace), "every robot decided null since the last change")

    def _run_async(self) -> Outcome:
        pol = self.policy
        rng = random.Random(pol.seed)
        n = self.w.n
        window = max(0, pol.max_pending_window)
        fair = pol.fairness or 4 * n
        adversarial = isinstance(pol, AsyncAdversarial)
        pending: dict = {}  # k -> [decision, age]
        since_cycle = [0] * n
        while True:
            out = self._finish()
            if out:
                return out
            forced = [k for k, (_, age) in pending.items() if age >= window]
            starving = [k for k in range(n) if since_cycle[k] >= fair
                        and (k in pending or k not in self.null_since_change)]
            lookers = [k for k in range(n) if k not in pending and k not in self.null_since_change]
            if forced:
                k = min(forced, key=lambda j: (-pending[j][1], j))
                action = "move"
            elif starving:
                k = starving[0]
                action = "move" if k in pending else "look"
            elif not lookers and not pending:
                return Outcome("Stuck", len(self.trace), "every robot decided null since the last change")
            elif adversarial:
                if lookers:
                    k, action = rng.choice(lookers), "look"
                else:
                    k, action = rng.choice(sorted(pending)), "move"
            else:
                pool = [(k, "look") for k in lookers] + [(k, "move") for k in sorted(pending)]
                k, action = rng.choice(pool)
            if action == "look":
                d = self.look(k)
                if self.is_null(k, d):
                    self.null_since_change.add(k)
                    self._cycle_done(k, since_cycle)
                else:
                    pending[k] = [d, 0]
            else:
                d, _ = pending.pop(k)
                for j in pending:
                    pending[j][1] += 1
                self.apply_one(k, d)
                self._cycle_done(k, since_cycle)

    @staticmethod
    def _cycle_done(k: int, since_cycle: list) -> None:
        for j in range(len(since_cycle)):
            since_cycle[j] += 1
        since_cycle[k] = 0


def run(cfg: WorldConfig, pattern, policy=None, max_events: int = 1_000_000,
        opts: ProtocolOptions = DEFAULT_OPTIONS, record: bool = True, check: bool = True):
    """Execute the protocol to a verdict. Returns (Outcome, Trace)."""
    policy = policy or AsyncRandom()
    pattern = pattern if isinstance(pattern, TargetPattern) else TargetPattern(pattern)
    if check:
        validate_config(cfg)
        check_solvable(cfg)
        if pattern.n != cfg.n:
            from .model import ValidationError
            raise ValidationError("SizeMismatch", f"pattern has {pattern.n} points for {cfg.n} robots")
    r = _Runner(cfg, pattern, policy, max_events, opts, record)
    out = r.run()
    log.info("run finished: %s after %d events", out.kind, out.events)
    return out, r.trace


# ---------------------------------------------------------------- explore

@dataclass
class ExhaustiveResult:
    all_formed: bool
    states: int
    counterexample: Optional[Outcome] = None
    trace: list = field(default_factory=list)


def explore(cfg: WorldConfig, pattern, depth_bound: int = 10_000, pending_window: int = 1,
            opts: ProtocolOptions = DEFAULT_OPTIONS, max_states: int = 2_000_000) -> ExhaustiveResult:
    """Depth-first enumeration of every interleaving with pending windows <= ``pending_window``."""
    if depth_bound <= 0:
        raise StateSpaceBudgetExceeded("depth bound must be positive")
    pattern = pattern if isinstance(pattern, TargetPattern) else TargetPattern(pattern)
    validate_config(cfg)
    check_solvable(cfg)
    targets = embed_pattern(pattern)
    ids = [r.id for r in cfg.robots]
    chi = tuple(r.chirality for r in cfg.robots)
    n = len(ids)
    visited: set = set()
    on_stack: set = set()
    view_cache: dict = {}

    def world_of(pos, col) -> World:
        w = World(cfg)
        w.pos = list(pos)
        w.col = list(col)
        return w

    def decision(pos, col, k) -> Decision:
        key = (pos, col, k)
        d = view_cache.get(key)
        if d is None:
            w = world_of(pos, col)
            try:
                d = decide(w.view(k), targets, opts)
            except FrameConflict as exc:
                raise MonitorViolation("M7", str(exc)) from exc
            except ProtocolError as exc:
                raise MonitorViolation(type(exc).__name__, str(exc)) from exc
            view_cache[key] = d
        return d

    def successors(state):
        pos, col, pend, l1ever = state
        out = []
        for k in range(n):
            if pend[k] is None:
                d = decision(pos, col, k)
                if d.move is Move.NONE and d.new_color is col[k]:
                    continue
                np_ = list(pend)
                np_[k] = (d, 0)
                out.append((("look", k, d), (pos, col, tuple(np_), l1ever)))
            else:
                d, _ = pend[k]
                if any(pend[j] is not None and j != k and pend[j][1] + 1 > pending_window for j in range(n)):
                    continue
                out.append((("move", k, d), None))
        return out

    def apply(state, k, d):
        pos, col, pend, l1ever = state
        pos, col = list(pos), list(col)
        old = col[k]
        if d.new_color is not old and d.new_color not in LEGAL_EDGES[old]:
            raise MonitorViolation("M4", f"{old}->{d.new_color}")
        col[k] = d.new_color
        if d.move is not Move.NONE:
            t = move_target(pos[k], d.move, chi[k])
            if t in pos:
                raise Collision(f"robot {ids[k]} moves onto an occupied point {t}")
            pos[k] = t
        w = world_of(pos, col)
        mon = Monitors(w)
        mon.leader1_ever = set(l1ever)
        if d.new_color is Color.LEADER and old is not Color.LEADER:
            mon._check_leader_birth(k)
        mon.check()
        np_ = [None if p is None else (p[0], p[1] + 1) for p in pend]
        np_[k] = None
        return (tuple(pos), tuple(col), tuple(np_), frozenset(mon.leader1_ever))

    start = (tuple(r.pos for r in cfg.robots), tuple(r.color for r in cfg.robots),
             (None,) * n, frozenset())
    path: list = []

    def formed(state) -> bool:
        pos, col, _, _ = state
        return all(c is Color.DONE for c in col) and match_reflection(pos, pattern) is not None

    # iterative DFS: frames of (state, successor iterator)
    stack = [(start, None)]
    on_stack.add(start)
    visited.add(start)
    iters = [iter(())]
    try:
        if not formed(start):
            iters[-1] = iter(successors(start))
            if not _peek_nonempty(start, successors):
                return ExhaustiveResult(False, 1, Outcome("Stuck", 0, "deadlock at the initial state"), [])
        else:
            return ExhaustiveResult(True, 1)
        while stack:
            if len(visited) > max_states:
                raise StateSpaceBudgetExceeded(f"more than {max_states} states")
            state = stack[-1][0]
            nxt = next(iters[-1], None)
            if nxt is None:
                on_stack.discard(state)
                stack.pop()
                iters.pop()
                if path:
                    path.pop()
                continue
            (kind, k, d), child = nxt
            if child is None:
                child = apply(state, k, d)
            step = {"k": kind, "r": ids[k], "dec": _dec_json(d)}
            if child in on_stack:
                return ExhaustiveResult(False, len(visited),
                                        Outcome("Stuck", len(path) + 1, "livelock: execution revisits a state"),
                                        path + [step])
            if child in visited:
                continue
            visited.add(child)
            if formed(child):
                continue
            succ = successors(child)
            if not succ:
                return ExhaustiveResult(False, len(visited),
                                        Outcome("Stuck", len(path) + 1, "deadlock: no robot can act"),
                                        path + [step])
            if len(stack) >= depth_bound:
                raise StateSpaceBudgetExceeded(f"depth bound {depth_bound} reached")
            path.append(step)
            stack.append((child, None))
            on_stack.add(child)
            iters.append(iter(succ))
    except Collision as exc:
        return ExhaustiveResult(False, len(visited), Outcome("Collision", len(path), str(exc)), path)
    except MonitorViolation as exc:
        return ExhaustiveResult(False, len(visited),
                                Outcome("MonitorViolation", len(path), exc.detail, exc.name), path)
    return ExhaustiveResult(True, len(visited))


def _peek_nonempty(state, successors) -> bool:
    return bool(successors(state))


__all__ = [
    "Fsync", "Ssync", "AsyncRandom", "AsyncAdversarial", "Outcome", "Collision", "MonitorViolation",
    "StateSpaceBudgetExceeded", "World", "Monitors", "Trace", "apply_moves", "run", "explore",
    "ExhaustiveResult", "policy_from_params", "LEGAL_EDGES", "Fraction",
]
