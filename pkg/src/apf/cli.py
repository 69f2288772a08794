"""``apf`` command line: run, validate, fuzz, explore and render."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import random
import sys
from collections import Counter
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .embedding import TargetPattern, Unsolvable, check_solvable
from .model import (ApfError, BlockingMode, Color, Robot, ValidationError, WorldConfig, parse_rad,
                    validate_config)
from .protocol import ProtocolOptions
from .sim import (AsyncAdversarial, AsyncRandom, Fsync, Outcome, Ssync, StateSpaceBudgetExceeded, explore,
                  policy_from_params, run)

log = logging.getLogger("apf")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class ParseError(ApfError):
    def __init__(self, path, where: str, msg: str):
        self.path = str(path)
        self.where = where
        super().__init__(f"{path}: {where}: {msg}")


# ---------------------------------------------------------------- input

def _read_json(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ParseError(path, "file", str(exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(path, f"line {exc.lineno}", exc.msg) from exc


def config_from_json(doc, path="<config>", blocking: Optional[str] = None) -> WorldConfig:
    if not isinstance(doc, dict) or "robots" not in doc:
        raise ParseError(path, "robots", "missing robot list")
    rad = parse_rad(doc.get("rad", "1/2"))
    mode = blocking or doc.get("blocking", "closed")
    try:
        mode = BlockingMode(mode)
    except ValueError as exc:
        raise ParseError(path, "blocking", f"unknown mode {mode!r}") from exc
    robots = []
    for k, r in enumerate(doc["robots"]):
        try:
            x, y = r["pos"]
            robots.append(Robot(int(r.get("id", k)), (int(x), int(y)),
                                Color(r.get("color", "off")), int(r.get("chirality", 1))))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(path, f"robots[{k}]", f"bad robot entry: {exc}") from exc
    return WorldConfig(tuple(robots), rad, mode)


def config_to_json(cfg: WorldConfig) -> dict:
    return {"rad": str(cfg.rad), "blocking": cfg.blocking.value,
            "robots": [{"id": r.id, "pos": list(r.pos), "chirality": r.chirality} for r in cfg.robots]}


def pattern_from_json(doc, path="<pattern>") -> TargetPattern:
    try:
        pts = [(int(p[0]), int(p[1])) for p in doc["points"]]
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ParseError(path, "points", f"expected a list of [x, y]: {exc}") from exc
    return TargetPattern(pts)


def load_inputs(config_path, pattern_path=None, blocking: Optional[str] = None):
    cfg = config_from_json(_read_json(config_path), config_path, blocking)
    validate_config(cfg)
    pattern = None
    if pattern_path is not None:
        pattern = pattern_from_json(_read_json(pattern_path), pattern_path)
        if pattern.n != cfg.n:
            raise ValidationError("SizeMismatch", f"pattern has {pattern.n} points, config has {cfg.n} robots")
    return cfg, pattern


# ---------------------------------------------------------------- fuzz instances

def random_instance(rng: random.Random, n_range=(3, 15), rads=(Fraction(1, 2),), window: int = 41,
                    pattern_side: Optional[int] = None):
    """A random solvable configuration plus a random pattern of the same size.

    Robots are drawn uniformly without replacement from a ``window`` x ``window``
    box, rejecting mirror-symmetric sets; each robot gets a random chirality.
    Pattern points come from a box of side ``pattern_side`` (default max(4, n)).
    """
    n = rng.randint(*n_range)
    rad = rng.choice(list(rads))
    while True:
        cells = rng.sample(range(window * window), n)
        pts = [(c % window, c // window) for c in cells]
        chir = [rng.choice((1, -1)) for _ in pts]
        cfg = WorldConfig.from_positions(pts, rad, chirality=chir)
        try:
            check_solvable(cfg)
            break
        except Unsolvable:
            continue
    side = pattern_side or max(4, n)
    cells = rng.sample(range(side * side), n)
    pattern = TargetPattern([(c % side, c // side) for c in cells])
    return cfg, pattern


def make_policy(name: str, seed: int, window: int = 8, p: float = 0.5):
    if name == "fsync":
        return Fsync()
    if name == "ssync":
        return Ssync(p, seed)
    if name == "async-random":
        return AsyncRandom(seed, window)
    if name == "async-adversarial":
        return AsyncAdversarial(seed, max(window, 32))
    raise ValueError(f"unknown scheduler {name!r}")


# ---------------------------------------------------------------- traces

def write_trace(path, trace, outcome: Outcome) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(trace.header, sort_keys=True) + "\n")
        for ev in trace.events:
            fh.write(json.dumps(ev, sort_keys=True) + "\n")
        fh.write(json.dumps({"outcome": outcome.to_json()}, sort_keys=True) + "\n")


def read_trace(path):
    header, events, outcome = None, [], None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(path, f"line {lineno}", exc.msg) from exc
            if doc.get("header"):
                header = doc
            elif "outcome" in doc:
                outcome = doc["outcome"]
            else:
                events.append(doc)
    if header is None:
        raise ParseError(path, "line 1", "missing trace header")
    return header, events, outcome


def header_inputs(header):
    cfg = WorldConfig(tuple(Robot(r["id"], tuple(r["pos"]), Color.OFF, r["chirality"]) for r in header["robots"]),
                      parse_rad(header["rad"]), BlockingMode(header["blocking"]))
    return cfg, TargetPattern(header["pattern"])


def replay(path) -> tuple[bool, Outcome]:
    """Re-run the execution recorded in a trace; True iff events and verdict match exactly."""
    header, events, outcome = read_trace(path)
    cfg, pattern = header_inputs(header)
    opts = ProtocolOptions(leftmost_liftoff=header.get("leftmost_liftoff", True))
    out, trace = run(cfg, pattern, policy_from_params(header["policy"]), header["max_events"], opts)
    same = (json.dumps(trace.events, sort_keys=True) == json.dumps(events, sort_keys=True)
            and out.to_json() == outcome)
    return same, out


def frames(header, events):
    """Yield (event index, positions, colors) after every event, starting with the initial state."""
    pos = {r["id"]: tuple(r["pos"]) for r in header["robots"]}
    col = {r["id"]: Color.OFF for r in header["robots"]}
    yield -1, dict(pos), dict(col)
    for i, ev in enumerate(events):
        if ev["k"] == "move":
            pos[ev["r"]] = tuple(ev["pos"])
        elif ev["k"] == "color":
            col[ev["r"]] = Color(ev["col"])
        yield i, dict(pos), dict(col)


# ---------------------------------------------------------------- figures

PALETTE = {
    Color.OFF: "#d9d9d9", Color.TERMINAL1: "#fdbf6f", Color.CANDIDATE: "#ff7f00",
    Color.CALL: "#cab2d6", Color.MOVING1: "#a6cee3", Color.REACHED: "#6a3d9a",
    Color.LEADER1: "#fb9a99", Color.LEADER: "#e31a1c", Color.DONE: "#33a02c",
}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    plt.rcParams["svg.hashsalt"] = "apf"
    return plt


def _k_line(pos, col):
    cols: dict = {}
    for rid, c in col.items():
        if c in (Color.CANDIDATE, Color.CALL, Color.REACHED):
            cols.setdefault(pos[rid][0], []).append(pos[rid][1])
    pairs = [ys for ys in cols.values() if len(ys) == 2]
    return sum(pairs[0]) / 2 if len(pairs) == 1 else None


def render_frame(path, pos, col, rad, title="", bounds=None) -> None:
    plt = _pyplot()
    from matplotlib.patches import Circle
    xs = [p[0] for p in pos.values()]
    ys = [p[1] for p in pos.values()]
    x0, x1, y0, y1 = bounds or (min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1)
    fig, ax = plt.subplots(figsize=(6, 6 * max(1, y1 - y0) / max(1, x1 - x0)))
    for gx in range(x0, x1 + 1):
        ax.axvline(gx, color="#eeeeee", lw=0.5, zorder=0)
    for gy in range(y0, y1 + 1):
        ax.axhline(gy, color="#eeeeee", lw=0.5, zorder=0)
    for rid, p in pos.items():
        ax.add_patch(Circle(p, float(rad), facecolor=PALETTE[col[rid]], edgecolor="black", lw=0.6, zorder=2))
    leaders = [pos[r] for r, c in col.items() if c is Color.LEADER]
    if leaders:
        ax.axhline(leaders[0][1], color=PALETTE[Color.LEADER], ls="--", lw=0.8, zorder=1)
    k = _k_line(pos, col)
    if k is not None:
        ax.axhline(k, color=PALETTE[Color.REACHED], ls="--", lw=0.8, zorder=1)
    ax.set_xlim(x0 - 0.5, x1 + 0.5)
    ax.set_ylim(y0 - 0.5, y1 + 0.5)
    ax.set_aspect("equal")
    ax.set_title(title, fontsize=8)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_trace(trace_path, out_dir, every_k: int = 1) -> list:
    if every_k < 1:
        raise ValueError("every_k must be >= 1")
    header, events, _ = read_trace(trace_path)
    states = list(frames(header, events))
    xs = [p[0] for _, pos, _ in states for p in pos.values()]
    ys = [p[1] for _, pos, _ in states for p in pos.values()]
    bounds = (min(xs) - 1, max(xs) + 1, min(ys) - 1, max(ys) + 1)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rad = parse_rad(header["rad"])
    written = []
    last = len(states) - 1
    for j, (i, pos, col) in enumerate(states):
        if j % every_k and j != last:
            continue
        path = out_dir / f"frame_{j:06d}.svg"
        label = "initial" if i < 0 else f"event {i}: {events[i]['k']} r{events[i]['r']}"
        render_frame(path, pos, col, rad, label, bounds)
        written.append(path)
    return written


def fuzz_figures(rows, out_dir) -> list:
    plt = _pyplot()
    out_dir = Path(out_dir)
    paths = []
    fig, ax = plt.subplots(figsize=(6, 4))
    for rad in sorted({r["rad"] for r in rows}):
        sel = [r for r in rows if r["rad"] == rad]
        ax.scatter([r["n"] for r in sel], [r["events"] for r in sel], s=10, label=f"rad={rad}")
    ax.set_xlabel("robots")
    ax.set_ylabel("events to verdict")
    ax.legend()
    p = out_dir / "events_vs_n.svg"
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)
    fig, ax = plt.subplots(figsize=(5, 3))
    counts = Counter(r["verdict"] for r in rows)
    names = sorted(counts)
    ax.bar(names, [counts[k] for k in names], color="#33a02c")
    ax.set_ylabel("trials")
    p = out_dir / "verdicts.svg"
    fig.savefig(p, format="svg", metadata={"Date": None})
    plt.close(fig)
    paths.append(p)
    return paths


# ---------------------------------------------------------------- fuzz

def _parse_range(text: str):
    lo, _, hi = text.partition(":")
    lo, hi = int(lo), int(hi or lo)
    if lo < 3 or hi < lo:
        raise ValueError("robot range must be lo:hi with 3 <= lo <= hi")
    return lo, hi


def fuzz(trials: int, n_range=(3, 15), rads=(Fraction(1, 2),), seed: int = 0, scheduler: str = "async-random",
         window: int = 41, max_events: int = 1_000_000, pending_window: int = 8, blocking=BlockingMode.CLOSED):
    """Seeded batch of random instances. Returns (report dict, per-trial rows)."""
    master = random.Random(seed)
    rows = []
    for t in range(trials):
        tseed = master.randrange(2**31)
        rng = random.Random(tseed)
        cfg, pattern = random_instance(rng, n_range, rads, window)
        if blocking is not BlockingMode.CLOSED:
            cfg = WorldConfig(cfg.robots, cfg.rad, blocking)
        out, _ = run(cfg, pattern, make_policy(scheduler, tseed, pending_window), max_events, record=False)
        rows.append({"trial": t, "seed": tseed, "n": cfg.n, "rad": str(cfg.rad), "scheduler": scheduler,
                     "verdict": out.kind, "events": out.events, "monitor": out.monitor or "",
                     "sigma": out.sigma if out.sigma is not None else ""})
        log.info("trial %d seed=%d n=%d -> %s (%d events)", t, tseed, cfg.n, out.kind, out.events)
    verdicts = Counter(r["verdict"] for r in rows)
    ev = sorted(r["events"] for r in rows)
    edges = [0, 100, 300, 1000, 3000, 10000, 30000, 100000, 10**9]
    hist = {f"{edges[i]}-{edges[i + 1]}": sum(edges[i] <= e < edges[i + 1] for e in ev) for i in range(len(edges) - 1)}
    report = {
        "trials": trials, "seed": seed, "scheduler": scheduler, "robots": list(n_range),
        "rad": [str(r) for r in rads], "window": window,
        "formed": verdicts.get("Formed", 0),
        "violations": verdicts.get("MonitorViolation", 0),
        "collisions": verdicts.get("Collision", 0),
        "stuck": verdicts.get("Stuck", 0),
        "budget_exceeded": verdicts.get("BudgetExceeded", 0),
        "monitors": dict(Counter(r["monitor"] for r in rows if r["monitor"])),
        "events_histogram": hist,
        "events_by_n": {str(n): sorted(r["events"] for r in rows if r["n"] == n)
                        for n in sorted({r["n"] for r in rows})},
        "failures": [r for r in rows if r["verdict"] != "Formed"],
    }
    return report, rows


# ---------------------------------------------------------------- commands

def _emit(doc, path=None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n")
    else:
        print(text)


def cmd_run(a) -> int:
    cfg, pattern = load_inputs(a.config, a.pattern, a.blocking)
    check_solvable(cfg)
    policy = make_policy(a.scheduler, a.seed, a.pending_window, a.p)
    opts = ProtocolOptions(leftmost_liftoff=not a.no_leftmost_liftoff)
    out, trace = run(cfg, pattern, policy, a.max_events, opts)
    if a.trace:
        write_trace(a.trace, trace, out)
    _emit(out.to_json(), a.out)
    return EXIT_OK if out.kind == "Formed" else EXIT_FAIL


def cmd_validate(a) -> int:
    cfg, pattern = load_inputs(a.config, a.pattern, a.blocking)
    doc = {"valid": True, "n": cfg.n}
    try:
        check_solvable(cfg)
        doc["solvable"] = True
    except Unsolvable as exc:
        doc.update(solvable=False, error="Unsolvable", axis=str(exc.axis))
    _emit(doc)
    return EXIT_OK if doc["solvable"] else EXIT_FAIL


def cmd_fuzz(a) -> int:
    rads = tuple(parse_rad(r) for r in a.rad.split(","))
    report, rows = fuzz(a.trials, _parse_range(a.robots), rads, a.seed, a.scheduler, a.window,
                        a.max_events, a.pending_window, BlockingMode(a.blocking or "closed"))
    if a.out_dir:
        out = Path(a.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _emit(report, out / "report.json")
        with open(out / "trials.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["trial"])
            w.writeheader()
            w.writerows(rows)
        fuzz_figures(rows, out)
    summary = {k: report[k] for k in ("trials", "formed", "violations", "collisions", "stuck", "budget_exceeded")}
    _emit(summary if a.out_dir else report)
    return EXIT_OK if report["formed"] == report["trials"] else EXIT_FAIL


def cmd_explore(a) -> int:
    cfg, pattern = load_inputs(a.config, a.pattern, a.blocking)
    opts = ProtocolOptions(leftmost_liftoff=not a.no_leftmost_liftoff)
    try:
        res = explore(cfg, pattern, a.depth_bound, a.pending_window, opts, a.max_states)
    except StateSpaceBudgetExceeded as exc:
        _emit({"verdict": "StateSpaceBudgetExceeded", "detail": str(exc)})
        return EXIT_FAIL
    doc = {"all_formed": res.all_formed, "states": res.states}
    if res.counterexample:
        doc["counterexample"] = res.counterexample.to_json()
        doc["steps"] = res.trace
    _emit(doc, a.out)
    return EXIT_OK if res.all_formed else EXIT_FAIL


def cmd_render(a) -> int:
    if a.verify:
        same, out = replay(a.trace)
        if not same:
            print(json.dumps({"replay": "mismatch", "verdict": out.to_json()}))
            return EXIT_FAIL
    written = render_trace(a.trace, a.out_dir, a.every_k)
    print(json.dumps({"frames": len(written), "out_dir": str(a.out_dir)}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="apf", description="Pattern formation by opaque fat robots on a grid.")
    sub = p.add_subparsers(dest="cmd", required=True)

    def common(sp, pattern_required=True):
        sp.add_argument("--config", required=True)
        sp.add_argument("--pattern", required=pattern_required)
        sp.add_argument("--blocking", choices=["closed", "open"])

    r = sub.add_parser("run", help="simulate one instance")
    common(r)
    r.add_argument("--scheduler", default="async-random",
                   choices=["fsync", "ssync", "async-random", "async-adversarial"])
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--p", type=float, default=0.5, help="activation probability for ssync")
    r.add_argument("--pending-window", type=int, default=8)
    r.add_argument("--max-events", type=int, default=1_000_000)
    r.add_argument("--trace", help="write the JSONL trace here")
    r.add_argument("--out", help="write the verdict JSON here")
    r.add_argument("--no-leftmost-liftoff", action="store_true", help=argparse.SUPPRESS)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("validate", help="check a configuration and its solvability")
    common(v, pattern_required=False)
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("fuzz", help="seeded random trials with an aggregate report")
    f.add_argument("--trials", type=int, default=100)
    f.add_argument("--robots", default="3:15")
    f.add_argument("--rad", default="1/2", help="comma separated radii, e.g. 1/4,1/2")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--scheduler", default="async-random",
                   choices=["fsync", "ssync", "async-random", "async-adversarial"])
    f.add_argument("--window", type=int, default=41)
    f.add_argument("--pending-window", type=int, default=8)
    f.add_argument("--max-events", type=int, default=1_000_000)
    f.add_argument("--blocking", choices=["closed", "open"])
    f.add_argument("--out-dir", help="write report.json, trials.csv and SVG figures here")
    f.set_defaults(func=cmd_fuzz)

    e = sub.add_parser("explore", help="exhaustive interleaving search on a small instance")
    common(e)
    e.add_argument("--pending-window", type=int, default=1)
    e.add_argument("--depth-bound", type=int, default=100_000)
    e.add_argument("--max-states", type=int, default=2_000_000)
    e.add_argument("--no-leftmost-liftoff", action="store_true",
                   help="drop the leftmost lift-off restriction (mutation check)")
    e.add_argument("--out")
    e.set_defaults(func=cmd_explore)

    d = sub.add_parser("render", help="SVG frames from a JSONL trace")
    d.add_argument("--trace", required=True)
    d.add_argument("--out-dir", required=True)
    d.add_argument("--every-k", type=int, default=1)
    d.add_argument("--verify", action="store_true", help="replay the trace and require an exact match first")
    d.set_defaults(func=cmd_render)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("APF_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    a = parser.parse_args(argv)
    if getattr(a, "every_k", 1) < 1:
        parser.error("--every-k must be >= 1")
    if getattr(a, "trials", 1) < 1:
        parser.error("--trials must be >= 1")
    try:
        return a.func(a)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, Unsolvable) as exc:
        print(json.dumps({"error": type(exc).__name__, "code": getattr(exc, "code", None), "detail": str(exc)}))
        return EXIT_FAIL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
