import random

import pytest

from apf.model import Color, Decision, Move, WorldConfig
from apf.protocol import (EmbeddedTargets, EqualSequences, Frame, FrameConflict, IllegalViewState, KLine,
                          LocalView, LocalizationFailed, MoreThanOnePair, NoCandidatePair, NoLeaderVisible,
                          ProtocolError, Side, build_local_view, compute_K, decide, dominant_side,
                          goto_line_step, goto_target_step, infer_global_frame, lambda_and_symmetry,
                          leader_move_step, phase1_transition, phase2_transition, view_queries)
from apf.sim import LEGAL_EDGES

from .oracles import dominant_bruteforce, lambda_bruteforce

C = Color


def V(self_color, *others):
    return LocalView(self_color, tuple(others))


def global_view(me, color, robots, chirality=1):
    """View of a robot at global ``me`` (leader frame) seeing ``robots`` = [((x, y), color)]."""
    return LocalView(color, tuple((x - me[0], chirality * (y - me[1]), c) for (x, y), c in robots))


LEADER = ((0, -1), C.LEADER)
TARGETS = EmbeddedTargets([(1, 3), (2, 2), (3, 1), (1, 1)])


# ---------------------------------------------------------------- local views

def test_build_local_view_plain_and_flipped():
    cfg = WorldConfig.from_positions([(0, 0), (1, 2)])
    assert build_local_view(cfg, 0).others == ((1, 2, C.OFF),)
    cfg = WorldConfig.from_positions([(0, 0), (1, 2)], chirality=[-1, 1])
    assert build_local_view(cfg, 0).others == ((1, -2, C.OFF),)


def test_build_local_view_respects_blocking():
    cfg = WorldConfig.from_positions([(0, 0), (1, 0), (2, 0)])
    assert build_local_view(cfg, 0).others == ((1, 0, C.OFF),)


def test_view_rejects_own_cell():
    with pytest.raises(ValueError):
        V(C.OFF, (0, 0, C.OFF))


def test_queries_empty_view():
    q = view_queries(V(C.OFF))
    assert q.is_terminal and q.left_open_half_empty and q.R_I_dx is None


def test_queries_left_line_and_column():
    q = view_queries(V(C.OFF, (0, 3, C.OFF), (-2, 1, C.OFF)))
    # a robot only above: bottommost on the column, hence terminal (see ledger)
    assert q.is_terminal
    assert not q.left_open_half_empty
    assert q.L_I_dx == -2
    q = view_queries(V(C.OFF, (0, 3, C.OFF), (0, -1, C.OFF)))
    assert not q.is_terminal


def test_queries_right_line():
    q = view_queries(V(C.OFF, (1, 5, C.OFF), (1, -5, C.OFF), (3, 0, C.OFF)))
    assert q.R_I_dx == 1 and len(q.R_I) == 2
    assert q.next_right_vline_nonempty


# ---------------------------------------------------------------- K and lambda

def test_compute_K_examples():
    assert compute_K(V(C.CANDIDATE, (0, 4, C.CANDIDATE))) == KLine(4)
    assert KLine(4).on_grid_row
    k = compute_K(V(C.CANDIDATE, (0, 3, C.CALL)))
    assert k == KLine(3) and not k.on_grid_row
    with pytest.raises(NoCandidatePair):
        compute_K(V(C.OFF, (1, 1, C.OFF)))
    with pytest.raises(MoreThanOnePair):
        compute_K(V(C.OFF, (1, 1, C.CALL), (1, 3, C.CALL), (2, 0, C.REACHED), (2, 5, C.REACHED)))


def test_compute_K_flips_with_chirality():
    v = V(C.OFF, (-1, 2, C.CALL), (-1, -4, C.CALL))
    assert compute_K(v).two_y == -compute_K(v.mirrored()).two_y


def test_lambda_between_rows():
    # offsets +-1.5 from K at y=0.5: rows 2 and -1
    up, down, sym = lambda_and_symmetry(V(C.OFF, (1, 2, C.OFF), (1, -1, C.OFF)), 1, KLine(1))
    assert sym and up == down == (0, 1)


def test_lambda_on_row():
    v = V(C.OFF, (1, 1, C.OFF), (1, 2, C.OFF), (1, -1, C.OFF), (1, -3, C.OFF))
    up, down, sym = lambda_and_symmetry(v, 1, KLine(0))
    assert (up, down, sym) == ((1, 1, 0), (1, 0, 1), False)


def test_lambda_ignores_point_on_K():
    up, down, sym = lambda_and_symmetry(V(C.OFF, (1, 0, C.OFF)), 1, KLine(0))
    assert up == down == () and sym


def test_dominant_side_examples():
    assert dominant_side((1, 1, 0), (1, 0, 1)) is Side.UP
    assert dominant_side((0, 1), (1, 0)) is Side.DOWN
    with pytest.raises(EqualSequences):
        dominant_side((1,), (1,))


def test_dominant_side_suffix_invariance():
    rng = random.Random(1)
    for _ in range(500):
        m = rng.randint(1, 6)
        u = tuple(rng.randint(0, 1) for _ in range(m))
        d = tuple(rng.randint(0, 1) for _ in range(m))
        if u == d:
            continue
        suf = tuple(rng.randint(0, 1) for _ in range(rng.randint(0, 4)))
        assert dominant_side(u + suf, d + suf) is dominant_side(u, d)


def test_lambda_matches_bruteforce_small():
    rng = random.Random(2)
    for _ in range(300):
        two_y = rng.randint(-6, 6)
        ys = rng.sample(range(-6, 7), rng.randint(1, 6))
        v = V(C.OFF, *[(2, y, C.OFF) for y in ys])
        up, down, sym = lambda_and_symmetry(v, 2, KLine(two_y))
        assert (up, down) == lambda_bruteforce(ys, two_y)
        dom = dominant_bruteforce(ys, two_y)
        assert sym == (dom is None)
        if dom is not None:
            assert dominant_side(up, down).value == dom


# ---------------------------------------------------------------- frame

def test_frame_examples():
    f = infer_global_frame(V(C.OFF, (-3, -2, C.LEADER)))
    assert f == Frame((-3, -2), 1)
    f = infer_global_frame(V(C.OFF, (-1, 0, C.LEADER), (2, 0, C.OFF)))
    assert f.y_sign is None
    with pytest.raises(NoLeaderVisible):
        infer_global_frame(V(C.OFF, (1, 1, C.OFF)))
    with pytest.raises(FrameConflict):
        infer_global_frame(V(C.OFF, (-1, -2, C.LEADER), (3, -5, C.OFF)))


def test_frame_side_follows_chirality():
    assert infer_global_frame(V(C.OFF, (-3, 2, C.LEADER))).y_sign == -1


# ---------------------------------------------------------------- phase 1

def test_off_alone_becomes_terminal1():
    assert phase1_transition(V(C.OFF)) == Decision(C.TERMINAL1, Move.NONE)


def test_terminal1_moves_left_as_candidate():
    assert phase1_transition(V(C.TERMINAL1, (0, -3, C.OFF), (2, 1, C.OFF))) == Decision(C.CANDIDATE, Move.LEFT)


def test_off_on_K_between_two_calls_becomes_leader1():
    v = V(C.OFF, (-1, 2, C.CALL), (-1, -2, C.CALL))
    assert phase1_transition(v) == Decision(C.LEADER1, Move.NONE)


def test_off_closest_to_K_becomes_moving1():
    v = V(C.OFF, (-1, 3, C.CALL), (-1, -1, C.CALL), (0, -2, C.OFF))
    assert phase1_transition(v) == Decision(C.MOVING1)


def test_candidate_with_symmetric_right_line_calls():
    v = V(C.CANDIDATE, (0, 4, C.CANDIDATE), (1, 3, C.OFF), (1, 1, C.OFF))
    assert phase1_transition(v) == Decision(C.CALL, Move.NONE)


def test_candidate_dominant_half_becomes_leader1():
    # right line occupied only above K (K at y=2): the upper candidate wins
    lower = V(C.CANDIDATE, (0, 4, C.CANDIDATE), (1, 3, C.OFF))
    upper = V(C.CANDIDATE, (0, -4, C.CANDIDATE), (1, -1, C.OFF))
    assert phase1_transition(upper) == Decision(C.LEADER1)
    assert phase1_transition(lower) == Decision(C.CANDIDATE)


def test_candidate_singleton_becomes_leader1():
    assert phase1_transition(V(C.CANDIDATE, (1, 0, C.OFF), (2, 2, C.OFF))) == Decision(C.LEADER1)
    assert phase1_transition(V(C.CANDIDATE, (1, 0, C.TERMINAL1))) == Decision(C.CANDIDATE)


def test_terminal1_yields_to_candidate_on_left():
    assert phase1_transition(V(C.TERMINAL1, (-1, 0, C.CANDIDATE))) == Decision(C.OFF)


def test_call_and_reached_rules():
    assert phase1_transition(V(C.CALL, (0, 3, C.MOVING1), (0, -2, C.CALL), (2, 0, C.OFF))) == Decision(C.REACHED)
    assert phase1_transition(V(C.CALL, (1, 0, C.LEADER1))) == Decision(C.OFF)
    assert phase1_transition(V(C.REACHED, (0, 4, C.REACHED), (1, 1, C.OFF))) == Decision(C.CANDIDATE)


def test_moving1_leaves_column_span_then_goes_left():
    # inside the span of the two calls on the left line: step away from the column mate
    v = V(C.MOVING1, (-1, 1, C.CALL), (-1, -3, C.CALL), (0, -1, C.MOVING1))
    assert phase1_transition(v) == Decision(C.MOVING1, Move.UP)
    v = V(C.MOVING1, (-1, -1, C.CALL), (-1, -5, C.CALL), (0, -2, C.MOVING1))
    assert phase1_transition(v) == Decision(C.MOVING1, Move.LEFT)


def test_moving1_resets_when_reached_visible():
    assert phase1_transition(V(C.MOVING1, (-1, 2, C.REACHED), (0, 1, C.MOVING1))) == Decision(C.OFF)


def test_leader1_moves_left_then_vertically_then_leads():
    assert phase1_transition(V(C.LEADER1, (0, 2, C.OFF))) == Decision(C.LEADER1, Move.LEFT)
    assert phase1_transition(V(C.LEADER1, (2, 2, C.OFF), (3, -1, C.OFF))) == Decision(C.LEADER1, Move.UP)
    assert phase1_transition(V(C.LEADER1, (2, 2, C.OFF), (3, 1, C.OFF))) == Decision(C.LEADER)


def test_leader1_waits_for_calls_on_left():
    assert phase1_transition(V(C.LEADER1, (-1, 2, C.CALL), (-1, -2, C.CALL))) == Decision(C.LEADER1)


def test_two_leader1_is_illegal():
    with pytest.raises(IllegalViewState):
        phase1_transition(V(C.LEADER1, (3, 0, C.LEADER1)))


# ---------------------------------------------------------------- phase 2

def test_off_robot_joins_line_prefix():
    robots = [LEADER, ((1, -1), C.OFF), ((2, -1), C.OFF)]
    d = phase2_transition(global_view((5, 3), C.OFF, robots), TARGETS)
    assert d == Decision(C.OFF, Move.DOWN)
    # same scene for a robot of opposite chirality: the global action is unchanged
    d = phase2_transition(global_view((5, 3), C.OFF, robots, -1), TARGETS)
    assert d == Decision(C.OFF, Move.UP)


def test_liftoff_from_line():
    robots = [LEADER, ((2, -1), C.OFF), ((3, -1), C.OFF)]
    assert phase2_transition(global_view((1, -1), C.OFF, robots), TARGETS) == Decision(C.OFF, Move.UP)
    # not the leftmost on the row
    robots = [LEADER, ((1, -1), C.OFF), ((3, -1), C.OFF)]
    assert phase2_transition(global_view((2, -1), C.OFF, robots), TARGETS) == Decision(C.OFF)
    # an off robot still above the line
    robots = [LEADER, ((2, -1), C.OFF), ((4, 2), C.OFF)]
    assert phase2_transition(global_view((1, -1), C.OFF, robots), TARGETS) == Decision(C.OFF)


def test_suffix_sends_robot_to_target():
    n = TARGETS.n  # 4: line robots at (2,-1), (3,-1) form the suffix, i = 2 -> t_0
    robots = [LEADER, ((2, -1), C.OFF), ((3, -1), C.OFF)]
    d = phase2_transition(global_view((1, 0), C.OFF, robots), TARGETS)
    assert n - 2 - 2 == 0 and TARGETS[0] == (1, 3)
    assert d == Decision(C.OFF, Move.UP)


def test_last_robot_claims_t_n_minus_2():
    robots = [LEADER, ((1, 3), C.DONE), ((2, 2), C.DONE)]
    # t_{n-2} = (3,1): drop to the row below it, then walk right
    assert phase2_transition(global_view((1, 1), C.OFF, robots), TARGETS) == Decision(C.OFF, Move.DOWN)
    assert phase2_transition(global_view((3, 1), C.OFF, robots), TARGETS) == Decision(C.DONE)


def test_phase2_reset_colors():
    robots = [LEADER]
    d = phase2_transition(global_view((3, 2), C.MOVING1, robots), TARGETS)
    assert d == Decision(C.OFF, Move.DOWN)


def test_leader_finishes_at_last_target():
    robots = [((1 - 1, 3 - 1), C.DONE), ((2 - 1, 2 - 1), C.DONE), ((3 - 1, 1 - 1), C.DONE)]
    # leader sits on t_3 = (1,1); done robots shown relative to it
    v = LocalView(C.LEADER, tuple((x, y, c) for (x, y), c in robots))
    assert phase2_transition(v, TARGETS) == Decision(C.DONE)


def test_leader_waits_until_all_visible_done():
    v = LocalView(C.LEADER, ((1, 1, C.DONE), (2, 3, C.OFF)))
    assert phase2_transition(v, TARGETS) == Decision(C.LEADER)


# ---------------------------------------------------------------- step procedures

def _frame_for(me):
    return Frame((-me[0], -1 - me[1]), 1)


def test_goto_line_steps():
    assert goto_line_step(V(C.OFF, (-5, -4, C.LEADER)), _frame_for((5, 3)), 1).move is Move.DOWN
    assert goto_line_step(V(C.OFF, (-5, -1, C.LEADER)), _frame_for((5, 0)), 3).move is Move.LEFT
    assert goto_line_step(V(C.OFF, (-3, -1, C.LEADER)), _frame_for((3, 0)), 3).move is Move.DOWN


def test_goto_line_blocked_waits():
    v = V(C.OFF, (-5, -1, C.LEADER), (-1, 0, C.OFF))
    assert goto_line_step(v, _frame_for((5, 0)), 3) == Decision(C.OFF, Move.NONE)


def test_goto_target_steps():
    assert goto_target_step(V(C.OFF, (-1, -1, C.LEADER)), _frame_for((1, 0)), (6, 3)).move is Move.UP
    assert goto_target_step(V(C.OFF, (-1, -3, C.LEADER)), _frame_for((1, 2)), (6, 3)).move is Move.RIGHT
    assert goto_target_step(V(C.OFF, (-6, -3, C.LEADER)), _frame_for((6, 2)), (6, 3)).move is Move.UP
    assert goto_target_step(V(C.OFF, (-6, -4, C.LEADER)), _frame_for((6, 3)), (6, 3)) == Decision(C.DONE)


def test_leader_move_steps():
    targets = EmbeddedTargets([(5, 3), (2, 2), (4, 1)])  # t_{n-2} = (2,2), t_{n-1} = (4,1)
    done = lambda me: LocalView(C.LEADER, ((5 - me[0], 3 - me[1], C.DONE), (2 - me[0], 2 - me[1], C.DONE)))
    assert leader_move_step(done((0, -1)), targets) == Decision(C.LEADER, Move.UP)
    assert leader_move_step(done((0, 0)), targets) == Decision(C.LEADER, Move.RIGHT)
    assert leader_move_step(done((4, 0)), targets) == Decision(C.LEADER, Move.UP)
    assert leader_move_step(done((4, 1)), targets) == Decision(C.DONE)


def test_leader_move_needs_done_robot():
    with pytest.raises(LocalizationFailed):
        leader_move_step(LocalView(C.LEADER, ()), TARGETS)


# ---------------------------------------------------------------- properties

def _random_view(rng):
    colors = list(Color)
    cells = rng.sample([(x, y) for x in range(-3, 4) for y in range(-3, 4) if (x, y) != (0, 0)], rng.randint(0, 7))
    others = []
    for x, y in cells:
        c = rng.choice(colors[:7] + [C.OFF] * 4 + [C.DONE])
        others.append((x, y, c))
    if rng.random() < 0.3:
        x, y = rng.choice([(x, y) for x in range(-4, 0) for y in range(-3, 4)
                           if (x, y) not in {(a, b) for a, b, _ in others}])
        others = [o for o in others if o[2] is not C.LEADER] + [(x, y, C.LEADER)]
    me = rng.choice(colors)
    return LocalView(me, tuple(others))


def _safe_decide(view):
    try:
        return decide(view, TARGETS)
    except ProtocolError as exc:
        return type(exc)


SWAP = {Move.UP: Move.DOWN, Move.DOWN: Move.UP}


def test_purity_and_chirality_equivariance():
    rng = random.Random(7)
    own_axis = 0
    for _ in range(4000):
        v = _random_view(rng)
        a, b = _safe_decide(v), _safe_decide(v.mirrored())
        assert _safe_decide(v) == a
        if isinstance(a, type):
            assert a is b
            continue
        assert a.new_color is b.new_color
        if a.move in SWAP:
            # the robot follows its own positive y only when nothing in view fixes a direction
            if a.move is b.move:
                assert a.move is Move.UP
                own_axis += 1
            else:
                assert b.move is SWAP[a.move]
        else:
            assert a.move is b.move
    assert own_axis < 4000


def test_color_transitions_stay_in_legal_graph():
    rng = random.Random(8)
    for _ in range(4000):
        v = _random_view(rng)
        d = _safe_decide(v)
        if isinstance(d, type):
            continue
        assert d.new_color is v.self_color or d.new_color in LEGAL_EDGES[v.self_color]


def test_leader1_left_only_with_company_on_left_or_next_line():
    rng = random.Random(9)
    seen = 0
    for _ in range(4000):
        v = _random_view(rng)
        v = LocalView(C.LEADER1, tuple(o for o in v.others if o[2] is not C.LEADER))
        d = _safe_decide(v)
        if not isinstance(d, type) and d.move is Move.LEFT:
            seen += 1
            assert any(dx <= 0 or dx == 1 for dx, _, _ in v.others)
    assert seen > 0


def test_stale_phase1_color_drops_to_off_once_a_target_is_done():
    # moving1 left over on the line while t_0 is already done: it must not block the line forever
    robots = [LEADER, ((3, -1), C.OFF), ((1, 3), C.DONE)]
    assert phase2_transition(global_view((2, -1), C.MOVING1, robots), TARGETS) == Decision(C.OFF)
