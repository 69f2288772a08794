"""Instance generators shared by the test modules."""

import random
from fractions import Fraction

from apf.embedding import Unsolvable, check_solvable
from apf.model import WorldConfig

RADII = (Fraction(1, 4), Fraction(1, 2))


def symmetric_right_line(rng: random.Random):
    """Two robots on x=0 whose next line x=1 mirrors about their midline, plus asymmetric clutter.

    Forces the call / moving1 branch of leader election. Returns (cfg, pattern points).
    """
    while True:
        m = rng.randint(1, 4)
        pts = {(0, 0), (0, 2 * m)}
        for d in rng.sample(range(0, m + 3), rng.randint(1, 3)):
            pts |= {(1, m + d), (1, m - d)}
        for _ in range(rng.randint(1, 4)):
            pts.add((rng.randint(2, 5), rng.randint(-3, 2 * m + 3)))
        pts = sorted(pts)
        cfg = WorldConfig.from_positions(pts, rng.choice(RADII), chirality=[rng.choice((1, -1)) for _ in pts])
        try:
            check_solvable(cfg)
        except Unsolvable:
            continue
        side = max(4, cfg.n)
        pattern = [(c % side, c // side) for c in rng.sample(range(side * side), cfg.n)]
        return cfg, pattern
