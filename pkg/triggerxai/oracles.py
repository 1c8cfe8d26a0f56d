r"""
Exhaustive reference implementations for tests. Nothing here imports the
production modules, and nothing in production imports this module.
"""
from fractions import Fraction
from itertools import combinations
from typing import List, Sequence, Tuple


__all__ = ['brute_force_vote', 'brute_force_nms', 'brute_force_otsu']


LABELS = ('Healthy', 'YellowSpots', 'ReddishBronzing', 'SilkWebbing')
ABSTAIN = 'Abstain'


def brute_force_vote(votes: Sequence[str], weights: Sequence[float]) -> Tuple[str, float, bool]:
    if len(votes) != len(weights):
        raise ValueError('votes and weights differ in length')
    if any(w <= 0 for w in weights):
        raise ValueError('weights should be > 0')
    totals = []
    for label in LABELS:
        total = 0.0
        for vote, w in zip(votes, weights):
            if str(getattr(vote, 'value', vote)) == label:
                total += w
        totals.append(total)
    best = max(totals)
    if best == 0:
        return ABSTAIN, 0.0, False
    winners = [label for label, t in zip(LABELS, totals) if t == best]
    if len(winners) > 1:
        return ABSTAIN, best, True
    return winners[0], best, False


def _iou(a, b) -> float:
    ax0, ax1 = a.x - a.w / 2, a.x + a.w / 2
    ay0, ay1 = a.y - a.h / 2, a.y + a.h / 2
    bx0, bx1 = b.x - b.w / 2, b.x + b.w / 2
    by0, by1 = b.y - b.h / 2, b.y + b.h / 2
    ix = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    iy = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = ix * iy
    union = a.w * a.h + b.w * b.h - inter
    return inter / union if union > 0 else 0.0


def brute_force_nms(boxes: Sequence, iou_threshold: float = 0.5) -> List:
    r"""
    Searches every subset for the one consistent with greedy suppression:
    a box is kept exactly when no kept box ranked before it (score
    descending, then index) shares its class with IoU >= threshold.
    """
    n = len(boxes)
    order = sorted(range(n), key=lambda i: (-boxes[i].score, i))
    rank = {i: k for k, i in enumerate(order)}

    def consistent(kept):
        for i in range(n):
            blocked = any(
                rank[j] < rank[i] and boxes[j].cls == boxes[i].cls and _iou(boxes[j], boxes[i]) >= iou_threshold
                for j in kept
            )
            if (i in kept) == blocked:
                return False
        return True

    for size in range(n + 1):
        for subset in combinations(range(n), size):
            kept = set(subset)
            if consistent(kept):
                return [boxes[i] for i in order if i in kept]
    raise AssertionError('no consistent keep-set')


def brute_force_otsu(gray, levels: int = 256) -> int:
    r""" between-class variance in exact rationals for every candidate threshold """
    values = [round(min(max(float(v), 0.0), 1.0) * (levels - 1)) for row in gray for v in row]
    if len(set(values)) < 2:
        raise ValueError('degenerate histogram')
    N = len(values)
    best_t, best = None, None
    for t in range(levels - 1):
        c1 = [v for v in values if v <= t]
        c2 = [v for v in values if v > t]
        if not c1 or not c2:
            score = Fraction(0)
        else:
            w1, w2 = Fraction(len(c1), N), Fraction(len(c2), N)
            mu1, mu2 = Fraction(sum(c1), len(c1)), Fraction(sum(c2), len(c2))
            score = w1 * w2 * (mu1 - mu2) ** 2
        if best is None or score > best:
            best_t, best = t, score
    return best_t
