"""Independent reference implementations used by several test files."""
from __future__ import annotations

from fractions import Fraction

from stopgo.schema import MotionState


def ap_by_cutoffs(scores, labels) -> Fraction:
    """Exact AP from the precision/recall curve over every cutoff.

    Ties keep input order (Python's sort is stable), matching the ranking rule.
    """
    ranked = [lab for _, lab in sorted(zip(scores, labels), key=lambda p: -p[0])]
    n_pos = sum(ranked)
    total, hits, prev_recall = Fraction(0), 0, Fraction(0)
    for k, lab in enumerate(ranked, start=1):
        hits += lab
        recall = Fraction(hits, n_pos)
        total += (recall - prev_recall) * Fraction(hits, k)
        prev_recall = recall
    return total


def scan_oracle(states, fps):
    """Adjacent-pair scan with integer run lengths; valid iff 2 * run >= fps on both sides."""
    out = []
    for i in range(1, len(states)):
        if states[i] == states[i - 1]:
            continue
        pre = 1
        while i - pre - 1 >= 0 and states[i - pre - 1] == states[i - 1]:
            pre += 1
        post = 1
        while i + post < len(states) and states[i + post] == states[i]:
            post += 1
        kind = "go" if states[i] is MotionState.WALKING else "stop"
        out.append((kind, i, pre, post, 2 * pre >= fps and 2 * post >= fps))
    return out


def event_tuples(events, fps):
    return [(e.kind.value, e.frame_index, round(e.pre_state_duration * fps),
             round(e.post_state_duration * fps), e.valid) for e in events]
