"""Mapping decision: pair model box estimates with detected boxes.

Estimates are filtered by their inside-image output, scored against every
detected box with a blend of IoU and center distance, the score rows are
normalized into per-estimate confidences, and pairs are then accepted
greedily by maximum confidence (gated on a nonzero score) with each accepted
pair consuming its row and column. A brute-force optimal assignment is
included as a test oracle only.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

DIAGONAL_LEN = math.sqrt(2.0)  # image diagonal in normalized coordinates
SCORE_EPS = 1e-9               # floating-point reading of "score != 0"
EXHAUSTIVE_LIMIT = 8


@dataclass
class ModelEstimate:
    msg_id: int
    bbx: np.ndarray   # (4,) predicted box, normalized
    inside: float     # (0, 1) inside-image probability


@dataclass
class EstimateSet:
    entries: list[ModelEstimate]
    threshold_inside: float = 0.5

    def __post_init__(self):
        ids = [e.msg_id for e in self.entries]
        if len(ids) != len(set(ids)):
            raise ValueError("estimate message ids must be distinct")

    def inside_filtered(self) -> list[ModelEstimate]:
        return [e for e in self.entries if e.inside > self.threshold_inside]


@dataclass
class ScoreTable:
    scores: np.ndarray        # (rows, cols)
    row_ids: list[int]        # message ids
    col_ids: list[int]        # box indices
    omega: float


@dataclass
class ConfidenceTable:
    conf: np.ndarray
    row_ids: list[int]
    col_ids: list[int]


@dataclass(frozen=True)
class MappingConfig:
    omega: float = 0.5
    threshold_inside: float = 0.5
    score_eps: float = SCORE_EPS


@dataclass
class MappingResult:
    pairs: list[tuple[int, int]]            # (msg_id, box_index), injective both ways
    feedback: dict[int, np.ndarray] = field(default_factory=dict)  # msg id -> matched box or zeros

    def as_dict(self) -> dict[int, int]:
        return dict(self.pairs)


def _box_area(b) -> float:
    return max(0.0, b[2] - b[0]) * max(0.0, b[3] - b[1])


def iou(a, b) -> float:
    """Intersection over union of two corner-ordered boxes; 0 for degenerate union."""
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = _box_area(a) + _box_area(b) - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def center_dist(a, b) -> float:
    acx, acy = (a[0] + a[2]) / 2.0, (a[1] + a[3]) / 2.0
    bcx, bcy = (b[0] + b[2]) / 2.0, (b[1] + b[3]) / 2.0
    return math.hypot(acx - bcx, acy - bcy)


def score_bbx(e, v, omega: float) -> float:
    """Blend of overlap and proximity: (1-w)*IoU + w*(diag - centerdist)/diag."""
    if not 0.0 <= omega <= 1.0:
        raise ValueError("omega must be in [0, 1]")
    return (1.0 - omega) * iou(e, v) + omega * (DIAGONAL_LEN - center_dist(e, v)) / DIAGONAL_LEN


def build_score_table(e_inside: list[ModelEstimate], boxes, omega: float) -> ScoreTable:
    """Dense score table over the inside-filtered estimates and detected boxes."""
    rows = len(e_inside)
    cols = len(boxes)
    scores = np.zeros((rows, cols))
    for i, est in enumerate(e_inside):
        for j, v in enumerate(boxes):
            scores[i, j] = score_bbx(est.bbx, v, omega)
    return ScoreTable(
        scores=scores,
        row_ids=[e.msg_id for e in e_inside],
        col_ids=list(range(cols)),
        omega=omega,
    )


def build_confidence_table(st: ScoreTable) -> ConfidenceTable:
    """Row-normalize scores; a row summing to zero stays all-zero."""
    conf = np.zeros_like(st.scores)
    for i in range(st.scores.shape[0]):
        s = st.scores[i].sum()
        if s > 0.0:
            conf[i] = st.scores[i] / s
    return ConfidenceTable(conf=conf, row_ids=list(st.row_ids), col_ids=list(st.col_ids))


def _greedy_pairs(scores: np.ndarray, conf: np.ndarray, eps: float) -> list[tuple[int, int]]:
    """Greedy max-confidence selection gated on scores, row-major tie-breaking."""
    work = conf.copy()
    pairs: list[tuple[int, int]] = []
    if work.size == 0:
        return pairs
    while True:
        flat = int(np.argmax(work))  # first maximum in row-major order
        i, j = divmod(flat, work.shape[1])
        if work[i, j] <= 0.0:
            break  # table exhausted
        if scores[i, j] <= eps:
            break
        pairs.append((i, j))
        work[i, :] = 0.0
        work[:, j] = 0.0
    return pairs


def decide_mapping(estimates: EstimateSet, boxes, cfg: MappingConfig = MappingConfig()) -> MappingResult:
    """Run the full decision: inside filter, score and confidence tables, greedy pairing.

    `boxes` is a sequence of normalized corner boxes indexed by position. The
    result carries, for every estimate's message id, the matched box for the
    next tick's feedback input (zeros when unmatched).
    """
    feedback = {e.msg_id: np.zeros(4) for e in estimates.entries}
    e_inside = [e for e in estimates.entries if e.inside > cfg.threshold_inside]
    if not e_inside or len(boxes) == 0:
        return MappingResult(pairs=[], feedback=feedback)

    st = build_score_table(e_inside, boxes, cfg.omega)
    ct = build_confidence_table(st)
    raw = _greedy_pairs(st.scores, ct.conf, cfg.score_eps)
    pairs = [(st.row_ids[i], st.col_ids[j]) for i, j in raw]
    for msg_id, box_idx in pairs:
        feedback[msg_id] = np.asarray(boxes[box_idx], dtype=float).copy()
    return MappingResult(pairs=pairs, feedback=feedback)


def greedy_confidence_sum(st: ScoreTable, eps: float = SCORE_EPS) -> float:
    """Summed confidence of the greedy selection (for regret measurements)."""
    ct = build_confidence_table(st)
    return float(sum(ct.conf[i, j] for i, j in _greedy_pairs(st.scores, ct.conf, eps)))


def optimal_assignment(st: ScoreTable, eps: float = SCORE_EPS) -> tuple[list[tuple[int, int]], float]:
    """Exhaustive maximum-summed-confidence injective assignment. Test oracle only.

    Rows may be skipped; cells with score <= eps are not assignable. Raises
    for tables whose smaller side exceeds the exhaustive bound.
    """
    rows, cols = st.scores.shape
    if min(rows, cols) > EXHAUSTIVE_LIMIT:
        raise ValueError(
            f"table {rows}x{cols} exceeds exhaustive bound {EXHAUSTIVE_LIMIT}"
        )
    ct = build_confidence_table(st)
    best_pairs: list[tuple[int, int]] = []
    best_value = 0.0

    def recurse(i: int, used_cols: int, value: float, chosen: list[tuple[int, int]]):
        nonlocal best_pairs, best_value
        if i == rows:
            if value > best_value:
                best_value = value
                best_pairs = list(chosen)
            return
        recurse(i + 1, used_cols, value, chosen)  # skip this row
        for j in range(cols):
            if used_cols & (1 << j):
                continue
            if st.scores[i, j] <= eps:
                continue
            chosen.append((i, j))
            recurse(i + 1, used_cols | (1 << j), value + ct.conf[i, j], chosen)
            chosen.pop()

    recurse(0, 0, 0.0, [])
    pairs = [(st.row_ids[i], st.col_ids[j]) for i, j in best_pairs]
    return pairs, best_value


def dump_tables_csv(st: ScoreTable, ct: ConfidenceTable, score_path, conf_path) -> None:
    """Write score and confidence tables as CSV for audit."""
    for table, path in ((st.scores, score_path), (ct.conf, conf_path)):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow([""] + [f"v{j}" for j in st.col_ids])
            for i, rid in enumerate(st.row_ids):
                w.writerow([rid] + [f"{x:.9g}" for x in table[i]])
