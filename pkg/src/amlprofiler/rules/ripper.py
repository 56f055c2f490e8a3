"""Sequential-covering rule induction in the RIPPER style.

Classes are handled from rarest to most frequent; the most frequent class
becomes the default.  Per class, rules are grown condition by condition to
maximize FOIL gain on a stratified 2/3 growing split, pruned by dropping
final condition sequences to maximize (p - n) / (p + n) on the remaining
1/3, and accepted while the total description length stays within a fixed
slack of the best seen.  Two optimization passes then re-grow each rule as
a replacement and a revision, keeping whichever variant describes the data
most cheaply.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..profiling import NOMINAL, NUMERIC, AttributeSchema
from .model import (
    OP_EQ,
    OP_GT,
    OP_LE,
    Condition,
    InductionParams,
    Rule,
    RuleSet,
    merge_conditions,
)
from .tree import stratified_two_way

log = logging.getLogger(__name__)


def foil_gain(p0: int, n0: int, p: int, n: int) -> float:
    """Information gained (in bits) by a refinement that narrows coverage
    from (p0 positives, n0 negatives) to (p, n)."""
    if p == 0:
        return -math.inf
    return p * (math.log2(p / (p + n)) - math.log2(p0 / (p0 + n0)))


def _subset_dl(n: float, k: float, p: float) -> float:
    """Bits to transmit which k of n elements are flagged, at expected rate p."""
    dl = 0.0
    if k > 0:
        if p <= 0:
            return math.inf
        dl -= k * math.log2(p)
    if n - k > 0:
        if p >= 1:
            return math.inf
        dl -= (n - k) * math.log2(1.0 - p)
    return dl


def _theory_dl(n_conditions: int, m_possible: int) -> float:
    if n_conditions == 0:
        return 0.0
    k = float(n_conditions)
    tdl = math.log2(k)
    if k > 1:
        tdl += 2.0 * math.log2(tdl)
    tdl += _subset_dl(m_possible, k, k / m_possible)
    return 0.5 * tdl  # redundancy discount on the theory bits


def _data_dl(exp_fp_over_err: float, covered: float, uncovered: float, fp: float, fn: float) -> float:
    total_bits = math.log2(covered + uncovered + 1.0)
    if covered > uncovered:
        exp_err = exp_fp_over_err * (fp + fn)
        cover_bits = _subset_dl(covered, fp, exp_err / covered) if covered > 0 else 0.0
        uncover_bits = _subset_dl(uncovered, fn, fn / uncovered) if uncovered > 0 else 0.0
    else:
        exp_err = (1.0 - exp_fp_over_err) * (fp + fn)
        cover_bits = _subset_dl(covered, fp, fp / covered) if covered > 0 else 0.0
        uncover_bits = _subset_dl(uncovered, fn, exp_err / uncovered) if uncovered > 0 else 0.0
    return total_bits + cover_bits + uncover_bits


@dataclass
class _Stage:
    """Per-class induction context: the instances still in play when the
    class's turn comes, plus the condition universe used for MDL costs."""

    X: np.ndarray
    is_pos: np.ndarray
    schema: AttributeSchema
    m_possible: int
    exp_fp_over_err: float


def _count_possible_conditions(X: np.ndarray, schema: AttributeSchema) -> int:
    total = 0
    for j, attr in enumerate(schema.attributes):
        if attr.kind == NOMINAL:
            total += len(attr.levels)
        else:
            total += 2 * np.unique(X[:, j]).size
    return max(total, 1)


def _select(X: np.ndarray, idx: np.ndarray, conditions: Sequence[Condition]) -> np.ndarray:
    sel = idx
    for cond in conditions:
        sel = sel[cond.mask(X[sel])]
    return sel


def _gain_vector(p: np.ndarray, n: np.ndarray, p0: int, n0: int) -> np.ndarray:
    """FOIL gain for many candidate refinements at once; p = 0 gives -inf."""
    base = math.log2(p0 / (p0 + n0))
    with np.errstate(divide="ignore", invalid="ignore"):
        gains = p * (np.log2(np.where(p > 0, p / (p + n), 1.0)) - base)
    return np.where(p > 0, gains, -math.inf)


def _best_numeric_refinement(col, pos, p0, n0, min_coverage):
    """Best (gain, op_rank, value, mask) over all thresholds of one column.

    A single sorted scan yields the coverage of every '<= v' and '> v'
    refinement; ties prefer '<=' and then the lowest threshold, matching
    the scalar search order.
    """
    order = np.argsort(col, kind="stable")
    sv = col[order]
    sp = np.cumsum(pos[order])
    boundary = np.flatnonzero(sv[1:] != sv[:-1]) + 1  # prefix lengths
    if boundary.size == 0:
        return None
    mids = (sv[boundary - 1] + sv[boundary]) / 2.0
    n_cov = boundary.astype(float)
    p_le = sp[boundary - 1].astype(float)
    total_p = float(sp[-1])
    total = float(col.size)
    best = None
    for op_rank, (p_vec, cov) in enumerate(
        ((p_le, n_cov), (total_p - p_le, total - n_cov))
    ):
        gains = _gain_vector(p_vec, cov - p_vec, p0, n0)
        gains = np.where(cov >= min_coverage, gains, -math.inf)
        i = int(np.argmax(gains))  # first max: lowest threshold wins ties
        if gains[i] <= 0:
            continue
        cand = (float(gains[i]), -op_rank, -float(mids[i]), i)
        if best is None or cand[:3] > best[0][:3]:
            best = (cand, op_rank, float(mids[i]))
    if best is None:
        return None
    (gain, _, _, _), op_rank, value = best
    return gain, op_rank, value


def _grow_rule(
    stage: _Stage,
    grow_idx: np.ndarray,
    start: Sequence[Condition],
    min_coverage: int,
) -> tuple[Condition, ...]:
    """Greedily add conditions maximizing FOIL gain until no negatives are
    covered on the growing set or nothing improves."""
    X, is_pos = stage.X, stage.is_pos
    conditions = list(start)
    covered = _select(X, grow_idx, conditions)
    while covered.size:
        pos = is_pos[covered]
        p0 = int(pos.sum())
        n0 = covered.size - p0
        if n0 == 0 or p0 == 0:
            break
        # maximize (gain, then lowest attr, op order <=,>,=, lowest value)
        best_key: Optional[tuple[float, int, int, float]] = None
        best_cond: Optional[Condition] = None
        for j, attr in enumerate(stage.schema.attributes):
            col = X[covered, j]
            if attr.kind == NUMERIC:
                found = _best_numeric_refinement(col, pos, p0, n0, min_coverage)
                if found is None:
                    continue
                gain, op_rank, value = found
                key = (gain, -j, -op_rank, -value)
                if best_key is None or key > best_key:
                    best_key = key
                    best_cond = Condition(j, (OP_LE, OP_GT)[op_rank], value)
            else:
                for level in range(len(attr.levels)):
                    sel_mask = col == level
                    size = int(sel_mask.sum())
                    if size < min_coverage:
                        continue
                    p = int(pos[sel_mask].sum())
                    gain = foil_gain(p0, n0, p, size - p)
                    if gain <= 0:
                        continue
                    key = (gain, -j, -2, -float(level))
                    if best_key is None or key > best_key:
                        best_key = key
                        best_cond = Condition(j, OP_EQ, float(level))
        if best_cond is None:
            break
        conditions.append(best_cond)
        covered = covered[best_cond.mask(X[covered])]
    return merge_conditions(conditions)


def _coverage(stage: _Stage, idx: np.ndarray, conditions: Sequence[Condition]) -> tuple[int, int]:
    sel = _select(stage.X, idx, conditions)
    p = int(stage.is_pos[sel].sum())
    return p, sel.size - p


def _prune_rule(
    stage: _Stage,
    prune_idx: np.ndarray,
    conditions: tuple[Condition, ...],
) -> tuple[Condition, ...]:
    """Drop a final sequence of conditions maximizing (p-n)/(p+n) on the
    pruning set; ties favour the shorter rule."""
    if prune_idx.size == 0 or not conditions:
        return conditions
    best_value = -math.inf
    best_keep = len(conditions)
    for keep in range(len(conditions), -1, -1):
        p, n = _coverage(stage, prune_idx, conditions[:keep])
        value = (p - n) / (p + n) if (p + n) else -1.0
        if value >= best_value:  # >= so that shorter rules win ties
            best_value = value
            best_keep = keep
    return conditions[:best_keep]


def _grow_and_prune(
    stage: _Stage,
    idx: np.ndarray,
    rng: np.random.Generator,
    min_instances: int,
    start: Sequence[Condition] = (),
) -> tuple[tuple[Condition, ...], np.ndarray]:
    if idx.size >= 3:
        strata = stage.is_pos[idx].astype(np.int64)
        grow_rel, prune_rel = stratified_two_way(strata, 1.0 / 3.0, rng)
        grow_idx, prune_idx = idx[grow_rel], idx[prune_rel]
    else:
        grow_idx, prune_idx = idx, np.empty(0, dtype=np.int64)
    grow_floor = max(1, math.ceil(min_instances * grow_idx.size / max(idx.size, 1)))
    conditions = _grow_rule(stage, grow_idx, start, grow_floor)
    return _prune_rule(stage, prune_idx, conditions), prune_idx


def _ruleset_dl(stage: _Stage, rules_conditions: list[tuple[Condition, ...]]) -> float:
    """Description length of the class theory plus its exceptions."""
    covered_mask = np.zeros(stage.X.shape[0], dtype=bool)
    theory = 0.0
    all_idx = np.arange(stage.X.shape[0])
    for conditions in rules_conditions:
        theory += _theory_dl(len(conditions), stage.m_possible)
        covered_mask[_select(stage.X, all_idx, conditions)] = True
    covered = float(covered_mask.sum())
    uncovered = float(stage.X.shape[0] - covered)
    fp = float((covered_mask & ~stage.is_pos).sum())
    fn = float((~covered_mask & stage.is_pos).sum())
    return theory + _data_dl(stage.exp_fp_over_err, covered, uncovered, fp, fn)


def _cover_class(
    stage: _Stage,
    params: InductionParams,
    stage_no: int,
    existing: list[tuple[Condition, ...]],
    uncovered: np.ndarray,
    attempt_base: int,
) -> list[tuple[Condition, ...]]:
    """Add rules until MDL, the prune-error check, or the coverage floor stops it."""
    added: list[tuple[Condition, ...]] = []
    best_dl = dl = _ruleset_dl(stage, existing)
    attempt = attempt_base
    while stage.is_pos[uncovered].sum() > 0:
        rng = np.random.default_rng([params.seed, stage_no, attempt])
        attempt += 1
        conditions, prune_idx = _grow_and_prune(stage, uncovered, rng, params.min_instances)
        p_full, n_full = _coverage(stage, uncovered, conditions)
        if p_full + n_full < params.min_instances:
            break  # coverage floor
        if prune_idx.size:
            p_pr, n_pr = _coverage(stage, prune_idx, conditions)
            if p_pr + n_pr > 0 and n_pr / (p_pr + n_pr) >= 0.5:
                break  # error check on the pruning data
        dl = _ruleset_dl(stage, existing + added + [conditions])
        best_dl = min(best_dl, dl)
        if dl > best_dl + params.mdl_slack_bits:
            break
        if not conditions:
            break  # an unconditioned rule adds nothing a default cannot
        added.append(conditions)
        mask = np.ones(uncovered.size, dtype=bool)
        for cond in conditions:
            mask &= cond.mask(stage.X[uncovered])
        uncovered = uncovered[~mask]
    return added


def _optimize_class(
    stage: _Stage,
    accepted: list[tuple[Condition, ...]],
    params: InductionParams,
    stage_no: int,
) -> list[tuple[Condition, ...]]:
    """Replacement/revision passes keeping the MDL-cheapest variant."""
    for opt_pass in range(params.optimization_passes):
        for i in range(len(accepted)):
            rng = np.random.default_rng([params.seed, stage_no, 1000 + opt_pass, i])
            others_mask = np.zeros(stage.X.shape[0], dtype=bool)
            all_idx = np.arange(stage.X.shape[0])
            for j, conditions in enumerate(accepted):
                if j != i:
                    others_mask[_select(stage.X, all_idx, conditions)] = True
            context = np.flatnonzero(~others_mask)
            if context.size == 0:
                continue
            replacement, _ = _grow_and_prune(stage, context, rng, params.min_instances)
            revision, _ = _grow_and_prune(
                stage, context, rng, params.min_instances, start=accepted[i]
            )
            variants = [accepted[i], revision, replacement]
            dls = [_ruleset_dl(stage, accepted[:i] + [v] + accepted[i + 1 :]) for v in variants]
            accepted[i] = variants[int(np.argmin(dls))]  # ties keep the original
        uncovered_mask = np.ones(stage.X.shape[0], dtype=bool)
        all_idx = np.arange(stage.X.shape[0])
        for conditions in accepted:
            uncovered_mask[_select(stage.X, all_idx, conditions)] = False
        if stage.is_pos[uncovered_mask].sum() > 0:
            accepted = accepted + _cover_class(
                stage,
                params,
                stage_no,
                accepted,
                np.flatnonzero(uncovered_mask),
                attempt_base=5000 * (opt_pass + 1),
            )
    return [conds for conds in accepted if conds]


def ripper_induce(
    X: np.ndarray,
    y: np.ndarray,
    schema: AttributeSchema,
    params: InductionParams,
) -> RuleSet:
    """Induce an ordered rule list with RIPPER's grow/prune/optimize cycle."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("cannot induce rules from an empty training set")
    classes, y_pos = np.unique(y, return_inverse=True)
    counts = np.bincount(y_pos)
    # rarest first; the most frequent class becomes the default, no rules
    order = sorted(range(classes.size), key=lambda c: (counts[c], c))
    default_pos = order[-1]

    remaining = np.arange(X.shape[0])
    rules: list[Rule] = []
    for stage_no, class_pos in enumerate(order[:-1]):
        if remaining.size == 0:
            break
        stage_X = X[remaining]
        stage_is_pos = y_pos[remaining] == class_pos
        if not stage_is_pos.any():
            continue
        stage = _Stage(
            X=stage_X,
            is_pos=stage_is_pos,
            schema=schema,
            m_possible=_count_possible_conditions(stage_X, schema),
            exp_fp_over_err=float(stage_is_pos.sum()) / stage_is_pos.size,
        )
        accepted = _cover_class(stage, params, stage_no, [], np.arange(stage_X.shape[0]), 0)
        accepted = _optimize_class(stage, accepted, params, stage_no)

        for conditions in accepted:
            sel = _select(X, remaining, conditions)
            rule_counts = np.bincount(y_pos[sel], minlength=classes.size)
            rules.append(
                Rule(
                    conditions=conditions,
                    predicted_class=int(classes[class_pos]),
                    coverage=int(sel.size),
                    class_counts=tuple(int(c) for c in rule_counts),
                )
            )
            mask = np.ones(remaining.size, dtype=bool)
            for cond in conditions:
                mask &= cond.mask(X[remaining])
            remaining = remaining[~mask]

    if remaining.size:
        default_counts = np.bincount(y_pos[remaining], minlength=classes.size)
    else:
        default_counts = np.bincount(y_pos, minlength=classes.size)
    return RuleSet(
        rules=rules,
        default_class=int(classes[default_pos]),
        default_counts=tuple(int(c) for c in default_counts),
        classes=tuple(int(c) for c in classes.tolist()),
        schema=schema,
        algorithm="ripper",
        params=params,
    )
