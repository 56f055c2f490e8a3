"""PART-style rule extraction: repeatedly build a partial pruned tree on the
instances not yet covered, turn its highest-coverage leaf into a rule, and
drop the instances that rule covers.

The partial tree expands only where it has to: children are explored in
order of increasing entropy, and as soon as one child keeps a real subtree
the remaining siblings are left unexplored.  A node whose children all
collapsed to leaves may itself collapse under the pessimistic error
estimate, which is what keeps the extracted rules short.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..profiling import AttributeSchema
from .model import Condition, InductionParams, OP_EQ, OP_GT, OP_LE, Rule, RuleSet, merge_conditions
from .tree import (
    TreeNode,
    _choose_split,
    _rep_prune,
    added_errors,
    entropy,
    stratified_two_way,
)

log = logging.getLogger(__name__)


@dataclass
class _Frame:
    idx: np.ndarray
    node: Optional[TreeNode] = None
    partitions: Optional[list[np.ndarray]] = None
    expansion_order: Optional[list[int]] = None
    next_child: int = 0
    blocked: bool = False  # a kept subtree stops further sibling expansion


def _partial_tree(
    X: np.ndarray,
    y_pos: np.ndarray,
    idx: np.ndarray,
    schema: AttributeSchema,
    n_classes: int,
    params: InductionParams,
) -> TreeNode:
    """Build a partial tree: children are expanded in order of increasing
    entropy, and expansion of further siblings stops as soon as one child
    keeps a real subtree.  Unexplored siblings stay as placeholder leaves.
    A node whose children all collapsed to leaves is itself collapsed when
    the pessimistic error estimate does not favour the split.
    """

    def leaf(node_idx: np.ndarray, expanded: bool = True) -> TreeNode:
        counts = np.bincount(y_pos[node_idx], minlength=n_classes).astype(float)
        return TreeNode(counts, int(np.argmax(counts)), expanded=expanded)

    def estimated_errors(node: TreeNode) -> float:
        n = float(node.coverage)
        e = n - float(node.class_counts[node.class_pos])
        return e + added_errors(n, e, params.pruning_confidence)

    stack = [_Frame(idx)]
    finished: Optional[TreeNode] = None
    while stack:
        frame = stack[-1]
        if frame.node is None:
            split = None
            if frame.idx.size >= 2 * params.min_instances:
                split = _choose_split(
                    X, y_pos, frame.idx, schema, n_classes, params.min_instances
                )
            if split is None:
                finished = leaf(frame.idx)
                stack.pop()
                continue
            counts = np.bincount(y_pos[frame.idx], minlength=n_classes).astype(float)
            col = X[frame.idx, split.attr]
            if split.threshold is not None:
                frame.node = TreeNode(
                    counts, int(np.argmax(counts)), attr=split.attr,
                    threshold=split.threshold, children=[None, None],
                )
                frame.partitions = [
                    frame.idx[col <= split.threshold],
                    frame.idx[col > split.threshold],
                ]
            else:
                frame.node = TreeNode(
                    counts, int(np.argmax(counts)), attr=split.attr,
                    branch_levels=split.levels,
                    children=[None] * len(split.levels),
                )
                frame.partitions = [frame.idx[col == level] for level in split.levels]
            entropies = [
                entropy(np.bincount(y_pos[part], minlength=n_classes).astype(float))
                for part in frame.partitions
            ]
            frame.expansion_order = sorted(
                range(len(frame.partitions)), key=lambda b: (entropies[b], b)
            )
        else:
            # a child expansion just returned
            branch = frame.expansion_order[frame.next_child]
            frame.node.children[branch] = finished
            frame.next_child += 1
            if not finished.is_leaf:
                frame.blocked = True

        if not frame.blocked and frame.next_child < len(frame.partitions):
            branch = frame.expansion_order[frame.next_child]
            stack.append(_Frame(frame.partitions[branch]))
            continue

        # no more children to expand: placeholders for unexplored siblings
        for pos in range(frame.next_child, len(frame.partitions)):
            branch = frame.expansion_order[pos]
            frame.node.children[branch] = leaf(frame.partitions[branch], expanded=False)
        node = frame.node
        all_expanded_leaves = frame.next_child == len(frame.partitions) and all(
            c.is_leaf for c in node.children
        )
        if all_expanded_leaves:
            subtree_est = sum(estimated_errors(c) for c in node.children)
            if estimated_errors(node) <= subtree_est + 0.1:
                node.children = None
                node.attr = -1
                node.branch_levels = ()
        finished = node
        stack.pop()
    return finished


def _best_leaf_path(root: TreeNode) -> tuple[TreeNode, tuple[Condition, ...]]:
    """Highest-coverage explored leaf (pre-order breaks ties) and its path."""
    best: Optional[tuple[int, int, TreeNode, tuple[Condition, ...]]] = None
    order = 0
    stack: list[tuple[TreeNode, tuple[Condition, ...]]] = [(root, ())]
    while stack:
        node, path = stack.pop()
        if node.is_leaf:
            if node.expanded:
                key = (-node.coverage, order)
                if best is None or key < (best[0], best[1]):
                    best = (key[0], key[1], node, path)
            order += 1
            continue
        if not node.branch_levels:
            stack.append((node.children[1], path + (Condition(node.attr, OP_GT, node.threshold),)))
            stack.append((node.children[0], path + (Condition(node.attr, OP_LE, node.threshold),)))
        else:
            for b in range(len(node.branch_levels) - 1, -1, -1):
                cond = Condition(node.attr, OP_EQ, float(node.branch_levels[b]))
                stack.append((node.children[b], path + (cond,)))
    assert best is not None
    return best[2], best[3]


def part_induce(
    X: np.ndarray,
    y: np.ndarray,
    schema: AttributeSchema,
    params: InductionParams,
) -> RuleSet:
    """Decision list from repeated partial-tree construction."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("cannot induce rules from an empty training set")
    classes, y_pos = np.unique(y, return_inverse=True)
    n_classes = classes.size
    global_counts = np.bincount(y_pos, minlength=n_classes)
    global_majority = int(np.argmax(global_counts))

    remaining = np.arange(X.shape[0])
    rules: list[Rule] = []
    iteration = 0
    default_pos = global_majority
    default_counts = global_counts
    while remaining.size:
        rng = np.random.default_rng([params.seed, iteration])
        if params.reduced_error_pruning and remaining.size >= params.folds_for_rep:
            grow_rel, prune_rel = stratified_two_way(
                y_pos[remaining], 1.0 / params.folds_for_rep, rng
            )
            grow_idx = remaining[grow_rel]
            prune_idx = remaining[prune_rel]
        else:
            grow_idx = remaining
            prune_idx = np.empty(0, dtype=np.int64)

        root = _partial_tree(X, y_pos, grow_idx, schema, n_classes, params)
        if not root.is_leaf and params.reduced_error_pruning and prune_idx.size:
            _rep_prune(root, X[prune_idx], y_pos[prune_idx], global_majority)

        if root.is_leaf:
            node_counts = np.bincount(y_pos[remaining], minlength=n_classes)
            if np.count_nonzero(node_counts) == 1:
                # Remainder is pure: one catch-all rule closes the list.
                pure_pos = int(np.argmax(node_counts))
                rules.append(
                    Rule(
                        conditions=(),
                        predicted_class=int(classes[pure_pos]),
                        coverage=int(remaining.size),
                        class_counts=tuple(int(c) for c in node_counts),
                    )
                )
                remaining = np.empty(0, dtype=np.int64)
                default_pos = global_majority
                default_counts = global_counts
            else:
                # Coverage floor (or pruning) stopped expansion; the rest is
                # handled by the default class.
                default_pos = int(np.argmax(node_counts))
                default_counts = node_counts
            break

        leaf_node, path = _best_leaf_path(root)
        conditions = merge_conditions(path)
        rule_class_pos = leaf_node.class_pos
        mask = np.ones(remaining.size, dtype=bool)
        for cond in conditions:
            mask &= cond.mask(X[remaining])
        covered = remaining[mask]
        counts = np.bincount(y_pos[covered], minlength=n_classes)
        rules.append(
            Rule(
                conditions=conditions,
                predicted_class=int(classes[rule_class_pos]),
                coverage=int(covered.size),
                class_counts=tuple(int(c) for c in counts),
            )
        )
        remaining = remaining[~mask]
        iteration += 1

    if remaining.size == 0 and not rules:
        default_pos = global_majority
        default_counts = global_counts
    return RuleSet(
        rules=rules,
        default_class=int(classes[default_pos]),
        default_counts=tuple(int(c) for c in np.asarray(default_counts)),
        classes=tuple(int(c) for c in classes.tolist()),
        schema=schema,
        algorithm="part",
        params=params,
    )
