"""Top-down decision-tree induction with gain ratio and two pruning modes.

Numeric attributes split binary at midpoints between consecutive distinct
values; nominal attributes split one branch per level present in the node.
The split chosen maximizes gain ratio among per-attribute candidates whose
information gain is at least the candidate average.  Pruning is bottom-up
subtree replacement, either pessimistic (confidence-bound error estimates)
or reduced-error against a held-out slice of the training data.

Growth and pruning are iterative (explicit work lists), so tree depth is
not limited by the interpreter recursion limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from ..profiling import NUMERIC, AttributeSchema
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

_EPS = 1e-12


def entropy(counts: np.ndarray) -> float:
    """Shannon entropy in bits of a count vector."""
    n = counts.sum()
    if n <= 0:
        return 0.0
    p = counts[counts > 0] / n
    return float(-(p * np.log2(p)).sum())


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = counts / np.where(totals > 0, totals, 1)
        logs = np.where(counts > 0, np.log2(np.where(counts > 0, frac, 1.0)), 0.0)
    return -(frac * logs).sum(axis=1)


@dataclass
class _Candidate:
    attr: int
    gain: float
    ratio: float
    threshold: Optional[float] = None  # numeric splits
    levels: tuple[int, ...] = ()  # nominal splits: levels present at the node


def _numeric_candidate(
    values: np.ndarray, y_pos: np.ndarray, n_classes: int, min_instances: int, parent_h: float
) -> Optional[_Candidate]:
    n = values.shape[0]
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sy = y_pos[order]
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), sy] = 1.0
    cum = np.cumsum(onehot, axis=0)
    pos = np.arange(1, n)
    ok = (sv[1:] != sv[:-1]) & (pos >= min_instances) & ((n - pos) >= min_instances)
    idxs = pos[ok]
    if idxs.size == 0:
        return None
    left = cum[idxs - 1]
    right = cum[-1] - left
    nl = idxs.astype(float)
    nr = n - nl
    gains = parent_h - (nl * _entropy_rows(left) + nr * _entropy_rows(right)) / n
    best = int(np.argmax(gains))  # first max: lowest threshold wins ties
    i = int(idxs[best])
    gain = float(gains[best])
    threshold = (float(sv[i - 1]) + float(sv[i])) / 2.0
    split_h = entropy(np.array([i, n - i], dtype=float))
    ratio = gain / split_h if split_h > _EPS else 0.0
    return _Candidate(attr=-1, gain=gain, ratio=ratio, threshold=threshold)


def _nominal_candidate(
    values: np.ndarray,
    y_pos: np.ndarray,
    n_classes: int,
    n_levels: int,
    min_instances: int,
    parent_h: float,
) -> Optional[_Candidate]:
    lv = values.astype(np.int64)
    table = np.zeros((n_levels, n_classes))
    np.add.at(table, (lv, y_pos), 1.0)
    sizes = table.sum(axis=1)
    present = sizes > 0
    if present.sum() < 2:
        return None
    if (sizes[present] < min_instances).any():
        return None
    n = values.shape[0]
    child_h = _entropy_rows(table[present])
    gain = parent_h - float((sizes[present] * child_h).sum()) / n
    split_h = entropy(sizes[present])
    ratio = gain / split_h if split_h > _EPS else 0.0
    return _Candidate(
        attr=-1, gain=gain, ratio=ratio, levels=tuple(int(i) for i in np.flatnonzero(present))
    )


def _choose_split(
    X: np.ndarray,
    y_pos: np.ndarray,
    idx: np.ndarray,
    schema: AttributeSchema,
    n_classes: int,
    min_instances: int,
) -> Optional[_Candidate]:
    """Best admissible split at a node, or None.

    Per attribute the best threshold is found first; across attributes the
    winner maximizes gain ratio among candidates with info gain at least the
    candidate average (and strictly positive).  Ties break to the lowest
    attribute index.
    """
    y_node = y_pos[idx]
    counts = np.bincount(y_node, minlength=n_classes).astype(float)
    parent_h = entropy(counts)
    if parent_h <= _EPS:
        return None
    candidates: list[_Candidate] = []
    for j, attr in enumerate(schema.attributes):
        col = X[idx, j]
        if attr.kind == NUMERIC:
            cand = _numeric_candidate(col, y_node, n_classes, min_instances, parent_h)
        else:
            cand = _nominal_candidate(
                col, y_node, n_classes, len(attr.levels), min_instances, parent_h
            )
        if cand is not None:
            cand.attr = j
            cand.gain = max(cand.gain, 0.0)
            candidates.append(cand)
    if not candidates:
        return None
    # A zero-gain split stays admissible when nothing beats it (an xor-style
    # attribute pair needs one); the average-gain filter removes it whenever
    # any informative candidate exists.
    avg_gain = sum(c.gain for c in candidates) / len(candidates)
    admissible = [c for c in candidates if c.gain >= avg_gain - _EPS]
    return max(admissible, key=lambda c: (c.ratio, -c.attr))


def split_score(
    X: np.ndarray,
    y: np.ndarray,
    schema: AttributeSchema,
    attr: int,
    threshold: Optional[float] = None,
) -> tuple[float, float]:
    """(information gain, gain ratio) of one split on the given instances.

    Numeric attributes need an explicit threshold; nominal ones branch on
    every level present.  A constant attribute scores zero.
    """
    if X.shape[0] < 2:
        raise ValueError("need at least 2 instances to score a split")
    classes, y_pos = np.unique(y, return_inverse=True)
    counts = np.bincount(y_pos, minlength=classes.size).astype(float)
    parent_h = entropy(counts)
    col = X[:, attr]
    kind = schema.attributes[attr].kind
    if kind == NUMERIC:
        if threshold is None:
            raise ValueError("numeric splits need a threshold")
        left = col <= threshold
        sizes = np.array([left.sum(), (~left).sum()], dtype=float)
        if (sizes == 0).any():
            return 0.0, 0.0
        h = np.array(
            [
                entropy(np.bincount(y_pos[left], minlength=classes.size).astype(float)),
                entropy(np.bincount(y_pos[~left], minlength=classes.size).astype(float)),
            ]
        )
    else:
        n_levels = len(schema.attributes[attr].levels)
        lv = col.astype(np.int64)
        table = np.zeros((n_levels, classes.size))
        np.add.at(table, (lv, y_pos), 1.0)
        sizes = table.sum(axis=1)
        present = sizes > 0
        if present.sum() < 2:
            return 0.0, 0.0
        sizes = sizes[present]
        h = _entropy_rows(table[present])
    n = X.shape[0]
    gain = parent_h - float((sizes * h).sum()) / n
    split_h = entropy(sizes)
    ratio = gain / split_h if split_h > _EPS else 0.0
    return gain, ratio


@dataclass
class TreeNode:
    class_counts: np.ndarray  # roster-aligned counts of routed training instances
    class_pos: int  # majority class position, fixed at build time
    attr: int = -1
    threshold: float = math.nan
    branch_levels: tuple[int, ...] = ()
    children: Optional[list["TreeNode"]] = None
    # partial-tree construction can leave subsets unexplored; such leaves
    # predict normally but are not eligible as best-leaf rule sources
    expanded: bool = True

    @property
    def is_leaf(self) -> bool:
        return self.children is None

    @property
    def coverage(self) -> int:
        return int(self.class_counts.sum())

    def route(self, row: Sequence[float]) -> Optional[int]:
        """Child index for a row, or None when a nominal level has no branch."""
        v = row[self.attr]
        if not self.branch_levels:
            return 0 if v <= self.threshold else 1
        for i, level in enumerate(self.branch_levels):
            if v == level:
                return i
        return None


@dataclass
class DecisionTree:
    root: TreeNode
    classes: tuple[int, ...]
    schema: AttributeSchema
    params: InductionParams
    algorithm: str = "c45_tree"

    @property
    def global_majority_pos(self) -> int:
        return int(np.argmax(self.root.class_counts))

    @property
    def number_of_rules(self) -> int:
        """Leaf count; the tree analogue of a rule count."""
        return sum(1 for _ in self.leaves())

    def leaves(self):
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.is_leaf:
                yield node
            else:
                stack.extend(reversed(node.children))

    def nodes(self) -> list[TreeNode]:
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.extend(reversed(node.children))
        return out

    def predict_row(self, row: Sequence[float]) -> int:
        node = self.root
        while not node.is_leaf:
            branch = node.route(row)
            if branch is None:
                # level unseen on this path during training: global majority
                return self.classes[self.global_majority_pos]
            node = node.children[branch]
        return self.classes[node.class_pos]

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        self._fill(X, np.arange(X.shape[0]), out, scores=None)
        return out

    def class_scores(self, X: np.ndarray) -> np.ndarray:
        k = len(self.classes)
        scores = np.empty((X.shape[0], k))
        out = np.empty(X.shape[0], dtype=np.int64)
        self._fill(X, np.arange(X.shape[0]), out, scores=scores)
        return scores

    def _fill(self, X, idx_all, out, scores) -> None:
        k = len(self.classes)
        fallback = self.global_majority_pos
        fallback_scores = (self.root.class_counts + 1.0) / (self.root.coverage + k)
        stack = [(self.root, idx_all)]
        while stack:
            node, idx = stack.pop()
            if idx.size == 0:
                continue
            if node.is_leaf:
                out[idx] = self.classes[node.class_pos]
                if scores is not None:
                    scores[idx] = (node.class_counts + 1.0) / (node.coverage + k)
                continue
            col = X[idx, node.attr]
            if not node.branch_levels:
                left = col <= node.threshold
                stack.append((node.children[0], idx[left]))
                stack.append((node.children[1], idx[~left]))
            else:
                unrouted = np.ones(idx.size, dtype=bool)
                for i, level in enumerate(node.branch_levels):
                    m = col == level
                    stack.append((node.children[i], idx[m]))
                    unrouted &= ~m
                if unrouted.any():
                    miss = idx[unrouted]
                    out[miss] = self.classes[fallback]
                    if scores is not None:
                        scores[miss] = fallback_scores


def _grow_tree(
    X: np.ndarray,
    y_pos: np.ndarray,
    idx: np.ndarray,
    schema: AttributeSchema,
    n_classes: int,
    min_instances: int,
) -> TreeNode:
    holder: list[Optional[TreeNode]] = [None]
    work = [(idx, holder, 0)]
    while work:
        node_idx, container, pos = work.pop()
        counts = np.bincount(y_pos[node_idx], minlength=n_classes).astype(float)
        majority = int(np.argmax(counts))
        split = None
        if node_idx.size >= 2 * min_instances:
            split = _choose_split(X, y_pos, node_idx, schema, n_classes, min_instances)
        if split is None:
            container[pos] = TreeNode(counts, majority)
            continue
        col = X[node_idx, split.attr]
        if split.threshold is not None:
            node = TreeNode(counts, majority, attr=split.attr, threshold=split.threshold,
                            children=[None, None])
            left = col <= split.threshold
            partitions = [node_idx[left], node_idx[~left]]
        else:
            node = TreeNode(counts, majority, attr=split.attr, branch_levels=split.levels,
                            children=[None] * len(split.levels))
            partitions = [node_idx[col == level] for level in split.levels]
        container[pos] = node
        for b, sub in enumerate(partitions):
            work.append((sub, node.children, b))
    return holder[0]


def _reverse_bfs(root: TreeNode) -> list[TreeNode]:
    order = [root]
    i = 0
    while i < len(order):
        node = order[i]
        if not node.is_leaf:
            order.extend(node.children)
        i += 1
    order.reverse()
    return order


@lru_cache(maxsize=16)
def _z_value(cf: float) -> float:
    return float(norm.ppf(1.0 - cf))


def added_errors(n: float, e: float, cf: float) -> float:
    """C4.5 pessimistic correction: extra errors implied by the upper
    confidence bound of the training error rate e/n."""
    if n <= 0:
        return 0.0
    if e < 1:
        base = n * (1.0 - cf ** (1.0 / n))
        if e == 0:
            return base
        return base + e * (added_errors(n, 1.0, cf) - base)
    if e + 0.5 >= n:
        return max(n - e, 0.0)
    z = _z_value(cf)
    f = (e + 0.5) / n
    r = (f + z * z / (2 * n) + z * math.sqrt(f / n - f * f / n + z * z / (4 * n * n))) / (
        1 + z * z / n
    )
    return r * n - e


def _pessimistic_prune(root: TreeNode, cf: float) -> None:
    estimates: dict[int, float] = {}
    for node in _reverse_bfs(root):
        n = float(node.coverage)
        e_leaf = n - float(node.class_counts[node.class_pos])
        leaf_est = e_leaf + added_errors(n, e_leaf, cf)
        if node.is_leaf:
            estimates[id(node)] = leaf_est
            continue
        subtree_est = sum(estimates[id(c)] for c in node.children)
        if leaf_est <= subtree_est + 0.1:
            node.children = None
            node.attr = -1
            node.branch_levels = ()
            estimates[id(node)] = leaf_est
        else:
            estimates[id(node)] = subtree_est


def _rep_prune(
    root: TreeNode, X_prune: np.ndarray, y_prune_pos: np.ndarray, global_majority: int
) -> None:
    """Subtree replacement driven by held-out error; never increases it."""
    routed: dict[int, np.ndarray] = {id(root): np.arange(X_prune.shape[0])}
    missed: dict[int, np.ndarray] = {}
    order = [root]
    i = 0
    while i < len(order):
        node = order[i]
        i += 1
        if node.is_leaf:
            continue
        idx = routed[id(node)]
        col = X_prune[idx, node.attr] if idx.size else np.empty(0)
        if not node.branch_levels:
            left = col <= node.threshold
            routed[id(node.children[0])] = idx[left]
            routed[id(node.children[1])] = idx[~left]
        else:
            unrouted = np.ones(idx.size, dtype=bool)
            for b, level in enumerate(node.branch_levels):
                m = col == level
                routed[id(node.children[b])] = idx[m]
                unrouted &= ~m
            missed[id(node)] = idx[unrouted]
        order.extend(node.children)

    errors: dict[int, float] = {}
    for node in reversed(order):
        idx = routed[id(node)]
        y_here = y_prune_pos[idx]
        leaf_err = float((y_here != node.class_pos).sum())
        if node.is_leaf:
            errors[id(node)] = leaf_err
            continue
        subtree_err = sum(errors[id(c)] for c in node.children)
        miss = missed.get(id(node))
        if miss is not None and miss.size:
            subtree_err += float((y_prune_pos[miss] != global_majority).sum())
        if leaf_err <= subtree_err:
            node.children = None
            node.attr = -1
            node.branch_levels = ()
            errors[id(node)] = leaf_err
        else:
            errors[id(node)] = subtree_err


def refresh_counts(tree: DecisionTree, X: np.ndarray, y: np.ndarray) -> None:
    """Recompute per-node class counts by routing the given instances.

    Used after reduced-error pruning so stored distributions describe the
    whole training set, not just the growing partition.  Leaf classes are
    not changed.
    """
    roster = {c: i for i, c in enumerate(tree.classes)}
    y_pos = np.asarray([roster[v] for v in y], dtype=np.int64)
    k = len(tree.classes)
    stack = [(tree.root, np.arange(X.shape[0]))]
    while stack:
        node, idx = stack.pop()
        node.class_counts = np.bincount(y_pos[idx], minlength=k).astype(float)
        if node.is_leaf:
            continue
        col = X[idx, node.attr]
        if not node.branch_levels:
            left = col <= node.threshold
            stack.append((node.children[0], idx[left]))
            stack.append((node.children[1], idx[~left]))
        else:
            for b, level in enumerate(node.branch_levels):
                stack.append((node.children[b], idx[col == level]))


def stratified_two_way(
    y: np.ndarray, holdout_fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded stratified split into (main, holdout) index arrays.

    The holdout gets floor(fraction * n_c) per class, then classes ordered
    by largest fractional remainder top up until the exact overall
    floor(fraction * n) size is reached.
    """
    n = y.shape[0]
    target = int(math.floor(holdout_fraction * n))
    classes, inverse = np.unique(y, return_inverse=True)
    per_class = []
    for ci in range(classes.size):
        members = rng.permutation(np.flatnonzero(inverse == ci))
        exact = holdout_fraction * members.size
        per_class.append([members, int(math.floor(exact)), exact - math.floor(exact)])
    short = target - sum(p[1] for p in per_class)
    for _, entry in sorted(
        enumerate(per_class), key=lambda t: (-t[1][2], t[0])
    )[: max(short, 0)]:
        if entry[1] < len(entry[0]):
            entry[1] += 1
    holdout = np.concatenate([p[0][: p[1]] for p in per_class]) if per_class else np.empty(0, int)
    main = np.concatenate([p[0][p[1] :] for p in per_class]) if per_class else np.empty(0, int)
    return np.sort(main), np.sort(holdout)


def build_tree(
    X: np.ndarray,
    y: np.ndarray,
    schema: AttributeSchema,
    params: InductionParams,
) -> DecisionTree:
    """Grow and prune a decision tree over cluster-labeled instances."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("cannot build a tree from an empty training set")
    classes, y_pos = np.unique(y, return_inverse=True)
    n_classes = classes.size
    all_idx = np.arange(X.shape[0])

    if params.reduced_error_pruning and X.shape[0] >= params.folds_for_rep:
        rng = np.random.default_rng(params.seed)
        grow_idx, prune_idx = stratified_two_way(y_pos, 1.0 / params.folds_for_rep, rng)
        root = _grow_tree(X, y_pos, grow_idx, schema, n_classes, params.min_instances)
        global_majority = int(np.argmax(np.bincount(y_pos[grow_idx], minlength=n_classes)))
        if prune_idx.size:
            _rep_prune(root, X[prune_idx], y_pos[prune_idx], global_majority)
        tree = DecisionTree(root, tuple(classes.tolist()), schema, params)
        refresh_counts(tree, X, y)
        return tree

    root = _grow_tree(X, y_pos, all_idx, schema, n_classes, params.min_instances)
    _pessimistic_prune(root, params.pruning_confidence)
    return DecisionTree(root, tuple(classes.tolist()), schema, params)


def tree_to_rules(tree: DecisionTree) -> RuleSet:
    """One rule per leaf, path bounds merged, ordered by descending coverage.

    The default is the global majority class, which is also what the tree
    itself predicts for nominal levels with no branch, so rule-set and tree
    predictions agree on every instance.
    """
    rules: list[Rule] = []
    stack: list[tuple[TreeNode, tuple[Condition, ...]]] = [(tree.root, ())]
    order = 0
    collected: list[tuple[int, int, Rule]] = []
    while stack:
        node, path = stack.pop()
        if node.is_leaf:
            rule = Rule(
                conditions=merge_conditions(path),
                predicted_class=tree.classes[node.class_pos],
                coverage=node.coverage,
                class_counts=tuple(int(c) for c in node.class_counts),
            )
            collected.append((-rule.coverage, order, rule))
            order += 1
            continue
        if not node.branch_levels:
            le = Condition(node.attr, OP_LE, node.threshold)
            gt = Condition(node.attr, OP_GT, node.threshold)
            stack.append((node.children[1], path + (gt,)))
            stack.append((node.children[0], path + (le,)))
        else:
            for b in range(len(node.branch_levels) - 1, -1, -1):
                cond = Condition(node.attr, OP_EQ, float(node.branch_levels[b]))
                stack.append((node.children[b], path + (cond,)))
    collected.sort(key=lambda t: (t[0], t[1]))
    rules = [t[2] for t in collected]
    return RuleSet(
        rules=rules,
        default_class=tree.classes[tree.global_majority_pos],
        default_counts=tuple(int(c) for c in tree.root.class_counts),
        classes=tree.classes,
        schema=tree.schema,
        algorithm=f"{tree.algorithm}_rules",
        params=tree.params,
    )
