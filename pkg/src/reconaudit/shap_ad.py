"""Hierarchical attribution of reconstruction error over a partition tree.

The image rectangle is bisected along its longer axis down to min_leaf, and
regions play a cooperative game: the value of a region set is the MSE
between the input and the input with that set replaced by the
reconstruction. Expanding a node evaluates its two children in the node's
context and splits the node's credit between them by averaging the child's
marginal contribution in the lower context (nothing else from the node
replaced) and the upper context (the sibling also replaced). Because the
game is additive over pixels the two marginals must agree; that identity is
kept as a runtime self-check instead of being optimized away, so a masking
bug cannot silently corrupt attributions.

Expansion is best-first by |credit| * area under an evaluation budget; each
expansion costs exactly two new evaluations since the child contexts reuse
the parent's numbers. Nodes never expanded keep their credit and spread it
uniformly over their pixels.
"""

from __future__ import annotations

import dataclasses
import heapq

import numpy as np

from . import _kernels
from .errors import BudgetError, ShapeMismatchError
from .imagecore import RgbImage, ScalarMap

__all__ = [
    "TreeNode",
    "PartitionTree",
    "TraceEntry",
    "ShapExplanation",
    "build_partition_tree",
    "partition_attribution",
]


@dataclasses.dataclass(frozen=True)
class TreeNode:
    """A rectangle [y0, y1) x [x0, x1) with child and parent ids (-1 = none)."""

    y0: int
    y1: int
    x0: int
    x1: int
    parent: int
    left: int
    right: int

    @property
    def is_leaf(self) -> bool:
        return self.left < 0

    @property
    def area(self) -> int:
        return (self.y1 - self.y0) * (self.x1 - self.x0)


@dataclasses.dataclass(frozen=True)
class PartitionTree:
    """Binary bisection tree over an h x w rectangle, nodes in preorder."""

    nodes: tuple[TreeNode, ...]
    h: int
    w: int
    min_leaf: int
    levels: int


def build_partition_tree(h: int, w: int, min_leaf: int = 4) -> PartitionTree:
    """Bisect the longer axis at its midpoint until both sides fit min_leaf.

    Node ids are preorder (root 0, left subtree before right). On square
    regions the row axis splits first.
    """
    if h < 1 or w < 1:
        raise ValueError(f"rectangle must be non-empty, got {h} x {w}")
    if min_leaf < 1:
        raise ValueError(f"min_leaf must be >= 1, got {min_leaf}")
    nodes: list[TreeNode | None] = []
    max_depth = 0

    def rec(y0: int, y1: int, x0: int, x1: int, parent: int, depth: int) -> int:
        nonlocal max_depth
        max_depth = max(max_depth, depth)
        idx = len(nodes)
        nodes.append(None)
        hh, ww = y1 - y0, x1 - x0
        if hh <= min_leaf and ww <= min_leaf:
            nodes[idx] = TreeNode(y0, y1, x0, x1, parent, -1, -1)
            return idx
        if hh >= ww:
            ym = y0 + hh // 2
            left = rec(y0, ym, x0, x1, idx, depth + 1)
            right = rec(ym, y1, x0, x1, idx, depth + 1)
        else:
            xm = x0 + ww // 2
            left = rec(y0, y1, x0, xm, idx, depth + 1)
            right = rec(y0, y1, xm, x1, idx, depth + 1)
        nodes[idx] = TreeNode(y0, y1, x0, x1, parent, left, right)
        return idx

    rec(0, h, 0, w, -1, 0)
    return PartitionTree(tuple(nodes), h, w, min_leaf, max_depth + 1)  # type: ignore[arg-type]


@dataclasses.dataclass(frozen=True)
class TraceEntry:
    """One credit assignment: which node, how much, evaluations used so far."""

    node: int
    credit: float
    evaluations: int


@dataclasses.dataclass(frozen=True)
class ShapExplanation:
    """Budgeted attribution result.

    node_credits holds every credit ever assigned (including nodes later
    expanded); frontier lists the unexpanded nodes whose regions tile the
    image and whose credits make up pixel_attribution.
    """

    pixel_attribution: ScalarMap
    node_credits: dict[int, float]
    frontier: tuple[int, ...]
    evaluations_used: int
    trace: tuple[TraceEntry, ...]


_SELF_CHECK_TOL = 1e-9


def _context_mask(tree: PartitionTree, nid: int, out: np.ndarray) -> np.ndarray:
    """Union of the sibling rectangles along the path to the root."""
    out[:] = False
    cur = nid
    while True:
        node = tree.nodes[cur]
        if node.parent < 0:
            return out
        parent = tree.nodes[node.parent]
        sib = parent.right if parent.left == cur else parent.left
        s = tree.nodes[sib]
        out[s.y0 : s.y1, s.x0 : s.x1] = True
        cur = node.parent


def partition_attribution(
    img: RgbImage,
    reconstruction: RgbImage,
    tree: PartitionTree | None = None,
    budget: int | None = None,
    min_leaf: int = 4,
) -> ShapExplanation:
    """Attribute reconstruction error to tree regions under a budget.

    budget counts game evaluations: the root costs two (empty and full
    coalitions) and each expansion costs two more. budget=None expands the
    whole tree. A finite budget below 2 * tree levels is rejected, since it
    could not even finish one root-to-leaf path.
    """
    if (img.h, img.w) != (reconstruction.h, reconstruction.w):
        raise ShapeMismatchError(
            f"partition_attribution: image {(img.h, img.w)} vs "
            f"reconstruction {(reconstruction.h, reconstruction.w)}"
        )
    if tree is None:
        tree = build_partition_tree(img.h, img.w, min_leaf)
    if (tree.h, tree.w) != (img.h, img.w):
        raise ShapeMismatchError(
            f"partition_attribution: tree {(tree.h, tree.w)} vs image {(img.h, img.w)}"
        )
    if budget is not None:
        if budget < 2:
            raise BudgetError(f"budget {budget} cannot evaluate the root (2 needed)")
        if budget < 2 * tree.levels:
            raise BudgetError(
                f"budget {budget} is below 2 * {tree.levels} tree levels; "
                "one full root-to-leaf path must be affordable"
            )
    inp = np.ascontiguousarray(img.data)
    rec = np.ascontiguousarray(reconstruction.data)
    h, w = img.h, img.w

    scratch = np.zeros((h, w), dtype=np.bool_)

    def g(region: np.ndarray) -> float:
        return float(_kernels.masked_mse(inp, rec, region))

    evals = 0
    g_empty = g(np.zeros((h, w), dtype=np.bool_))
    g_full = g(np.ones((h, w), dtype=np.bool_))
    evals = 2

    root_credit = g_full - g_empty
    credits: dict[int, float] = {0: root_credit}
    trace: list[TraceEntry] = [TraceEntry(0, root_credit, evals)]
    expanded: set[int] = set()

    # Heap entries: (-|credit| * area, preorder id, g(context), g(context + region)).
    heap: list[tuple[float, int, float, float]] = []
    # A node with exactly zero credit holds no residual energy at all, so
    # its descendants could only ever receive zeros; it is final as-is and
    # expanding it would waste budget (and identical images then finish in
    # the two baseline evaluations).
    root = tree.nodes[0]
    if not root.is_leaf and root_credit != 0.0:
        heapq.heappush(heap, (-abs(root_credit) * root.area, 0, g_empty, g_full))

    while heap and (budget is None or budget - evals >= 2):
        _, nid, g_c, g_cr = heapq.heappop(heap)
        node = tree.nodes[nid]
        ctx = _context_mask(tree, nid, scratch)
        a = tree.nodes[node.left]
        b = tree.nodes[node.right]

        m = ctx.copy()
        m[a.y0 : a.y1, a.x0 : a.x1] = True
        g_ca = g(m)
        m = ctx.copy()
        m[b.y0 : b.y1, b.x0 : b.x1] = True
        g_cb = g(m)
        evals += 2

        term_low = g_ca - g_c
        term_high = g_cr - g_cb
        if abs(term_low - term_high) > _SELF_CHECK_TOL:
            raise RuntimeError(
                "two-context additivity self-check failed at node "
                f"{nid}: |{term_low!r} - {term_high!r}| > {_SELF_CHECK_TOL}"
            )
        credit_a = 0.5 * (term_low + term_high)
        credit_b = 0.5 * ((g_cb - g_c) + (g_cr - g_ca))

        expanded.add(nid)
        credits[node.left] = credit_a
        credits[node.right] = credit_b
        trace.append(TraceEntry(node.left, credit_a, evals))
        trace.append(TraceEntry(node.right, credit_b, evals))

        if not a.is_leaf and credit_a != 0.0:
            heapq.heappush(heap, (-abs(credit_a) * a.area, node.left, g_cb, g_cr))
        if not b.is_leaf and credit_b != 0.0:
            heapq.heappush(heap, (-abs(credit_b) * b.area, node.right, g_ca, g_cr))

    frontier = tuple(sorted(nid for nid in credits if nid not in expanded))
    beta = np.zeros((h, w), dtype=np.float64)
    for nid in frontier:
        node = tree.nodes[nid]
        beta[node.y0 : node.y1, node.x0 : node.x1] = credits[nid] / node.area
    return ShapExplanation(
        pixel_attribution=ScalarMap(beta),
        node_credits=credits,
        frontier=frontier,
        evaluations_used=evals,
        trace=tuple(trace),
    )
