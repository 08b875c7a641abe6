"""Task-tree construction for the parallel executors.

Both executors first build, identically on every process, a truncated
recursion tree whose leaves are the per-process tasks.  A tree node is either
an A^T A task (compute the lower triangle of a diagonal result block) or an
A^T B task (compute a full rectangular result block from two operand blocks).

Expansion of a node with a process budget p and a remaining-level budget r:

* distributed mode, A^T A node: the complete bunch has six children, the
  four diagonal-block self-recursions followed by the two below-diagonal
  products.  Half the processes go to the two product children (they cost
  twice as much per element), integer arithmetic permitting.  When the budget
  cannot fill a bunch, or this is the last level the tree may use, the task
  is cut into horizontal operand tiles whose full-size partial results the
  parent sums.
* distributed mode, A^T B node: the complete bunch has eight children (two
  block choices per output row, output column and contraction index).  A
  budget below eight, or an exhausted level budget, tiles both operands into
  a column grid with one disjoint output block per process.
* shared mode, A^T A node: three children over full-height column halves
  (left half -> top-left block, right half -> bottom-right block, the pair
  -> the below-diagonal block), so every child writes a distinct region.
  Leftover budgets cut the task into column stripes: stripe i computes the
  rows of the result triangle its columns own, again write-disjoint.
* shared mode, A^T B node: four children, one per output quadrant; leftover
  budgets grid-tile as in distributed mode.

The remaining-level budget r starts at levels_*(P) and decreases through
bunch expansions; when it reaches one the node must finish in a single level,
which keeps the tree depth exactly equal to the level formula for every P.

Labels: nodes are expanded in breadth-first order; a node's first child
inherits its owner and every other child takes the next fresh process id, so
the owner of any inner node is the lowest label in its subtree and label 0
walks a chain from the root to its own leaf.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import UnknownProcessError, UnsplittableError


class ComputationType(Enum):
    ATA = "AtA"
    ATB = "AtB"


@dataclass(frozen=True)
class Region:
    row_offset: int
    col_offset: int
    rows: int
    cols: int

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def __str__(self):
        return (f"[{self.row_offset}:{self.row_offset + self.rows},"
                f"{self.col_offset}:{self.col_offset + self.cols}]")


@dataclass
class Task:
    computation: ComputationType
    a_region: Region
    b_region: Region | None
    c_region: Region
    parent: int
    owner: int

    @property
    def operand_words(self) -> int:
        words = self.a_region.size
        if self.b_region is not None:
            words += self.b_region.size
        return words


@dataclass
class TreeNode:
    id: int
    task: Task
    parent_id: int | None
    depth: int
    children: list[int] = field(default_factory=list)
    bunch: bool = False       # True when this node expanded as a complete bunch


@dataclass
class TaskTree:
    mode: str
    procs: int
    m: int
    n: int
    nodes: list[TreeNode]
    leaf_ids: list[int]

    @property
    def root(self) -> TreeNode:
        return self.nodes[0]

    @property
    def depth(self) -> int:
        return max(node.depth for node in self.nodes)

    def node(self, node_id: int) -> TreeNode:
        return self.nodes[node_id]

    def children_of(self, node: TreeNode) -> list[TreeNode]:
        return [self.nodes[c] for c in node.children]


# ---------------------------------------------------------------------------
# Level-count formulas
# ---------------------------------------------------------------------------


def levels_distributed(procs: int) -> int:
    """Parallel levels of the distributed task tree for a given process
    count: 0 for one process, 1 up to a complete six-bunch, then one level
    per complete eight-way split of the quarter-budget plus one more when the
    split leaves a remainder."""
    if procs < 1:
        raise ValueError("process count must be >= 1")
    if procs == 1:
        return 0
    if procs <= 6:
        return 1
    q = procs // 4
    k = 0
    while q // (8 ** (k + 1)) >= 1:
        k += 1
    remainder = q % (8 ** max(k, 1))
    return 1 + k + (1 if remainder else 0)


def levels_shared(procs: int) -> int:
    """Parallel levels of the shared task tree: 0 for one thread, 1 for two
    or three, then one level per complete four-way split of the half-budget
    plus one for any remainder."""
    if procs < 1:
        raise ValueError("process count must be >= 1")
    if procs == 1:
        return 0
    if procs <= 3:
        return 1
    q = procs // 2
    k = 0
    while q // (4 ** (k + 1)) >= 1:
        k += 1
    remainder = q % (4 ** max(k, 1))
    return 1 + k + (1 if remainder else 0)


# ---------------------------------------------------------------------------
# Budget helpers
# ---------------------------------------------------------------------------


def _split_even(total: int, parts: int) -> list[int]:
    """Split a count into `parts` integers differing by at most 1, larger
    ones first."""
    base, extra = divmod(total, parts)
    return [base + 1] * extra + [base] * (parts - extra)


def _split_extent(extent: int, parts: int) -> list[tuple[int, int]]:
    """Cut [0, extent) into `parts` spans whose widths differ by at most 1."""
    if parts > extent:
        raise UnsplittableError(
            f"unsplittable: {parts} tiles over extent {extent}")
    spans = []
    start = 0
    for width in _split_even(extent, parts):
        spans.append((start, width))
        start += width
    return spans


def _grid_shape(q: int) -> tuple[int, int]:
    """Most-square factorisation q = u * v with u >= v (more row tiles)."""
    v = 1
    for d in range(1, math.isqrt(q) + 1):
        if q % d == 0:
            v = d
    return q // v, v


def _stripe_bounds(cols: int, parts: int) -> list[int]:
    """Stripe boundaries over a triangular output chosen so the stripes
    carry near-equal numbers of result entries; later stripes are narrower
    because their rows are longer."""
    if parts > cols:
        raise UnsplittableError(
            f"unsplittable: {parts} stripes over {cols} columns")
    bounds = [max(1, round(cols * math.sqrt(i / parts)))
              for i in range(1, parts + 1)]
    bounds[-1] = cols
    for i in range(parts - 2, -1, -1):          # enforce strict increase
        bounds[i] = min(bounds[i], bounds[i + 1] - 1)
    for i in range(1, parts):
        bounds[i] = max(bounds[i], bounds[i - 1] + 1)
    if bounds[-1] != cols:
        raise UnsplittableError("unsplittable: stripe repair failed")
    return bounds


# ---------------------------------------------------------------------------
# Tree construction
# ---------------------------------------------------------------------------


class _Builder:
    def __init__(self, mode: str, procs: int, m: int, n: int):
        self.mode = mode
        self.procs = procs
        self.nodes: list[TreeNode] = []
        self.next_label = 1
        self.m = m
        self.n = n

    def add_node(self, task: Task, parent_id: int | None, depth: int) -> TreeNode:
        node = TreeNode(id=len(self.nodes), task=task, parent_id=parent_id,
                        depth=depth)
        self.nodes.append(node)
        return node

    def add_children(self, node: TreeNode, specs, bunch: bool) -> list[tuple[TreeNode, int]]:
        """Create child nodes from (computation, a, b, c, budget) specs.
        The first child keeps the node's owner; the rest take fresh labels.
        Returns (child, budget) pairs for further expansion."""
        node.bunch = bunch
        out = []
        for idx, (comp, a, b, c, budget) in enumerate(specs):
            if idx == 0:
                owner = node.task.owner
            else:
                owner = self.next_label
                self.next_label += 1
            task = Task(comp, a, b, c, parent=node.task.owner, owner=owner)
            child = self.add_node(task, node.id, node.depth + 1)
            node.children.append(child.id)
            out.append((child, budget))
        return out

    # -- expansion rules ----------------------------------------------------

    def expand(self, node: TreeNode, budget: int, rem: int):
        if budget == 1:
            return []
        if node.task.computation is ComputationType.ATA:
            if self.mode == "distributed":
                return self._expand_ata_dist(node, budget, rem)
            return self._expand_ata_shared(node, budget, rem)
        if self.mode == "distributed":
            return self._expand_atb_dist(node, budget, rem)
        return self._expand_atb_shared(node, budget, rem)

    def _quadrants(self, task: Task):
        a, c = task.a_region, task.c_region
        if a.rows < 2 or a.cols < 2:
            raise UnsplittableError(
                f"unsplittable: A^T A block {a.rows}x{a.cols} under budget")
        m1 = a.rows // 2
        n1 = a.cols // 2
        m2, n2 = a.rows - m1, a.cols - n1
        a11 = Region(a.row_offset, a.col_offset, m1, n1)
        a12 = Region(a.row_offset, a.col_offset + n1, m1, n2)
        a21 = Region(a.row_offset + m1, a.col_offset, m2, n1)
        a22 = Region(a.row_offset + m1, a.col_offset + n1, m2, n2)
        c11 = Region(c.row_offset, c.col_offset, n1, n1)
        c21 = Region(c.row_offset + n1, c.col_offset, n2, n1)
        c22 = Region(c.row_offset + n1, c.col_offset + n1, n2, n2)
        return a11, a12, a21, a22, c11, c21, c22

    def _expand_ata_dist(self, node: TreeNode, budget: int, rem: int):
        complete = budget == 6 if rem <= 1 else budget >= 6
        if not complete:
            return self._tile_ata_horizontal(node, budget)
        a11, a12, a21, a22, c11, c21, c22 = self._quadrants(node.task)
        atb_total = min((budget + 1) // 2, budget - 4)
        atb_budgets = _split_even(atb_total, 2)
        ata_budgets = _split_even(budget - atb_total, 4)
        ATA, ATB = ComputationType.ATA, ComputationType.ATB
        specs = [
            (ATA, a11, None, c11, ata_budgets[0]),
            (ATA, a21, None, c11, ata_budgets[1]),
            (ATA, a12, None, c22, ata_budgets[2]),
            (ATA, a22, None, c22, ata_budgets[3]),
            (ATB, a12, a11, c21, atb_budgets[0]),
            (ATB, a22, a21, c21, atb_budgets[1]),
        ]
        return [(child, b, rem - 1) for child, b in
                self.add_children(node, specs, bunch=True)]

    def _tile_ata_horizontal(self, node: TreeNode, budget: int):
        """Cut the operand into row blocks; every tile contributes a full
        lower-triangle partial that the parent sums."""
        a, c = node.task.a_region, node.task.c_region
        specs = []
        for start, height in _split_extent(a.rows, budget):
            tile = Region(a.row_offset + start, a.col_offset, height, a.cols)
            specs.append((ComputationType.ATA, tile, None, c, 1))
        self.add_children(node, specs, bunch=False)
        return []

    def _expand_atb_dist(self, node: TreeNode, budget: int, rem: int):
        complete = budget == 8 if rem <= 1 else budget >= 8
        if not complete:
            return self._tile_atb_grid(node, budget)
        task = node.task
        a, b, c = task.a_region, task.b_region, task.c_region
        if a.rows < 2 or a.cols < 2 or b.cols < 2:
            raise UnsplittableError(
                f"unsplittable: A^T B block {a.rows}x{a.cols} under budget")
        m1 = a.rows // 2
        n1, k1 = a.cols // 2, b.cols // 2
        m2, n2, k2 = a.rows - m1, a.cols - n1, b.cols - k1
        arow = [(a.row_offset, m1), (a.row_offset + m1, m2)]
        acol = [(a.col_offset, n1), (a.col_offset + n1, n2)]
        bcol = [(b.col_offset, k1), (b.col_offset + k1, k2)]
        crow = [(c.row_offset, n1), (c.row_offset + n1, n2)]
        ccol = [(c.col_offset, k1), (c.col_offset + k1, k2)]
        budgets = _split_even(budget, 8)
        specs = []
        idx = 0
        for i in (0, 1):            # output row block (column block of A)
            for j in (0, 1):        # output column block (column block of B)
                for l in (0, 1):    # contraction block (row block of A and B)
                    ar = Region(arow[l][0], acol[i][0], arow[l][1], acol[i][1])
                    br = Region(arow[l][0], bcol[j][0], arow[l][1], bcol[j][1])
                    cr = Region(crow[i][0], ccol[j][0], crow[i][1], ccol[j][1])
                    specs.append((ComputationType.ATB, ar, br, cr, budgets[idx]))
                    idx += 1
        return [(child, bud, rem - 1) for child, bud in
                self.add_children(node, specs, bunch=True)]

    def _tile_atb_grid(self, node: TreeNode, budget: int):
        """Tile both operands into column blocks, one disjoint output block
        per process."""
        task = node.task
        a, b, c = task.a_region, task.b_region, task.c_region
        u, v = _grid_shape(budget)
        aspans = _split_extent(a.cols, u)
        bspans = _split_extent(b.cols, v)
        specs = []
        for (aoff, awid) in aspans:
            for (boff, bwid) in bspans:
                ar = Region(a.row_offset, a.col_offset + aoff, a.rows, awid)
                br = Region(b.row_offset, b.col_offset + boff, b.rows, bwid)
                cr = Region(c.row_offset + aoff, c.col_offset + boff, awid, bwid)
                specs.append((ComputationType.ATB, ar, br, cr, 1))
        self.add_children(node, specs, bunch=False)
        return []

    def _expand_ata_shared(self, node: TreeNode, budget: int, rem: int):
        complete = budget == 3 if rem <= 1 else budget >= 3
        if not complete:
            return self._tile_ata_stripes(node, budget)
        a, c = node.task.a_region, node.task.c_region
        if a.cols < 2:
            raise UnsplittableError(
                f"unsplittable: A^T A block {a.rows}x{a.cols} under budget")
        n1 = a.cols // 2
        n2 = a.cols - n1
        left = Region(a.row_offset, a.col_offset, a.rows, n1)
        right = Region(a.row_offset, a.col_offset + n1, a.rows, n2)
        c11 = Region(c.row_offset, c.col_offset, n1, n1)
        c21 = Region(c.row_offset + n1, c.col_offset, n2, n1)
        c22 = Region(c.row_offset + n1, c.col_offset + n1, n2, n2)
        atb_total = min((budget + 1) // 2, budget - 2)
        ata_budgets = _split_even(budget - atb_total, 2)
        ATA, ATB = ComputationType.ATA, ComputationType.ATB
        specs = [
            (ATA, left, None, c11, ata_budgets[0]),
            (ATA, right, None, c22, ata_budgets[1]),
            (ATB, right, left, c21, atb_total),
        ]
        return [(child, b, rem - 1) for child, b in
                self.add_children(node, specs, bunch=True)]

    def _tile_ata_stripes(self, node: TreeNode, budget: int):
        """Cut the operand into column stripes.  Stripe i owns the result
        rows of its own columns: the block left of the diagonal plus the
        diagonal block's lower triangle, so stripes never overlap."""
        a, c = node.task.a_region, node.task.c_region
        bounds = _stripe_bounds(a.cols, budget)
        specs = []
        start = 0
        for end in bounds:
            prefix = Region(a.row_offset, a.col_offset, a.rows, end)
            cr = Region(c.row_offset + start, c.col_offset, end - start, end)
            specs.append((ComputationType.ATA, prefix, None, cr, 1))
            start = end
        self.add_children(node, specs, bunch=False)
        return []

    def _expand_atb_shared(self, node: TreeNode, budget: int, rem: int):
        complete = budget == 4 if rem <= 1 else budget >= 4
        if not complete:
            return self._tile_atb_grid(node, budget)
        task = node.task
        a, b, c = task.a_region, task.b_region, task.c_region
        if a.cols < 2 or b.cols < 2:
            raise UnsplittableError(
                f"unsplittable: A^T B block under budget {budget}")
        n1, k1 = a.cols // 2, b.cols // 2
        n2, k2 = a.cols - n1, b.cols - k1
        acol = [(a.col_offset, n1), (a.col_offset + n1, n2)]
        bcol = [(b.col_offset, k1), (b.col_offset + k1, k2)]
        crow = [(c.row_offset, n1), (c.row_offset + n1, n2)]
        ccol = [(c.col_offset, k1), (c.col_offset + k1, k2)]
        budgets = _split_even(budget, 4)
        specs = []
        idx = 0
        for i in (0, 1):
            for j in (0, 1):
                ar = Region(a.row_offset, acol[i][0], a.rows, acol[i][1])
                br = Region(b.row_offset, bcol[j][0], b.rows, bcol[j][1])
                cr = Region(crow[i][0], ccol[j][0], crow[i][1], ccol[j][1])
                specs.append((ComputationType.ATB, ar, br, cr, budgets[idx]))
                idx += 1
        return [(child, bud, rem - 1) for child, bud in
                self.add_children(node, specs, bunch=True)]


def _build(mode: str, procs: int, m: int, n: int) -> TaskTree:
    if procs < 1 or m < 1 or n < 1:
        raise ValueError("procs, m and n must all be >= 1")
    levels = levels_distributed(procs) if mode == "distributed" else levels_shared(procs)
    builder = _Builder(mode, procs, m, n)
    root_task = Task(ComputationType.ATA, Region(0, 0, m, n), None,
                     Region(0, 0, n, n), parent=0, owner=0)
    root = builder.add_node(root_task, None, 0)
    queue = [(root, procs, levels)]
    while queue:
        node, budget, rem = queue.pop(0)
        queue.extend(builder.expand(node, budget, rem))
    leaves = [node for node in builder.nodes if not node.children]
    if len(leaves) != procs:
        raise AssertionError(
            f"tree built {len(leaves)} leaves for {procs} processes")
    leaf_ids = [-1] * procs
    for node in leaves:
        leaf_ids[node.task.owner] = node.id
    if any(i < 0 for i in leaf_ids):
        raise AssertionError("leaf labels are not a bijection")
    return TaskTree(mode, procs, m, n, builder.nodes, leaf_ids)


def build_tree_distributed(procs: int, m: int, n: int) -> TaskTree:
    """Task tree for the distribute-compute-retrieve executor."""
    return _build("distributed", procs, m, n)


def build_tree_shared(procs: int, m: int, n: int) -> TaskTree:
    """Task tree for the worker-thread executor; leaf output regions are
    pairwise disjoint."""
    return _build("shared", procs, m, n)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


def leaf_task(tree: TaskTree, p: int) -> Task:
    """The unique leaf task owned by process p."""
    if not 0 <= p < tree.procs:
        raise UnknownProcessError(f"unknown process {p}")
    return tree.nodes[tree.leaf_ids[p]].task


def path_to_root(tree: TaskTree, p: int) -> list[TreeNode]:
    """The chain of nodes owned by process p, ordered leaf to topmost.

    Inner nodes are owned by the lowest-labelled leaf of their subtree, so
    the owned nodes of any process form one contiguous upward chain; for
    process 0 the chain ends at the root.
    """
    if not 0 <= p < tree.procs:
        raise UnknownProcessError(f"unknown process {p}")
    chain = []
    node = tree.nodes[tree.leaf_ids[p]]
    while node is not None and node.task.owner == p:
        chain.append(node)
        node = tree.nodes[node.parent_id] if node.parent_id is not None else None
    return chain


def covered_mask(task: Task, n: int) -> np.ndarray:
    """Boolean n x n mask of the result cells a leaf task writes.  A^T A
    tasks write only the at-or-below-diagonal cells of their region."""
    mask = np.zeros((n, n), dtype=bool)
    c = task.c_region
    mask[c.row_offset:c.row_offset + c.rows,
         c.col_offset:c.col_offset + c.cols] = True
    if task.computation is ComputationType.ATA:
        mask &= np.tril(np.ones((n, n), dtype=bool))
    return mask


def render_tree(tree: TaskTree) -> str:
    """Indented one-node-per-line rendering used by the debug CLI."""
    lines = [f"{tree.mode} tree: P={tree.procs} A={tree.m}x{tree.n} "
             f"levels={tree.depth}"]

    def visit(node: TreeNode, indent: int):
        task = node.task
        kind = task.computation.value
        parts = [f"{'  ' * indent}p{task.owner} {kind} A{task.a_region}"]
        if task.b_region is not None:
            parts.append(f"B{task.b_region}")
        parts.append(f"-> C{task.c_region}")
        if node.children:
            parts.append(f"({'bunch' if node.bunch else 'tiles'})")
        lines.append(" ".join(parts))
        for child in tree.children_of(node):
            visit(child, indent + 1)

    visit(tree.root, 0)
    return "\n".join(lines)
