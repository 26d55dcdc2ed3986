"""
Path-space partitions
Uniform grids, refining quadtrees and the screen-grid x direction-partition
composite that map a path's canonical coordinates to a region id
"""

import threading
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np

from render_config import MAX_QUADTREE_DEPTH
from sampling_core import CanonicalPoint2, cylindrical_coords, raster_position

Bounds = Tuple[float, float, float, float]


def grid_cell(point: CanonicalPoint2, n: int) -> int:
    """Row-major cell of an n x n grid; coordinate 1.0 falls in the last cell"""
    column = min(int(point.u * n), n - 1)
    row = min(int(point.v * n), n - 1)
    return row * n + column


class Grid2D:
    """N x N uniform grid over [0,1]^2; region states are created on first use"""

    def __init__(self, n: int, make_state: Callable):
        if n < 1:
            raise ValueError("grid size must be >= 1")
        self.n = n
        self._make_state = make_state
        self._states: Dict[int, object] = {}
        self._visits = np.zeros(n * n, dtype=np.int64)
        self._lock = threading.Lock()
        self.epoch = 0

    @property
    def leaf_count(self) -> int:
        return self.n * self.n

    def locate(self, point: CanonicalPoint2) -> int:
        return grid_cell(point, self.n)

    def state(self, region_id: int):
        state = self._states.get(region_id)
        if state is None:
            if not 0 <= region_id < self.leaf_count:
                raise KeyError(f"no grid cell {region_id}")
            with self._lock:
                state = self._states.setdefault(region_id, self._make_state())
        return state

    def record_visit(self, region_id: int):
        with self._lock:
            self._visits[region_id] += 1

    def visits(self, region_id: int) -> int:
        return int(self._visits[region_id])

    def refine(self, m_split: int) -> int:
        self.epoch += 1
        return 0

    def bounds(self, region_id: int) -> Bounds:
        row, column = divmod(region_id, self.n)
        return column / self.n, row / self.n, (column + 1) / self.n, (row + 1) / self.n

    def leaves(self) -> Iterator[Tuple[int, Bounds]]:
        for region_id in range(self.leaf_count):
            yield region_id, self.bounds(region_id)

    def all_states(self) -> List[object]:
        return list(self._states.values())


@dataclass(eq=False)
class QuadNode:
    bounds: Bounds
    depth: int
    state: object
    children: Optional[Tuple[int, int, int, int]] = None
    visits: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.children is None


class Quadtree:
    """Quadtree over [0,1]^2 whose leaves are regions; node index is the region id"""

    def __init__(self, make_state: Callable, max_depth: int = MAX_QUADTREE_DEPTH):
        self.max_depth = max_depth
        self.nodes: List[QuadNode] = [QuadNode((0.0, 0.0, 1.0, 1.0), 0, make_state())]
        self._lock = threading.Lock()
        self._refining = False
        self.epoch = 0

    @property
    def leaf_count(self) -> int:
        return sum(1 for node in self.nodes if node.is_leaf)

    def locate(self, point: CanonicalPoint2) -> int:
        assert not self._refining, "quadtree read during refinement"
        node_id = 0
        node = self.nodes[0]
        while node.children is not None:
            u0, v0, u1, v1 = node.bounds
            quadrant = (2 if point.v >= 0.5 * (v0 + v1) else 0) + (1 if point.u >= 0.5 * (u0 + u1) else 0)
            node_id = node.children[quadrant]
            node = self.nodes[node_id]
        return node_id

    def state(self, region_id: int):
        return self.nodes[region_id].state

    def record_visit(self, region_id: int):
        assert not self._refining, "quadtree visit recorded during refinement"
        with self._lock:
            self.nodes[region_id].visits += 1

    def visits(self, region_id: int) -> int:
        return self.nodes[region_id].visits

    def _split(self, node_id: int):
        node = self.nodes[node_id]
        u0, v0, u1, v1 = node.bounds
        um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
        quadrants = ((u0, v0, um, vm), (um, v0, u1, vm), (u0, vm, um, v1), (um, vm, u1, v1))
        first = len(self.nodes)
        for bounds in quadrants:
            self.nodes.append(QuadNode(bounds, node.depth + 1, node.state.split_child()))
        node.children = (first, first + 1, first + 2, first + 3)
        node.visits = 0

    def refine(self, m_split: int) -> int:
        """Split every current leaf visited at least m_split times; children are not re-examined"""
        self._refining = True
        try:
            leaves = [i for i, node in enumerate(self.nodes) if node.is_leaf]
            splits = 0
            for node_id in leaves:
                node = self.nodes[node_id]
                if node.visits >= m_split and node.depth < self.max_depth:
                    self._split(node_id)
                    splits += 1
            self.epoch += 1
            return splits
        finally:
            self._refining = False

    def bounds(self, region_id: int) -> Bounds:
        return self.nodes[region_id].bounds

    def leaves(self) -> Iterator[Tuple[int, Bounds]]:
        for node_id, node in enumerate(self.nodes):
            if node.is_leaf:
                yield node_id, node.bounds

    def all_states(self) -> List[object]:
        """Every region state ever created, including those of split parents"""
        return [node.state for node in self.nodes]


class CompositePartition4D:
    """Screen-space grid whose cells each hold a partition of the direction square"""

    def __init__(self, n_top: int, make_bottom: Callable[[], object]):
        if n_top < 1:
            raise ValueError("grid size must be >= 1")
        self.n_top = n_top
        self._make_bottom = make_bottom
        self._bottoms: Dict[int, object] = {}
        self._empty_leaf_count = make_bottom().leaf_count
        self._lock = threading.Lock()
        self.epoch = 0

    def bottom(self, cell: int):
        bottom = self._bottoms.get(cell)
        if bottom is None:
            if not 0 <= cell < self.n_top * self.n_top:
                raise KeyError(f"no grid cell {cell}")
            with self._lock:
                bottom = self._bottoms.setdefault(cell, self._make_bottom())
        return bottom

    @property
    def leaf_count(self) -> int:
        untouched = self.n_top * self.n_top - len(self._bottoms)
        return sum(b.leaf_count for b in self._bottoms.values()) + untouched * self._empty_leaf_count

    def locate(self, screen: CanonicalPoint2, direction: CanonicalPoint2) -> Tuple[int, int]:
        cell = grid_cell(screen, self.n_top)
        return cell, self.bottom(cell).locate(direction)

    def state(self, region_id: Tuple[int, int]):
        cell, leaf = region_id
        return self.bottom(cell).state(leaf)

    def record_visit(self, region_id: Tuple[int, int]):
        cell, leaf = region_id
        self.bottom(cell).record_visit(leaf)

    def visits(self, region_id: Tuple[int, int]) -> int:
        cell, leaf = region_id
        return self.bottom(cell).visits(leaf)

    def refine(self, m_split: int) -> int:
        splits = sum(bottom.refine(m_split) for bottom in list(self._bottoms.values()))
        self.epoch += 1
        return splits

    def bounds(self, region_id: Tuple[int, int]) -> Bounds:
        cell, leaf = region_id
        return self.bottom(cell).bounds(leaf)

    def leaves(self) -> Iterator[Tuple[Tuple[int, int], Bounds]]:
        for cell in sorted(self._bottoms):
            for leaf, bounds in self._bottoms[cell].leaves():
                yield (cell, leaf), bounds

    def all_states(self) -> List[object]:
        states = []
        for cell in sorted(self._bottoms):
            states.extend(self._bottoms[cell].all_states())
        return states


def secondary_vertex_index(path) -> int:
    """1-based index of the first non-specular vertex after the camera"""
    index = 2
    while index < path.k and path.vertex(index).is_specular:
        index += 1
    return index


def classify_lens(path, partition, camera) -> Optional[int]:
    """Region of rp(omega_{x1->x2}); None when off-screen"""
    point = raster_position(path.direction(1), camera)
    if point is None:
        return None
    return partition.locate(point)


def classify_multichain(path, partition: CompositePartition4D, camera) -> Optional[Tuple[int, int]]:
    """(screen cell, direction leaf) of rp(omega_{x1->x2}) and cy(omega_{xc->xc+1})"""
    point = raster_position(path.direction(1), camera)
    if point is None:
        return None
    c = secondary_vertex_index(path)
    if c >= path.k:
        return None
    return partition.locate(point, cylindrical_coords(path.direction(c)))


def format_region_id(region_id) -> str:
    if isinstance(region_id, tuple):
        return '/'.join(str(part) for part in region_id)
    return str(region_id)


def dump_lines(partition) -> List[str]:
    """`leaf <id> <u0> <v0> <u1> <v1> <lambda> <n_k> <visits>` per leaf with a region state"""
    lines = []
    for region_id, (u0, v0, u1, v1) in partition.leaves():
        state = partition.state(region_id)
        lines.append(f"leaf {format_region_id(region_id)} {u0:.10g} {v0:.10g} {u1:.10g} {v1:.10g} "
                     f"{state.lam:.10g} {state.updates} {partition.visits(region_id)}")
    return lines
