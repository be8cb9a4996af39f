"""Structured triangulations of a rectangular hold-all domain."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

_ALIGN_RTOL = 1e-12


class BoundaryLabel(enum.IntEnum):
    SigmaD = 0
    GammaN = 1
    Sigma = 2


SIDES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)


@dataclass(frozen=True)
class BoundarySegment:
    """A labelled interval ``(a, b)`` of one side of the rectangle.

    ``side`` is one of ``left``, ``right``, ``bottom``, ``top``; the interval
    is measured along y for the vertical sides and along x otherwise.
    """

    label: BoundaryLabel
    interval: tuple[float, float]
    side: str

    def __post_init__(self):
        if self.side not in SIDES:
            raise ValueError(f"unknown side {self.side!r}")
        if not self.interval[0] < self.interval[1]:
            raise ValueError(f"empty interval {self.interval}")


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangle mesh with P2 node numbering.

    P2 nodes are the vertices followed by one midpoint per edge, so the P2
    index of edge ``k`` is ``n_vertices + k``. Local P2 ordering on a
    triangle is (v0, v1, v2, m01, m12, m20).
    """

    rect: Rect
    resolution: tuple[int, int]
    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3), counterclockwise
    edges: np.ndarray  # (ne, 2), sorted vertex pairs
    edge_labels: np.ndarray  # (ne,), BoundaryLabel value or -1 for interior
    triangle_edges: np.ndarray  # (nt, 3), edges (v0v1, v1v2, v2v0)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_p2(self) -> int:
        return self.n_vertices + self.n_edges

    @property
    def p2_triangles(self) -> np.ndarray:
        """(nt, 6) P2 node indices in local order."""
        if "p2_triangles" not in self._cache:
            self._cache["p2_triangles"] = np.hstack(
                [self.triangles, self.triangle_edges + self.n_vertices])
        return self._cache["p2_triangles"]

    @property
    def p2_nodes(self) -> np.ndarray:
        if "p2_nodes" not in self._cache:
            mids = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
            self._cache["p2_nodes"] = np.vstack([self.vertices, mids])
        return self._cache["p2_nodes"]

    @property
    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.vertices[self.triangles]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def boundary_edge_ids(self, label: BoundaryLabel) -> np.ndarray:
        return np.flatnonzero(self.edge_labels == int(label))

    def p2_nodes_on(self, label: BoundaryLabel) -> np.ndarray:
        """Sorted P2 nodes (vertices and midpoints) of edges carrying ``label``."""
        ids = self.boundary_edge_ids(label)
        return np.unique(np.concatenate([self.edges[ids].ravel(), ids + self.n_vertices]))

    def vertices_on(self, label: BoundaryLabel) -> np.ndarray:
        return np.unique(self.edges[self.boundary_edge_ids(label)].ravel())


def _grid_index(value: float, lo: float, hi: float, n: int, seg: BoundarySegment) -> int:
    t = (value - lo) / (hi - lo) * n
    k = int(round(t))
    if abs(t - k) > _ALIGN_RTOL * max(1.0, n):
        raise ValueError(
            f"boundary interval {seg.interval} on side {seg.side!r} ({seg.label.name}) "
            f"is not aligned with the {n}-cell grid")
    return k


def build_mesh(rect: Rect, n_x: int, n_y: int,
               boundary_spec: list[BoundarySegment] | tuple = ()) -> Mesh:
    """Triangulate ``rect`` with ``n_x * n_y`` cells split along alternating diagonals.

    Boundary edges not covered by ``boundary_spec`` get ``Sigma``. Later
    segments override earlier ones where they overlap.
    """
    if n_x < 1 or n_y < 1:
        raise ValueError(f"need n_x, n_y >= 1, got ({n_x}, {n_y})")
    xs = np.linspace(rect.x_min, rect.x_max, n_x + 1)
    ys = np.linspace(rect.y_min, rect.y_max, n_y + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n_x + 1) + i

    i, j = np.meshgrid(np.arange(n_x), np.arange(n_y), indexing="xy")
    i, j = i.ravel(), j.ravel()
    a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
    even = (i + j) % 2 == 0
    # even cells use the a-c diagonal, odd cells the b-d diagonal
    t1 = np.where(even[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    t2 = np.where(even[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    triangles = np.empty((2 * len(a), 3), dtype=np.int64)
    triangles[0::2] = t1
    triangles[1::2] = t2

    local = triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 3, 2)
    pairs = np.sort(local, axis=2).reshape(-1, 2)
    edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
    triangle_edges = inverse.reshape(-1, 3)

    counts = np.bincount(inverse.ravel(), minlength=len(edges))
    labels = np.full(len(edges), -1, dtype=np.int64)
    on_boundary = counts == 1
    labels[on_boundary] = int(BoundaryLabel.Sigma)

    # side and position of boundary edges, in grid units
    e0, e1 = vertices[edges[:, 0]], vertices[edges[:, 1]]
    mid = 0.5 * (e0 + e1)
    for seg in boundary_spec:
        if seg.side in ("left", "right"):
            k0 = _grid_index(seg.interval[0], rect.y_min, rect.y_max, n_y, seg)
            k1 = _grid_index(seg.interval[1], rect.y_min, rect.y_max, n_y, seg)
            x_side = rect.x_min if seg.side == "left" else rect.x_max
            along = (mid[:, 1] - rect.y_min) / (rect.y_max - rect.y_min) * n_y
            on_side = np.isclose(e0[:, 0], x_side) & np.isclose(e1[:, 0], x_side)
        else:
            k0 = _grid_index(seg.interval[0], rect.x_min, rect.x_max, n_x, seg)
            k1 = _grid_index(seg.interval[1], rect.x_min, rect.x_max, n_x, seg)
            y_side = rect.y_min if seg.side == "bottom" else rect.y_max
            along = (mid[:, 0] - rect.x_min) / (rect.x_max - rect.x_min) * n_x
            on_side = np.isclose(e0[:, 1], y_side) & np.isclose(e1[:, 1], y_side)
        hit = on_boundary & on_side & (along > k0) & (along < k1)
        labels[hit] = int(seg.label)

    return Mesh(rect=rect, resolution=(n_x, n_y), vertices=vertices,
                triangles=triangles, edges=edges, edge_labels=labels,
                triangle_edges=triangle_edges)


def boundary_edges(mesh: Mesh, label: BoundaryLabel) -> tuple[np.ndarray, np.ndarray]:
    """Edges carrying ``label`` and their outward unit normals.

    Returns ``(edges, normals)`` with shapes (k, 2) and (k, 2).
    """
    ids = mesh.boundary_edge_ids(label)
    edges = mesh.edges[ids]
    if len(ids) == 0:
        return edges, np.zeros((0, 2))
    t = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    n = np.column_stack([t[:, 1], -t[:, 0]])
    n /= np.linalg.norm(n, axis=1)[:, None]
    centre = np.array([0.5 * (mesh.rect.x_min + mesh.rect.x_max),
                       0.5 * (mesh.rect.y_min + mesh.rect.y_max)])
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    flip = np.einsum("ij,ij->i", n, mid - centre) < 0
    n[flip] *= -1
    return edges, n
