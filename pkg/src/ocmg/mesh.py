"""Nested uniform triangulations of the unit square with P1/P2 dof maps.

Level k carries mesh size h = 2^-k: a (2^k+1) x (2^k+1) vertex grid with
every cell split along the lower-left-to-upper-right diagonal.  Regular
(red) refinement of this pattern reproduces the same pattern one level
finer, so consecutive levels are exactly nested and the transfer operators
are plain embeddings.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_LEVEL = 9


@dataclass
class MeshLevel:
    """One triangulation level.

    ``edges`` holds vertex pairs sorted within each pair and ordered
    lexicographically; ``triangle_edges[t, m]`` is the edge between local
    vertices m and (m+1) % 3 of triangle t.
    """

    level: int
    vertices: np.ndarray        # (nv, 2) float
    triangles: np.ndarray       # (nt, 3) int, counterclockwise
    edges: np.ndarray           # (ne, 2) int, sorted pairs
    triangle_edges: np.ndarray  # (nt, 3) int
    boundary_vertex: np.ndarray  # (nv,) bool
    boundary_edge: np.ndarray    # (ne,) bool

    @property
    def h(self):
        return 2.0 ** (-self.level)

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_midpoints(self):
        return 0.5 * (self.vertices[self.edges[:, 0]]
                      + self.vertices[self.edges[:, 1]])

    def vertex_edge_adjacency(self):
        """For each vertex, indices of incident edges (offsets, flat list)."""
        ne = self.n_edges
        both = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        eidx = np.tile(np.arange(ne), 2)
        order = np.argsort(both, kind="stable")
        counts = np.bincount(both, minlength=self.n_vertices)
        offsets = np.concatenate([[0], np.cumsum(counts)])
        return offsets, eidx[order]

    def dump_text(self, path):
        """Plain-text vertex/triangle dump for external visualization."""
        with open(path, "w") as fh:
            fh.write(f"{self.n_vertices} vertices\n")
            for x, y in self.vertices:
                fh.write(f"{x:.17g} {y:.17g}\n")
            fh.write(f"{self.n_triangles} triangles\n")
            for a, b, c in self.triangles:
                fh.write(f"{a} {b} {c}\n")


@dataclass
class MeshHierarchy:
    """Nested levels from coarsest to finest plus fine-to-coarse parent maps.

    For each fine level (index >= 1 in ``levels``) the parent arrays map a
    fine vertex either to the coarse vertex with the same coordinates or to
    the coarse edge whose midpoint it is; exactly one of the two is != -1.
    """

    levels: list[MeshLevel]
    vertex_parent_vertex: list[np.ndarray] = field(default_factory=list)
    vertex_parent_edge: list[np.ndarray] = field(default_factory=list)

    @property
    def k_min(self):
        return self.levels[0].level

    @property
    def k_max(self):
        return self.levels[-1].level

    def level(self, k):
        return self.levels[k - self.k_min]


@dataclass
class DofMap:
    """Scalar-field degree-of-freedom numbering on one mesh level.

    P1 dofs are the vertices.  P2 dofs are the vertices followed by the
    edge midpoints (dof = vertex index, or n_vertices + edge index).
    ``dirichlet_dofs`` is empty unless the field carries essential boundary
    conditions.
    """

    kind: str                 # "p1" | "p2"
    ndofs: int
    dirichlet_dofs: np.ndarray

    def interior_dofs(self):
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.where(mask)[0]

    def interior_index(self):
        """Map dof -> position among interior dofs (-1 for Dirichlet)."""
        idx = np.full(self.ndofs, -1, dtype=np.int64)
        interior = self.interior_dofs()
        idx[interior] = np.arange(interior.size)
        return idx


def _encode_pairs(pairs, n):
    return pairs[:, 0].astype(np.int64) * n + pairs[:, 1]


def build_mesh_level(k):
    """Structured triangulation of the unit square at level k."""
    if not 0 <= k <= MAX_LEVEL:
        raise ValueError(f"level must be in [0, {MAX_LEVEL}], got {k}")
    m = 2 ** k
    nv1 = m + 1
    xs = np.linspace(0.0, 1.0, nv1)
    gx, gy = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([gx.ravel(), gy.ravel()])  # x fastest

    ix, iy = np.meshgrid(np.arange(m), np.arange(m), indexing="xy")
    v00 = (iy * nv1 + ix).ravel()
    v10 = v00 + 1
    v01 = v00 + nv1
    v11 = v01 + 1
    # lower-right triangle first, then upper-left; both counterclockwise
    tris = np.empty((2 * m * m, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([v00, v10, v11])
    tris[1::2] = np.column_stack([v00, v11, v01])

    # unique sorted edges, lexicographic order
    raw = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    raw.sort(axis=1)
    codes = _encode_pairs(raw, vertices.shape[0])
    uniq, inv, counts = np.unique(codes, return_inverse=True,
                                  return_counts=True)
    edges = np.column_stack([uniq // vertices.shape[0],
                             uniq % vertices.shape[0]])
    nt = tris.shape[0]
    triangle_edges = np.empty((nt, 3), dtype=np.int64)
    triangle_edges[:, 0] = inv[:nt]
    triangle_edges[:, 1] = inv[nt:2 * nt]
    triangle_edges[:, 2] = inv[2 * nt:]

    boundary_edge = counts == 1
    boundary_vertex = np.zeros(vertices.shape[0], dtype=bool)
    boundary_vertex[edges[boundary_edge].ravel()] = True

    return MeshLevel(level=k, vertices=vertices, triangles=tris, edges=edges,
                     triangle_edges=triangle_edges,
                     boundary_vertex=boundary_vertex,
                     boundary_edge=boundary_edge)


def vertex_parents(coarse, fine):
    """Classify fine vertices as coarse vertices or coarse edge midpoints.

    Returns (parent_vertex, parent_edge), each of length fine.n_vertices
    with -1 where the other classification applies.  Raises if ``fine`` is
    not the regular refinement of ``coarse``.
    """
    if fine.level != coarse.level + 1:
        raise ValueError("meshes are not consecutive refinement levels")
    mc = 2 ** coarse.level
    nv1c = mc + 1
    nv1f = 2 * mc + 1
    fi = np.arange(fine.n_vertices)
    fx = fi % nv1f
    fy = fi // nv1f

    parent_vertex = np.full(fine.n_vertices, -1, dtype=np.int64)
    parent_edge = np.full(fine.n_vertices, -1, dtype=np.int64)

    even = (fx % 2 == 0) & (fy % 2 == 0)
    parent_vertex[even] = (fy[even] // 2) * nv1c + fx[even] // 2

    # midpoints: horizontal (odd x), vertical (odd y), diagonal (both odd)
    edge_codes = _encode_pairs(coarse.edges, coarse.n_vertices)

    def edge_of(a, b):
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        code = lo * coarse.n_vertices + hi
        pos = np.searchsorted(edge_codes, code)
        if np.any(edge_codes[pos] != code):
            raise ValueError("fine vertex is not a coarse edge midpoint; "
                             "meshes are not parent/child")
        return pos

    hmask = (fx % 2 == 1) & (fy % 2 == 0)
    if hmask.any():
        a = (fy[hmask] // 2) * nv1c + (fx[hmask] - 1) // 2
        parent_edge[hmask] = edge_of(a, a + 1)
    vmask = (fx % 2 == 0) & (fy % 2 == 1)
    if vmask.any():
        a = ((fy[vmask] - 1) // 2) * nv1c + fx[vmask] // 2
        parent_edge[vmask] = edge_of(a, a + nv1c)
    dmask = (fx % 2 == 1) & (fy % 2 == 1)
    if dmask.any():
        a = ((fy[dmask] - 1) // 2) * nv1c + (fx[dmask] - 1) // 2
        parent_edge[dmask] = edge_of(a, a + nv1c + 1)

    return parent_vertex, parent_edge


def build_hierarchy(k_min, k_max):
    """Nested mesh levels k_min..k_max with fine-to-coarse parent maps."""
    if not (0 <= k_min < k_max <= MAX_LEVEL):
        raise ValueError(f"need 0 <= k_min < k_max <= {MAX_LEVEL}, got "
                         f"({k_min}, {k_max})")
    levels = [build_mesh_level(k) for k in range(k_min, k_max + 1)]
    pv, pe = [], []
    for coarse, fine in zip(levels[:-1], levels[1:]):
        a, b = vertex_parents(coarse, fine)
        pv.append(a)
        pe.append(b)
    return MeshHierarchy(levels=levels, vertex_parent_vertex=pv,
                         vertex_parent_edge=pe)


def locate_triangle(mesh, points):
    """Triangle index containing each point of the structured mesh.

    Points on a cell diagonal resolve to the lower-right triangle; the
    P1/P2 basis values there agree from both sides.
    """
    m = 2 ** mesh.level
    h = mesh.h
    pts = np.atleast_2d(points)
    cx = np.clip((pts[:, 0] // h).astype(np.int64), 0, m - 1)
    cy = np.clip((pts[:, 1] // h).astype(np.int64), 0, m - 1)
    dx = pts[:, 0] - cx * h
    dy = pts[:, 1] - cy * h
    upper = dy > dx
    return 2 * (cy * m + cx) + upper.astype(np.int64)


def p1_dofs(mesh, dirichlet=False):
    """P1 dof map; Dirichlet set = boundary vertices when requested."""
    dir_dofs = (np.where(mesh.boundary_vertex)[0] if dirichlet
                else np.empty(0, dtype=np.int64))
    return DofMap(kind="p1", ndofs=mesh.n_vertices, dirichlet_dofs=dir_dofs)


def p2_dofs(mesh):
    """P2 dof map: vertices then edge midpoints, boundary dofs Dirichlet."""
    nv = mesh.n_vertices
    dir_dofs = np.concatenate([
        np.where(mesh.boundary_vertex)[0],
        nv + np.where(mesh.boundary_edge)[0],
    ])
    return DofMap(kind="p2", ndofs=nv + mesh.n_edges,
                  dirichlet_dofs=dir_dofs)


def p2_dof_points(mesh):
    """Coordinates of all P2 dofs (vertices then edge midpoints)."""
    return np.vstack([mesh.vertices, mesh.edge_midpoints()])
