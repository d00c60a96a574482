"""Remeshing operators used to build reparameterized test inputs.

These are deliberately simple, topology-preserving analogs of off-the-shelf
remeshers: flat 1-to-4 midpoint subdivision, shortest-edge collapse with
midpoint placement, and a split-axis combination of the two. They produce
meshes with the same geometry at different parameterizations, which is all
the robustness protocol needs.
"""

from __future__ import annotations

import heapq

import numpy as np

from .errors import UnreachableTargetError
from .mesh import TriMesh, degeneracy_threshold

__all__ = [
    "subdivide_midpoint",
    "decimate_edge_collapse",
    "remesh_variable",
    "remesh_updown",
    "remesh_iso",
]


def subdivide_midpoint(mesh: TriMesh) -> TriMesh:
    """Flat 1-to-4 split: each face is divided at its edge midpoints.

    Shared edges produce shared midpoint vertices; positions never move, so
    total area and the area-weighted normal sum are preserved exactly.
    """
    v = mesh.vertices
    f = mesh.faces
    midpoint_index: dict[tuple[int, int], int] = {}
    new_vertices = [v]

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        idx = midpoint_index.get(key)
        if idx is None:
            idx = len(v) + len(midpoint_index)
            midpoint_index[key] = idx
            new_vertices.append((v[a] + v[b]) / 2.0)
        return idx

    new_faces = np.empty((4 * len(f), 3), dtype=np.int64)
    for i, (a, b, c) in enumerate(f):
        ab = midpoint(a, b)
        bc = midpoint(b, c)
        ca = midpoint(c, a)
        new_faces[4 * i : 4 * i + 4] = [
            (a, ab, ca),
            (b, bc, ab),
            (c, ca, bc),
            (ab, bc, ca),
        ]
    stacked = np.vstack([new_vertices[0]] + [np.asarray(p)[None, :] for p in new_vertices[1:]])
    return TriMesh(stacked, new_faces)


def _triangle_normal(p, q, r):
    return np.cross(q - p, r - p)


def decimate_edge_collapse(mesh: TriMesh, target_faces: int) -> TriMesh:
    """Coarsen by repeatedly collapsing the shortest legal edge to its midpoint.

    Collapses that would pinch the surface (link condition), flip a normal
    among incident faces, or create a degenerate face are rejected. Raises
    :class:`UnreachableTargetError` when no legal collapse remains above
    ``target_faces``.
    """
    if target_faces < 4:
        raise ValueError("target_faces must be >= 4")
    if mesh.n_faces <= target_faces:
        return mesh

    verts = np.array(mesh.vertices)
    faces: list[list[int] | None] = [list(face) for face in mesh.faces]
    n_live = len(faces)
    vertex_faces: list[set[int]] = [set() for _ in range(len(verts))]
    for fi, face in enumerate(faces):
        for vi in face:
            vertex_faces[vi].add(fi)
    alive = np.ones(len(verts), dtype=bool)
    thr = degeneracy_threshold(mesh)

    def neighbors(u: int) -> set[int]:
        out: set[int] = set()
        for fi in vertex_faces[u]:
            out.update(faces[fi])
        out.discard(u)
        return out

    def edge_faces(u: int, w: int) -> list[int]:
        return [fi for fi in vertex_faces[u] & vertex_faces[w]]

    def boundary_vertex(u: int) -> bool:
        # A vertex is on the boundary iff some incident edge has one face.
        for w in neighbors(u):
            if len(edge_faces(u, w)) == 1:
                return True
        return False

    counter = 0
    heap: list[tuple[float, int, int, int]] = []

    def push_edge(u: int, w: int):
        nonlocal counter
        a, b = (u, w) if u < w else (w, u)
        length = float(np.linalg.norm(verts[a] - verts[b]))
        counter += 1
        heapq.heappush(heap, (length, counter, a, b))

    seen = set()
    for face in faces:
        for a, b in ((face[0], face[1]), (face[1], face[2]), (face[2], face[0])):
            key = (a, b) if a < b else (b, a)
            if key not in seen:
                seen.add(key)
                push_edge(a, b)
    del seen

    def try_collapse(u: int, w: int) -> bool:
        shared = edge_faces(u, w)
        if not shared or len(shared) > 2:
            return False
        # Link condition: common neighbors must be exactly the vertices
        # opposite the shared faces.
        opposite = set()
        for fi in shared:
            for vi in faces[fi]:
                if vi != u and vi != w:
                    opposite.add(vi)
        if neighbors(u) & neighbors(w) != opposite:
            return False
        # Keep the boundary pinned: interior edges may not merge two
        # boundary vertices.
        if len(shared) == 2 and boundary_vertex(u) and boundary_vertex(w):
            return False
        mid = (verts[u] + verts[w]) / 2.0
        affected = (vertex_faces[u] | vertex_faces[w]) - set(shared)
        for fi in affected:
            tri = faces[fi]
            old = [verts[i] for i in tri]
            new = [mid if i in (u, w) else verts[i] for i in tri]
            n_old = _triangle_normal(*old)
            n_new = _triangle_normal(*new)
            if np.linalg.norm(n_new) <= thr:
                return False
            if float(np.dot(n_old, n_new)) <= 0.0:
                return False
        return True

    def collapse(u: int, w: int):
        nonlocal n_live
        verts[u] = (verts[u] + verts[w]) / 2.0
        for fi in list(edge_faces(u, w)):
            for vi in faces[fi]:
                vertex_faces[vi].discard(fi)
            faces[fi] = None
            n_live -= 1
        for fi in list(vertex_faces[w]):
            face = faces[fi]
            faces[fi] = [u if vi == w else vi for vi in face]
            vertex_faces[w].discard(fi)
            vertex_faces[u].add(fi)
        alive[w] = False
        for nb in neighbors(u):
            push_edge(u, nb)

    while n_live > target_faces:
        if not heap:
            raise UnreachableTargetError(
                f"no legal collapse left at {n_live} faces (target {target_faces})"
            )
        length, _, a, b = heapq.heappop(heap)
        if not (alive[a] and alive[b]):
            continue
        current = float(np.linalg.norm(verts[a] - verts[b]))
        if abs(current - length) > 1e-12 * (1.0 + current):
            continue  # stale entry, a fresh one is in the heap
        if not edge_faces(a, b):
            continue
        if try_collapse(a, b):
            collapse(a, b)

    kept = sorted({vi for face in faces if face is not None for vi in face})
    remap = {old: new for new, old in enumerate(kept)}
    out_faces = np.array(
        [[remap[vi] for vi in face] for face in faces if face is not None], dtype=np.int64
    )
    return TriMesh(verts[kept], out_faces)


def _submesh(mesh: TriMesh, face_mask: np.ndarray) -> TriMesh:
    sub_faces = mesh.faces[face_mask]
    kept = np.unique(sub_faces)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    return TriMesh(mesh.vertices[kept], remap[sub_faces])


def _weld(vertices: np.ndarray, faces: np.ndarray) -> TriMesh:
    """Merge exactly-equal vertices (seam welding after a split remesh)."""
    unique, inverse = np.unique(vertices, axis=0, return_inverse=True)
    return TriMesh(unique, inverse[faces])


def remesh_variable(mesh: TriMesh, axis: str, split_value: float) -> TriMesh:
    """Coarsen faces above ``split_value`` along ``axis``, refine faces below.

    The upper part is decimated toward half its face count, the lower part is
    midpoint-subdivided, and the halves are merged by welding coincident
    vertices. The seam may contain T-junctions; the measures this feeds are
    insensitive to them.
    """
    ax = {"x": 0, "y": 1, "z": 2}[axis.lower()]
    p = mesh.vertices[mesh.faces[:, 0]]
    q = mesh.vertices[mesh.faces[:, 1]]
    r = mesh.vertices[mesh.faces[:, 2]]
    centers = (p + q + r) / 3.0
    above = centers[:, ax] > split_value

    parts: list[TriMesh] = []
    if above.any():
        top = _submesh(mesh, above)
        target = max(4, top.n_faces // 2)
        if top.n_faces > target:
            top = decimate_edge_collapse(top, target)
        parts.append(top)
    if (~above).any():
        parts.append(subdivide_midpoint(_submesh(mesh, ~above)))

    if len(parts) == 1:
        return parts[0]
    offset = parts[0].n_vertices
    vertices = np.vstack([parts[0].vertices, parts[1].vertices])
    faces = np.vstack([parts[0].faces, parts[1].faces + offset])
    return _weld(vertices, faces)


def remesh_updown(mesh: TriMesh) -> TriMesh:
    """Subdivide, then collapse down to about half the original face count."""
    return decimate_edge_collapse(subdivide_midpoint(mesh), max(4, mesh.n_faces // 2))


def remesh_iso(mesh: TriMesh) -> TriMesh:
    """Equalize triangle sizes: subdivide, then collapse back to the original count."""
    return decimate_edge_collapse(subdivide_midpoint(mesh), mesh.n_faces)
