"""Triangle mesh data model, per-face geometry and summary statistics.

Meshes are immutable value objects: vertex and face arrays are copied on
construction and marked read-only, so they are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFaceError, MeshFormatError

#: A face counts as degenerate when the norm of its unnormalized normal
#: (q-p)x(r-p) falls at or below this fraction of bbox_diagonal^2.
DEGENERACY_RELATIVE_THRESHOLD = 1e-12


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh: vertex positions plus face index triples.

    Parameters
    ----------
    vertices : (n, 3) float array
        Vertex positions in model units.
    faces : (m, 3) int array
        Indices into ``vertices``, counter-clockwise when viewed from outside.
    check : bool
        Verify structural invariants on construction (default). Disable only
        for internal fast paths that guarantee validity by construction.
    """

    vertices: np.ndarray
    faces: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=np.float64)
        f = np.ascontiguousarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise MeshFormatError(f"vertices must be (n, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise MeshFormatError(f"faces must be (m, 3), got {f.shape}")
        if self.check:
            if f.size and (f.min() < 0 or f.max() >= len(v)):
                raise MeshFormatError("face index out of range")
            if f.size and (
                np.any(f[:, 0] == f[:, 1])
                or np.any(f[:, 1] == f[:, 2])
                or np.any(f[:, 0] == f[:, 2])
            ):
                raise MeshFormatError("face with repeated vertex index")
            if v.size and not np.all(np.isfinite(v)):
                raise MeshFormatError("non-finite vertex coordinate")
        v.flags.writeable = False
        f.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def with_vertices(self, vertices: np.ndarray, check: bool = True) -> "TriMesh":
        """Same connectivity, new vertex positions."""
        return TriMesh(vertices, self.faces, check=check)

    def bbox_diagonal(self) -> float:
        if self.n_vertices == 0:
            return 0.0
        span = self.vertices.max(axis=0) - self.vertices.min(axis=0)
        return float(np.linalg.norm(span))


@dataclass(frozen=True)
class FaceGeometry:
    """Per-face center, unit normal and area, all aligned with the face list."""

    centers: np.ndarray
    normals: np.ndarray
    areas: np.ndarray


@dataclass(frozen=True)
class MeshStats:
    """Summary quantities controlling mesh quality and approximation error."""

    max_edge_length: float
    min_face_angle: float
    total_area: float
    mean_triangle_diameter: float
    bbox_diagonal: float
    n_vertices: int
    n_faces: int


@dataclass(frozen=True)
class MeshDefect:
    """One diagnostic finding from :func:`validate`."""

    kind: str
    index: int
    message: str


def unique_edges(faces: np.ndarray) -> np.ndarray:
    """Undirected unique edges (e, 2) with each row sorted ascending."""
    if len(faces) == 0:
        return np.empty((0, 2), dtype=np.int64)
    halfedges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    halfedges.sort(axis=1)
    return np.unique(halfedges, axis=0)


def degeneracy_threshold(mesh: TriMesh) -> float:
    """Absolute threshold on |(q-p)x(r-p)| below which a face is degenerate."""
    return DEGENERACY_RELATIVE_THRESHOLD * mesh.bbox_diagonal() ** 2


def _face_frames(mesh: TriMesh):
    """Centers, unnormalized normals w and their norms |w|, one row per face."""
    p = mesh.vertices[mesh.faces[:, 0]]
    q = mesh.vertices[mesh.faces[:, 1]]
    r = mesh.vertices[mesh.faces[:, 2]]
    centers = (p + q + r) / 3.0
    w = np.cross(q - p, r - p)
    wnorm = np.linalg.norm(w, axis=1)
    return centers, w, wnorm


def face_geometry(mesh: TriMesh) -> FaceGeometry:
    """Center, unit normal and area for every face.

    For a face (p, q, r): center = (p+q+r)/3, w = (q-p)x(r-p),
    area = |w|/2 and normal = w/|w|.

    Raises
    ------
    DegenerateFaceError
        If any face falls at or below the degeneracy threshold.
    """
    centers, w, wnorm = _face_frames(mesh)
    bad = wnorm <= degeneracy_threshold(mesh)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise DegenerateFaceError(
            f"degenerate face {idx} (|w|={wnorm[idx]:.3e}); "
            f"{int(bad.sum())} degenerate in total"
        )
    normals = w / wnorm[:, None]
    return FaceGeometry(centers=centers, normals=normals, areas=wnorm / 2.0)


def mesh_stats(mesh: TriMesh) -> MeshStats:
    """Edge-length, angle and area statistics of a valid mesh.

    ``mean_triangle_diameter`` is the mean over faces of the longest edge,
    the scale the default kernel ladder is anchored to.
    """
    p = mesh.vertices[mesh.faces[:, 0]]
    q = mesh.vertices[mesh.faces[:, 1]]
    r = mesh.vertices[mesh.faces[:, 2]]
    e0 = np.linalg.norm(q - p, axis=1)
    e1 = np.linalg.norm(r - q, axis=1)
    e2 = np.linalg.norm(p - r, axis=1)
    lengths = np.stack([e0, e1, e2], axis=1)

    _, _, wnorm = _face_frames(mesh)
    total_area = float(wnorm.sum() / 2.0)

    # Angle at each corner via the cross/dot ratio; degenerate faces give 0.
    def corner_angles(a, b, c):
        u = b - a
        v = c - a
        cr = np.linalg.norm(np.cross(u, v), axis=1)
        dt = np.einsum("ij,ij->i", u, v)
        return np.arctan2(cr, dt)

    angles = np.stack(
        [corner_angles(p, q, r), corner_angles(q, r, p), corner_angles(r, p, q)],
        axis=1,
    )
    return MeshStats(
        max_edge_length=float(lengths.max()) if len(lengths) else 0.0,
        min_face_angle=float(angles.min()) if len(angles) else 0.0,
        total_area=total_area,
        mean_triangle_diameter=float(lengths.max(axis=1).mean()) if len(lengths) else 0.0,
        bbox_diagonal=mesh.bbox_diagonal(),
        n_vertices=mesh.n_vertices,
        n_faces=mesh.n_faces,
    )


def validate(mesh: TriMesh) -> list[MeshDefect]:
    """Diagnostic scan; returns an empty list iff all invariants hold.

    Reported kinds: ``index-out-of-range``, ``repeated-index``,
    ``non-finite`` and ``degenerate-face``. Pure function, never raises.
    """
    defects: list[MeshDefect] = []
    v, f = mesh.vertices, mesh.faces
    if f.size:
        bad = np.where((f < 0).any(axis=1) | (f >= len(v)).any(axis=1))[0]
        for i in bad:
            defects.append(MeshDefect("index-out-of-range", int(i), f"face {i}: {f[i].tolist()}"))
        rep = np.where((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2]))[0]
        for i in rep:
            defects.append(MeshDefect("repeated-index", int(i), f"face {i}: {f[i].tolist()}"))
    if v.size:
        badv = np.where(~np.isfinite(v).all(axis=1))[0]
        for i in badv:
            defects.append(MeshDefect("non-finite", int(i), f"vertex {i}"))
    # Degenerate faces only make sense once indices are usable.
    if not defects and f.size:
        _, _, wnorm = _face_frames(mesh)
        thr = degeneracy_threshold(mesh)
        for i in np.where(wnorm <= thr)[0]:
            defects.append(MeshDefect("degenerate-face", int(i), f"face {i}: |w|={wnorm[i]:.3e}"))
    return defects


def enclosed_volume(mesh: TriMesh) -> float:
    """Signed volume of a closed, consistently oriented mesh."""
    p = mesh.vertices[mesh.faces[:, 0]]
    q = mesh.vertices[mesh.faces[:, 1]]
    r = mesh.vertices[mesh.faces[:, 2]]
    return float(np.einsum("ij,ij->i", p, np.cross(q, r)).sum() / 6.0)
