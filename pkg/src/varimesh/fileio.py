"""Mesh file I/O: OBJ (canonical), ASCII PLY and OFF.

Normals, texture coordinates and other attributes in input files are ignored;
geometry is always recomputed from positions. Polygonal faces are
fan-triangulated, which assumes convex planar polygons. The writer emits
9 significant digits.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import EmptyMeshError, MeshFormatError
from .mesh import TriMesh

_EXTENSIONS = {".obj": "obj", ".ply": "ply", ".off": "off"}


def _infer_format(path: str, format: str | None) -> str:
    if format is not None:
        fmt = format.lower()
        if fmt not in ("obj", "ply", "off"):
            raise MeshFormatError(f"unsupported format {format!r}")
        return fmt
    ext = os.path.splitext(path)[1].lower()
    if ext not in _EXTENSIONS:
        raise MeshFormatError(f"cannot infer mesh format from {path!r}")
    return _EXTENSIONS[ext]


def _fan(indices: list[int]) -> list[list[int]]:
    return [[indices[0], indices[k], indices[k + 1]] for k in range(1, len(indices) - 1)]


def _build(vertices, faces, path) -> TriMesh:
    if not vertices or not faces:
        raise EmptyMeshError(f"{path}: empty mesh (no vertices or no faces)")
    try:
        return TriMesh(np.asarray(vertices, dtype=np.float64), np.asarray(faces, dtype=np.int64))
    except MeshFormatError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc


def _parse_obj(lines, path) -> TriMesh:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for ln, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        tag = tokens[0]
        if tag == "v":
            if len(tokens) < 4:
                raise MeshFormatError(f"{path}:{ln}: vertex line needs 3 coordinates")
            try:
                vertices.append([float(t) for t in tokens[1:4]])
            except ValueError as exc:
                raise MeshFormatError(f"{path}:{ln}: non-numeric coordinate") from exc
        elif tag == "f":
            if len(tokens) < 4:
                raise MeshFormatError(f"{path}:{ln}: face line needs >= 3 indices")
            idx = []
            for t in tokens[1:]:
                head = t.split("/")[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise MeshFormatError(f"{path}:{ln}: bad face index {t!r}") from exc
                if i < 1:
                    raise MeshFormatError(f"{path}:{ln}: face index {i} out of range")
                idx.append(i - 1)
            faces.extend(_fan(idx))
        # all other tags (vn, vt, usemtl, ...) are ignored
    return _build(vertices, faces, path)


def _parse_ply(lines, path) -> TriMesh:
    it = iter(enumerate(lines, start=1))

    def next_content():
        for ln, line in it:
            s = line.strip()
            if s and not s.startswith("comment"):
                return ln, s
        raise MeshFormatError(f"{path}: truncated PLY file")

    ln, magic = next_content()
    if magic != "ply":
        raise MeshFormatError(f"{path}:{ln}: missing 'ply' magic")
    n_vertex = n_face = None
    vertex_props: list[str] = []
    current_element = None
    while True:
        ln, s = next_content()
        tokens = s.split()
        if tokens[0] == "format":
            if tokens[1] != "ascii":
                raise MeshFormatError(f"{path}:{ln}: only ASCII PLY is supported")
        elif tokens[0] == "element":
            current_element = tokens[1]
            if tokens[1] == "vertex":
                n_vertex = int(tokens[2])
            elif tokens[1] == "face":
                n_face = int(tokens[2])
        elif tokens[0] == "property":
            if current_element == "vertex" and tokens[1] != "list":
                vertex_props.append(tokens[-1])
        elif tokens[0] == "end_header":
            break
    if n_vertex is None or n_face is None:
        raise MeshFormatError(f"{path}: PLY header lacks vertex or face element")
    try:
        ix, iy, iz = (vertex_props.index(c) for c in ("x", "y", "z"))
    except ValueError as exc:
        raise MeshFormatError(f"{path}: PLY vertex element lacks x/y/z") from exc

    vertices = []
    for _ in range(n_vertex):
        ln, s = next_content()
        parts = s.split()
        try:
            vertices.append([float(parts[ix]), float(parts[iy]), float(parts[iz])])
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"{path}:{ln}: bad vertex line") from exc
    faces = []
    for _ in range(n_face):
        ln, s = next_content()
        parts = s.split()
        try:
            count = int(parts[0])
            idx = [int(t) for t in parts[1 : 1 + count]]
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"{path}:{ln}: bad face line") from exc
        if len(idx) != count or count < 3:
            raise MeshFormatError(f"{path}:{ln}: bad face list")
        faces.extend(_fan(idx))
    return _build(vertices, faces, path)


def _parse_off(lines, path) -> TriMesh:
    it = iter(enumerate(lines, start=1))

    def next_content():
        for ln, line in it:
            s = line.strip()
            if s and not s.startswith("#"):
                return ln, s
        raise MeshFormatError(f"{path}: truncated OFF file")

    ln, magic = next_content()
    if magic != "OFF":
        raise MeshFormatError(f"{path}:{ln}: missing 'OFF' magic")
    ln, counts = next_content()
    try:
        n_vertex, n_face = (int(t) for t in counts.split()[:2])
    except (ValueError, IndexError) as exc:
        raise MeshFormatError(f"{path}:{ln}: bad OFF counts line") from exc
    vertices = []
    for _ in range(n_vertex):
        ln, s = next_content()
        try:
            vertices.append([float(t) for t in s.split()[:3]])
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"{path}:{ln}: bad vertex line") from exc
    faces = []
    for _ in range(n_face):
        ln, s = next_content()
        parts = s.split()
        try:
            count = int(parts[0])
            idx = [int(t) for t in parts[1 : 1 + count]]
        except (ValueError, IndexError) as exc:
            raise MeshFormatError(f"{path}:{ln}: bad face line") from exc
        if len(idx) != count or count < 3:
            raise MeshFormatError(f"{path}:{ln}: bad face list")
        faces.extend(_fan(idx))
    return _build(vertices, faces, path)


def load_mesh(path: str, format: str | None = None) -> TriMesh:
    """Load a triangle mesh from an OBJ, ASCII-PLY or OFF file.

    Polygons with more than 3 vertices are fan-triangulated. The format is
    inferred from the extension unless given explicitly.
    """
    fmt = _infer_format(path, format)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.readlines()
    if fmt == "obj":
        return _parse_obj(lines, path)
    if fmt == "ply":
        return _parse_ply(lines, path)
    return _parse_off(lines, path)


def save_mesh(mesh: TriMesh, path: str, format: str | None = None) -> None:
    """Write a mesh; round-trips vertices to 9 significant digits, faces exactly."""
    if mesh.n_vertices == 0 or mesh.n_faces == 0:
        raise EmptyMeshError("refusing to save an empty mesh")
    fmt = _infer_format(path, format)
    v, f = mesh.vertices, mesh.faces
    with open(path, "w", encoding="utf-8") as fh:
        if fmt == "obj":
            for x, y, z in v:
                fh.write(f"v {x:.9g} {y:.9g} {z:.9g}\n")
            for a, b, c in f:
                fh.write(f"f {a + 1} {b + 1} {c + 1}\n")
        elif fmt == "ply":
            fh.write("ply\nformat ascii 1.0\n")
            fh.write(f"element vertex {len(v)}\n")
            fh.write("property double x\nproperty double y\nproperty double z\n")
            fh.write(f"element face {len(f)}\n")
            fh.write("property list uchar int vertex_indices\nend_header\n")
            for x, y, z in v:
                fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")
            for a, b, c in f:
                fh.write(f"3 {a} {b} {c}\n")
        else:
            fh.write("OFF\n")
            fh.write(f"{len(v)} {len(f)} 0\n")
            for x, y, z in v:
                fh.write(f"{x:.9g} {y:.9g} {z:.9g}\n")
            for a, b, c in f:
                fh.write(f"3 {a} {b} {c}\n")
