"""Reference shapes for tests, benchmarks and the convergence studies."""

from __future__ import annotations

import numpy as np

from .mesh import TriMesh
from .remesh import subdivide_midpoint


def icosahedron(radius: float = 1.0) -> TriMesh:
    """Regular icosahedron with unit circumradius (scaled by ``radius``)."""
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
            (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
            (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
        ],
        dtype=np.float64,
    )
    verts *= radius / np.linalg.norm(verts[0])
    faces = np.array(
        [
            (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
            (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
            (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
            (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
        ],
        dtype=np.int64,
    )
    return TriMesh(verts, faces)


def icosphere(level: int, radius: float = 1.0) -> TriMesh:
    """Icosahedron subdivided ``level`` times, vertices projected to the sphere.

    Level k has 20 * 4**k faces; every vertex lies exactly on the sphere.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    mesh = icosahedron(radius)
    for _ in range(level):
        mesh = subdivide_midpoint(mesh)
        v = np.array(mesh.vertices)
        v *= radius / np.linalg.norm(v, axis=1)[:, None]
        mesh = mesh.with_vertices(v)
    return mesh


def torus_mesh(n_u: int, n_v: int, major_radius: float = 2.0, minor_radius: float = 0.5) -> TriMesh:
    """Regular (u, v) grid triangulation of a torus, outward orientation.

    All vertices lie exactly on the surface; u runs around the main axis,
    v around the tube.
    """
    if n_u < 3 or n_v < 3:
        raise ValueError("need at least 3 samples per direction")
    u = 2.0 * np.pi * np.arange(n_u) / n_u
    v = 2.0 * np.pi * np.arange(n_v) / n_v
    uu, vv = np.meshgrid(u, v, indexing="ij")
    ring = major_radius + minor_radius * np.cos(vv)
    verts = np.stack(
        [ring * np.cos(uu), ring * np.sin(uu), minor_radius * np.sin(vv)], axis=-1
    ).reshape(-1, 3)

    def vid(i, j):
        return (i % n_u) * n_v + (j % n_v)

    faces = []
    for i in range(n_u):
        for j in range(n_v):
            a = vid(i, j)
            b = vid(i + 1, j)
            c = vid(i + 1, j + 1)
            d = vid(i, j + 1)
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def flat_grid(nx: int, ny: int, spacing: float = 1.0) -> TriMesh:
    """Planar z=0 grid, triangulated; handy for Laplacian sanity checks."""
    xs = np.arange(nx) * spacing
    ys = np.arange(ny) * spacing
    xx, yy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([xx, yy, np.zeros_like(xx)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            faces.append((a, b, c))
            faces.append((a, c, d))
    return TriMesh(verts, np.array(faces, dtype=np.int64))


def radial_bump(mesh: TriMesh, direction, amplitude: float, width: float = 0.5) -> TriMesh:
    """Push vertices radially outward by a Gaussian bump around ``direction``.

    Works on meshes that are star-shaped around the origin (spheres in
    practice). ``width`` is the chordal falloff on the unit sphere of
    directions; ``amplitude`` is the peak radial displacement in model units.
    """
    d = np.asarray(direction, dtype=np.float64)
    d = d / np.linalg.norm(d)
    v = np.array(mesh.vertices)
    radii = np.linalg.norm(v, axis=1)
    if np.any(radii == 0):
        raise ValueError("radial bump needs nonzero vertex radii")
    unit = v / radii[:, None]
    gain = amplitude * np.exp(-np.linalg.norm(unit - d, axis=1) ** 2 / width**2)
    return mesh.with_vertices(v + gain[:, None] * unit)
