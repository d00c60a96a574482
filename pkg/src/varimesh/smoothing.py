"""Taubin smoothing with a uniform (combinatorial) Laplacian."""

from __future__ import annotations

import numpy as np
from scipy import sparse

from .mesh import TriMesh, unique_edges


def averaging_matrix(mesh: TriMesh) -> sparse.csr_matrix:
    """Row-stochastic 1-ring averaging matrix; zero rows for isolated vertices."""
    edges = unique_edges(mesh.faces)
    n = mesh.n_vertices
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    data = np.ones(len(rows))
    adj = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.zeros(n)
    nz = deg > 0
    inv[nz] = 1.0 / deg[nz]
    return sparse.diags(inv) @ adj


def uniform_laplacian(mesh: TriMesh, vertices: np.ndarray | None = None) -> np.ndarray:
    """L(x) = mean of 1-ring neighbors - x; zero for isolated vertices."""
    avg = averaging_matrix(mesh)
    x = mesh.vertices if vertices is None else vertices
    lap = avg @ x - x
    deg0 = np.asarray(avg.sum(axis=1)).ravel() == 0
    lap[deg0] = 0.0
    return lap


def taubin_smooth(mesh: TriMesh, lam: float = 0.5, mu: float = -0.53, iterations: int = 10) -> TriMesh:
    """Alternate x <- x + lam*L(x) and x <- x + mu*L(x) for ``iterations`` rounds.

    The positive step smooths, the slightly larger negative step re-inflates,
    which limits the volume shrinkage of plain Laplacian smoothing.
    Connectivity is unchanged; isolated vertices stay fixed.
    """
    if not lam > 0:
        raise ValueError("lam must be > 0")
    if not mu < 0:
        raise ValueError("mu must be < 0")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    avg = averaging_matrix(mesh)
    deg0 = np.asarray(avg.sum(axis=1)).ravel() == 0
    x = np.array(mesh.vertices)
    for _ in range(iterations):
        for step in (lam, mu):
            lap = avg @ x - x
            lap[deg0] = 0.0
            x += step * lap
    return mesh.with_vertices(x)
