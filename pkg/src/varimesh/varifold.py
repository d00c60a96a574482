"""Discrete varifolds: weighted Dirac atoms on position x unit-normal space."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyVarifoldError, NonFiniteError
from .mesh import TriMesh, _face_frames, degeneracy_threshold


@dataclass(frozen=True)
class DiscreteVarifold:
    """One weighted atom per mesh face: (center, unit normal, area).

    Atoms are immutable and safe to share across threads; ``dropped`` counts
    degenerate source faces that contributed no atom.
    """

    centers: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    dropped: int = field(default=0, compare=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.centers, dtype=np.float64)
        n = np.ascontiguousarray(self.normals, dtype=np.float64)
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 3 or n.shape != c.shape or w.shape != (len(c),):
            raise ValueError("centers/normals must be (m, 3) and weights (m,)")
        if len(c) == 0:
            raise EmptyVarifoldError("varifold must contain at least one atom")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(n)) and np.all(np.isfinite(w))):
            raise NonFiniteError("varifold atoms contain non-finite values")
        if np.any(w <= 0):
            raise ValueError("atom weights must be > 0")
        norms = np.linalg.norm(n, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError("atom normals must be unit length within 1e-9")
        for arr in (c, n, w):
            arr.flags.writeable = False
        object.__setattr__(self, "centers", c)
        object.__setattr__(self, "normals", n)
        object.__setattr__(self, "weights", w)

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())


def varifold_of_mesh(mesh: TriMesh) -> DiscreteVarifold:
    """Atoms (c(f), n(f), a(f)) for every non-degenerate face.

    Degenerate faces carry no area and are dropped with a warning; if no face
    survives, raises :class:`EmptyVarifoldError`.
    """
    centers, w, wnorm = _face_frames(mesh)
    keep = wnorm > degeneracy_threshold(mesh)
    dropped = int(len(wnorm) - keep.sum())
    if dropped == len(wnorm):
        raise EmptyVarifoldError("all faces are degenerate")
    if dropped:
        warnings.warn(f"dropped {dropped} degenerate faces from varifold", stacklevel=2)
    centers = centers[keep]
    w = w[keep]
    wnorm = wnorm[keep]
    return DiscreteVarifold(
        centers=centers,
        normals=w / wnorm[:, None],
        weights=wnorm / 2.0,
        dropped=dropped,
    )


def probe_integral(mu: DiscreteVarifold, probe) -> float:
    """Integrate a test function against the varifold: sum of w * u(c, n).

    ``probe`` is either a vectorized callable ``u(points, normals)`` or an
    object exposing ``evaluate(points, normals)``.
    """
    evaluate = getattr(probe, "evaluate", probe)
    values = np.asarray(evaluate(mu.centers, mu.normals), dtype=np.float64)
    return float(np.dot(mu.weights, values))
