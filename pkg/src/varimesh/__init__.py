"""varimesh: parameterization-invariant mesh dissimilarities and registration.

Triangle meshes are represented as discrete varifolds (weighted Dirac atoms
on position x unit-normal space); kernel metrics on those measures give
dissimilarities that do not depend on how a surface happens to be
triangulated. On top of the metric sit baseline dissimilarities, a
gradient-descent template registration, and an empirical convergence lab for
the measure approximation bound.
"""

from .errors import (
    DegenerateConfigurationError,
    DegenerateFaceError,
    EmptyMeshError,
    EmptyVarifoldError,
    MeshFormatError,
    NonFiniteError,
    QuadratureError,
    SizeMismatchError,
    UnreachableTargetError,
    VarimeshError,
)
from .fileio import load_mesh, save_mesh
from .kernels import KernelSpec, MultiScaleSpec, default_scales
from .mesh import (
    FaceGeometry,
    MeshDefect,
    MeshStats,
    TriMesh,
    enclosed_volume,
    face_geometry,
    mesh_stats,
    unique_edges,
    validate,
)
from .products import (
    gm_loss,
    gm_loss_gradient,
    gm_loss_gradient_terms,
    kernel_inner_product,
    multiscale_gm_loss,
    self_inner_products,
)
from .remesh import (
    decimate_edge_collapse,
    remesh_iso,
    remesh_updown,
    remesh_variable,
    subdivide_midpoint,
)
from .smoothing import taubin_smooth, uniform_laplacian
from .varifold import DiscreteVarifold, probe_integral, varifold_of_mesh

__version__ = "0.1.0"

__all__ = [
    "DegenerateConfigurationError",
    "DegenerateFaceError",
    "DiscreteVarifold",
    "EmptyMeshError",
    "EmptyVarifoldError",
    "FaceGeometry",
    "KernelSpec",
    "MeshDefect",
    "MeshFormatError",
    "MeshStats",
    "MultiScaleSpec",
    "NonFiniteError",
    "QuadratureError",
    "SizeMismatchError",
    "TriMesh",
    "UnreachableTargetError",
    "VarimeshError",
    "decimate_edge_collapse",
    "default_scales",
    "enclosed_volume",
    "face_geometry",
    "gm_loss",
    "gm_loss_gradient",
    "gm_loss_gradient_terms",
    "kernel_inner_product",
    "load_mesh",
    "mesh_stats",
    "multiscale_gm_loss",
    "probe_integral",
    "remesh_iso",
    "remesh_updown",
    "remesh_variable",
    "save_mesh",
    "self_inner_products",
    "subdivide_midpoint",
    "taubin_smooth",
    "uniform_laplacian",
    "unique_edges",
    "validate",
    "varifold_of_mesh",
    "__version__",
]
