"""Exception hierarchy shared across the package."""


class VarimeshError(Exception):
    """Base class for all package-specific errors."""


class MeshFormatError(VarimeshError, ValueError):
    """Malformed mesh file or structurally invalid mesh data (bad indices, shapes)."""


class EmptyMeshError(VarimeshError, ValueError):
    """Mesh has no vertices or no faces where a non-empty mesh is required."""


class EmptyVarifoldError(VarimeshError, ValueError):
    """All faces of a mesh were degenerate; no varifold atom survives."""


class DegenerateFaceError(VarimeshError, ValueError):
    """A face fell below the degeneracy threshold where a normal is required."""


class SizeMismatchError(VarimeshError, ValueError):
    """Inputs that must share vertex count or connectivity do not."""


class UnreachableTargetError(VarimeshError, RuntimeError):
    """Decimation ran out of legal collapses above the requested face count."""


class DegenerateConfigurationError(VarimeshError, ValueError):
    """Point configuration leaves a transform under-determined (e.g. collinear)."""


class NonFiniteError(VarimeshError, ArithmeticError):
    """A computation produced NaN or Inf, usually signalling bad inputs upstream."""


class QuadratureError(VarimeshError, RuntimeError):
    """Adaptive quadrature failed to stabilize within the level budget."""
