"""Position and orientation kernels, and multi-scale kernel specifications.

The position kernel is a radial basis function of the distance between face
centers; the orientation kernel is zonal, a function of the inner product of
unit normals. The product of the two is rigid-motion invariant by
construction. Conventions, fixed once and used everywhere:

* ``gaussian``     rho(x) = exp(-x^2 / sigma^2)      (no factor 2)
* ``cauchy``       rho(x) = 1 / (1 + (x/sigma)^2)
* ``exponential``  rho(x) = exp(-|x| / sigma)

* ``current``            gamma(s) = s            (linear; orientation cancels)
* ``varifold``           gamma(s) = s^2          (unoriented)
* ``oriented_varifold``  gamma(s) = exp(s / sharpness), default sharpness 0.5
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

POSITION_KERNELS = ("gaussian", "cauchy", "exponential")
NORMAL_KERNELS = ("current", "varifold", "oriented_varifold")


@dataclass(frozen=True)
class KernelSpec:
    """One product kernel: a position family with scale and a zonal family."""

    sigma: float
    position_kernel: str = "gaussian"
    normal_kernel: str = "varifold"
    oriented_sharpness: float = 0.5

    def __post_init__(self):
        if self.position_kernel not in POSITION_KERNELS:
            raise ValueError(f"unknown position kernel {self.position_kernel!r}")
        if self.normal_kernel not in NORMAL_KERNELS:
            raise ValueError(f"unknown normal kernel {self.normal_kernel!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be > 0")
        if self.normal_kernel == "oriented_varifold" and not self.oriented_sharpness > 0:
            raise ValueError("oriented_sharpness must be > 0")


def position_values(spec: KernelSpec, sqdist: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """rho evaluated on squared distances (the natural quantity from tiles)."""
    s2 = spec.sigma * spec.sigma
    if spec.position_kernel == "gaussian":
        out = np.multiply(sqdist, -1.0 / s2, out=out)
        return np.exp(out, out=out)
    if spec.position_kernel == "cauchy":
        out = np.multiply(sqdist, 1.0 / s2, out=out)
        out += 1.0
        return np.divide(1.0, out, out=out)
    out = np.sqrt(sqdist, out=out)
    out *= -1.0 / spec.sigma
    return np.exp(out, out=out)


def position_derivative_sq(
    spec: KernelSpec, sqdist: np.ndarray, values: np.ndarray, out: np.ndarray | None = None
) -> np.ndarray:
    """d(rho)/d(squared distance), reusing the already-computed values.

    The exponential kernel has an integrable singularity at zero distance;
    coincident centers get derivative 0, the symmetric subgradient, which is
    also the exact directional derivative for an atom paired with itself.
    """
    s2 = spec.sigma * spec.sigma
    if spec.position_kernel == "gaussian":
        return np.multiply(values, -1.0 / s2, out=out)
    if spec.position_kernel == "cauchy":
        out = np.multiply(values, values, out=out)
        out *= -1.0 / s2
        return out
    dist = np.sqrt(sqdist)
    tiny = np.finfo(np.float64).tiny
    safe = np.maximum(dist, tiny)
    out = np.divide(values, safe, out=out)
    out *= -0.5 / spec.sigma
    out[dist == 0.0] = 0.0
    return out


def normal_values(spec: KernelSpec, dots: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
    """gamma evaluated on normal inner products."""
    if spec.normal_kernel == "current":
        if out is None:
            return dots.copy()
        out[...] = dots
        return out
    if spec.normal_kernel == "varifold":
        return np.multiply(dots, dots, out=out)
    out = np.multiply(dots, 1.0 / spec.oriented_sharpness, out=out)
    return np.exp(out, out=out)


def normal_derivative(
    spec: KernelSpec, dots: np.ndarray, values: np.ndarray, out: np.ndarray | None = None
) -> np.ndarray:
    """d(gamma)/d(inner product), reusing the already-computed values."""
    if spec.normal_kernel == "current":
        if out is None:
            return np.ones_like(dots)
        out[...] = 1.0
        return out
    if spec.normal_kernel == "varifold":
        return np.multiply(dots, 2.0, out=out)
    return np.multiply(values, 1.0 / spec.oriented_sharpness, out=out)


@dataclass(frozen=True)
class MultiScaleSpec:
    """Ordered sum of kernels with per-term weights lambda_i."""

    terms: tuple[tuple[KernelSpec, float], ...]

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ValueError("need at least one kernel term")
        for spec, lam in self.terms:
            if not isinstance(spec, KernelSpec):
                raise TypeError("terms must pair KernelSpec with a weight")
            if not lam > 0:
                raise ValueError("all lambda_i must be > 0")
        object.__setattr__(self, "terms", tuple((s, float(l)) for s, l in self.terms))

    @property
    def kernels(self) -> tuple[KernelSpec, ...]:
        return tuple(spec for spec, _ in self.terms)

    @property
    def weights(self) -> np.ndarray:
        return np.array([lam for _, lam in self.terms])

    @classmethod
    def single(cls, spec: KernelSpec) -> "MultiScaleSpec":
        return cls(terms=((spec, 1.0),))

    @classmethod
    def from_sigmas(
        cls,
        sigmas,
        lambdas=None,
        position_kernel: str = "gaussian",
        normal_kernel: str = "varifold",
        oriented_sharpness: float = 0.5,
    ) -> "MultiScaleSpec":
        """Build one term per sigma; default weights follow (sigma/sigma_max)^2.

        The quadratic weight policy penalizes small scales while keeping them
        able to resolve fine structure.
        """
        sigmas = [float(s) for s in sigmas]
        if lambdas is None:
            top = max(sigmas)
            lambdas = [(s / top) ** 2 for s in sigmas]
        if len(lambdas) != len(sigmas):
            raise ValueError("sigmas and lambdas must have equal length")
        terms = tuple(
            (
                KernelSpec(
                    sigma=s,
                    position_kernel=position_kernel,
                    normal_kernel=normal_kernel,
                    oriented_sharpness=oriented_sharpness,
                ),
                lam,
            )
            for s, lam in zip(sigmas, lambdas)
        )
        return cls(terms=terms)

    def to_config_section(self) -> dict[str, str]:
        """Flat key-value form for INI-style config files."""
        first = self.terms[0][0]
        section = {
            "sigmas": ", ".join(repr(s.sigma) for s, _ in self.terms),
            "lambdas": ", ".join(repr(l) for _, l in self.terms),
            "position_kernel": first.position_kernel,
            "normal_kernel": first.normal_kernel,
        }
        if first.normal_kernel == "oriented_varifold":
            section["oriented_sharpness"] = repr(first.oriented_sharpness)
        return section

    @classmethod
    def from_config_section(cls, section) -> "MultiScaleSpec":
        sigmas = [float(t) for t in str(section["sigmas"]).split(",") if t.strip()]
        lambdas = None
        if section.get("lambdas"):
            lambdas = [float(t) for t in str(section["lambdas"]).split(",") if t.strip()]
        return cls.from_sigmas(
            sigmas,
            lambdas=lambdas,
            position_kernel=section.get("position_kernel", "gaussian"),
            normal_kernel=section.get("normal_kernel", "varifold"),
            oriented_sharpness=float(section.get("oriented_sharpness", 0.5)),
        )


def default_scales(reference, n_scales: int = 4) -> MultiScaleSpec:
    """Geometric sigma ladder tied to the reference mesh's triangle size.

    Scales run from the mean triangle diameter up to 10x that value (a single
    scale uses the top of the ladder), with Gaussian position and varifold
    orientation kernels and the quadratic weight policy.
    """
    from .mesh import mesh_stats  # local import to avoid a cycle

    if n_scales < 1:
        raise ValueError("n_scales must be >= 1")
    d = mesh_stats(reference).mean_triangle_diameter
    if not d > 0:
        raise ValueError("reference mesh has zero triangle diameter")
    if n_scales == 1:
        sigmas = [10.0 * d]
    else:
        sigmas = list(np.geomspace(d, 10.0 * d, n_scales))
    return MultiScaleSpec.from_sigmas(sigmas)
