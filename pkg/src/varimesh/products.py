"""Kernel inner products between discrete varifolds, losses and gradients.

The double sum over atom pairs is evaluated in square tiles so peak memory is
O(atoms + tile_size^2) per thread regardless of problem size; the full pair
matrix is never materialized. Within a tile, squared distances and normal
inner products are built once and shared by every kernel scale, so a
multi-scale evaluation pays for one pair of GEMMs plus one kernel evaluation
per scale. Scratch buffers are recycled across tiles (and, via an optional
workspace, across calls), which keeps the inner loop free of large
allocations.

Two reduction modes:

* deterministic (default): tile partials are reduced in a fixed order with
  compensated summation; results are independent of thread count and
  bit-identical across reruns on the same machine.
* fast: partial sums are combined as threads finish, in arrival order.

BLAS pools are pinned to one thread inside large reductions so that
user-level threading is the only parallelism; this keeps the deterministic
contract and makes thread scaling measurable.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor, as_completed
from contextlib import nullcontext

import numpy as np
from threadpoolctl import threadpool_limits

from .errors import DegenerateFaceError, NonFiniteError
from .kernels import (
    KernelSpec,
    MultiScaleSpec,
    normal_derivative,
    normal_values,
    position_values,
)
from .mesh import TriMesh, _face_frames, degeneracy_threshold
from .varifold import DiscreteVarifold, varifold_of_mesh

DEFAULT_TILE = 1024

#: Below this many atom pairs the BLAS pool is left alone; pinning only pays
#: off when the per-call work is substantial.
_BLAS_PIN_THRESHOLD = 256 * 256


class Workspace:
    """Reusable scratch buffers keyed by shape and role (and thread).

    Passing one workspace across repeated gradient evaluations (as the
    registration loop does) removes all large allocations from the hot path.
    """

    def __init__(self):
        self._bufs: dict = {}

    def get(self, rows: int, cols: int, tag: str) -> np.ndarray:
        key = (threading.get_ident(), rows, cols, tag)
        buf = self._bufs.get(key)
        if buf is None:
            buf = np.empty((rows, cols))
            self._bufs[key] = buf
        return buf


class _Kahan:
    """Compensated accumulation (one compensator per slot)."""

    def __init__(self, n: int):
        self.sum = np.zeros(n)
        self._c = np.zeros(n)

    def add(self, values: np.ndarray) -> None:
        y = values - self._c
        t = self.sum + y
        self._c = (t - self.sum) - y
        self.sum = t


def _atoms(obj) -> DiscreteVarifold:
    if isinstance(obj, DiscreteVarifold):
        return obj
    if isinstance(obj, TriMesh):
        return varifold_of_mesh(obj)
    raise TypeError(f"expected TriMesh or DiscreteVarifold, got {type(obj).__name__}")


def _tiles(n: int, tile: int) -> list[tuple[int, int]]:
    return [(start, min(start + tile, n)) for start in range(0, n, tile)]


def _blas_guard(n_pairs: int):
    if n_pairs >= _BLAS_PIN_THRESHOLD:
        return threadpool_limits(limits=1, user_api="blas")
    return nullcontext()


def _sqdist_into(u, xc, yc, x2, y2, diag: tuple[int, int] | None) -> np.ndarray:
    np.matmul(xc, yc.T, out=u)
    u *= -2.0
    u += x2[:, None]
    u += y2[None, :]
    np.clip(u, 0.0, None, out=u)
    if diag is not None:
        # Self products: the distance of an atom to itself is exactly zero.
        # The quadratic expansion leaves ~1e-16 noise there, which kernels
        # with a sqrt (exponential) would amplify by eight orders.
        r0, c0 = diag
        lo = max(r0, c0)
        hi = min(r0 + u.shape[0], c0 + u.shape[1])
        if hi > lo:
            idx = np.arange(lo, hi)
            u[idx - r0, idx - c0] = 0.0
    return u


def _normal_groups(kernels) -> tuple[list[KernelSpec], list[int]]:
    """Unique zonal kernels across the scale ladder and per-kernel group ids."""
    keys: list[tuple[str, float]] = []
    probes: list[KernelSpec] = []
    ids = []
    for spec in kernels:
        key = (spec.normal_kernel, spec.oriented_sharpness)
        if key not in keys:
            keys.append(key)
            probes.append(
                KernelSpec(sigma=1.0, normal_kernel=key[0], oriented_sharpness=key[1])
            )
        ids.append(keys.index(key))
    return probes, ids


def _sum_tile(ws, xc, xn, xw, x2, yc, yn, yw, y2, kernels, group_ids, group_probes, diag):
    """Per-kernel partial sums over one atom-pair tile."""
    m, n = len(xw), len(yw)
    u = _sqdist_into(ws.get(m, n, "u"), xc, yc, x2, y2, diag)
    s = np.matmul(xn, yn.T, out=ws.get(m, n, "s"))
    gammas = {
        gid: normal_values(probe, s, out=ws.get(m, n, f"g{gid}"))
        for gid, probe in enumerate(group_probes)
    }
    out = np.empty(len(kernels))
    rho = ws.get(m, n, "rho")
    for k, spec in enumerate(kernels):
        position_values(spec, u, out=rho)
        rho *= gammas[group_ids[k]]
        out[k] = xw @ (rho @ yw)
    return out


def _pair_sums(
    mu: DiscreteVarifold,
    nu: DiscreteVarifold,
    kernels,
    *,
    tile_size,
    threads,
    deterministic,
    workspace: Workspace | None = None,
) -> np.ndarray:
    same = mu is nu
    ws = workspace or Workspace()
    xc, xn, xw = mu.centers, mu.normals, mu.weights
    yc, yn, yw = nu.centers, nu.normals, nu.weights
    x2 = np.einsum("ij,ij->i", xc, xc)
    y2 = np.einsum("ij,ij->i", yc, yc)
    group_probes, group_ids = _normal_groups(kernels)
    row_tiles = _tiles(len(xw), tile_size)
    col_tiles = _tiles(len(yw), tile_size)
    jobs = [(r, c) for r in row_tiles for c in col_tiles]

    def run(job):
        (r0, r1), (c0, c1) = job
        return _sum_tile(
            ws,
            xc[r0:r1], xn[r0:r1], xw[r0:r1], x2[r0:r1],
            yc[c0:c1], yn[c0:c1], yw[c0:c1], y2[c0:c1],
            kernels, group_ids, group_probes,
            (r0, c0) if same else None,
        )

    with _blas_guard(len(xw) * len(yw)):
        if threads <= 1 or len(jobs) == 1:
            partials = [run(job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                if deterministic:
                    futures = {pool.submit(run, job): i for i, job in enumerate(jobs)}
                    partials = [None] * len(jobs)
                    for fut, i in futures.items():
                        partials[i] = fut.result()
                else:
                    futures = [pool.submit(run, job) for job in jobs]
                    total = np.zeros(len(kernels))
                    for fut in as_completed(futures):
                        total += fut.result()
                    return total
    if deterministic:
        acc = _Kahan(len(kernels))
        for p in partials:
            acc.add(p)
        return acc.sum
    return np.sum(partials, axis=0)


def _canonical_order(mu: DiscreteVarifold, nu: DiscreteVarifold):
    """Value-based ordering so symmetric calls run identical float operations."""
    if mu.n_atoms != nu.n_atoms:
        return (mu, nu) if mu.n_atoms < nu.n_atoms else (nu, mu)
    for a, b in ((mu.centers, nu.centers), (mu.normals, nu.normals), (mu.weights, nu.weights)):
        ab, bb = a.tobytes(), b.tobytes()
        if ab != bb:
            return (mu, nu) if ab < bb else (nu, mu)
    # Equal-valued varifolds: collapse to one object so self and cross terms
    # run the exact same float operations (identity losses cancel exactly).
    return mu, mu


def kernel_inner_product(
    mu,
    nu,
    kernel: KernelSpec,
    *,
    tile_size: int = DEFAULT_TILE,
    threads: int = 1,
    deterministic: bool = True,
) -> float:
    """<mu, nu>_k: the double sum of w_i w_j rho(|c_i - c_j|) gamma(<n_i, n_j>).

    Streams over atom-pair tiles; peak memory is O(atoms + tile_size^2) per
    thread. Symmetric in its arguments (exactly, in deterministic mode).

    Raises
    ------
    NonFiniteError
        If the reduction produces NaN or Inf (bad inputs upstream).
    """
    a, b = _canonical_order(_atoms(mu), _atoms(nu))
    value = float(
        _pair_sums(
            a, b, [kernel], tile_size=tile_size, threads=threads, deterministic=deterministic
        )[0]
    )
    if not np.isfinite(value):
        raise NonFiniteError("kernel inner product is not finite")
    return value


def _loss_terms(mu, nu, kernels, *, tile_size, threads, deterministic):
    a, b = _canonical_order(mu, nu)
    opts = dict(tile_size=tile_size, threads=threads, deterministic=deterministic)
    aa = _pair_sums(a, a, kernels, **opts)
    bb = _pair_sums(b, b, kernels, **opts)
    ab = _pair_sums(a, b, kernels, **opts)
    return aa + bb - 2.0 * ab


def gm_loss(
    X,
    Xhat,
    kernel: KernelSpec,
    *,
    tile_size: int = DEFAULT_TILE,
    threads: int = 1,
    deterministic: bool = True,
) -> float:
    """Squared kernel-metric norm of mu_X - mu_Xhat.

    Accepts meshes or prebuilt varifolds; zero (up to rounding) exactly when
    the two inputs carry the same measure, regardless of parameterization.
    """
    value = float(
        _loss_terms(
            _atoms(X), _atoms(Xhat), [kernel],
            tile_size=tile_size, threads=threads, deterministic=deterministic,
        )[0]
    )
    if not np.isfinite(value):
        raise NonFiniteError("GM loss is not finite")
    return value


def multiscale_gm_loss(
    X,
    Xhat,
    spec: MultiScaleSpec,
    *,
    tile_size: int = DEFAULT_TILE,
    threads: int = 1,
    deterministic: bool = True,
) -> tuple[float, np.ndarray]:
    """Weighted sum of per-scale GM losses; returns (total, per-scale losses).

    The per-scale values are the raw (unweighted) losses; the total applies
    the lambda_i weights.
    """
    losses = _loss_terms(
        _atoms(X), _atoms(Xhat), list(spec.kernels),
        tile_size=tile_size, threads=threads, deterministic=deterministic,
    )
    total = float(spec.weights @ losses)
    if not np.isfinite(total):
        raise NonFiniteError("GM loss is not finite")
    return total, losses


def self_inner_products(
    obj,
    spec: MultiScaleSpec,
    *,
    tile_size: int = DEFAULT_TILE,
    threads: int = 1,
    deterministic: bool = True,
) -> np.ndarray:
    """<mu, mu>_k per scale; cache this for the fixed side of a registration."""
    vf = _atoms(obj)
    return _pair_sums(
        vf, vf, list(spec.kernels), tile_size=tile_size, threads=threads, deterministic=deterministic
    )


def _grad_col_block(
    ws, xc, xn, xw, x2, yc, yn, yw, y2, kernels, coefs, group_ids, group_probes,
    row_tiles, col_start,
):
    """Sums and y-side atom gradients for one column block of atom pairs.

    Returns per-kernel partial sums plus coefficient-weighted gradients of
    sum_ij w_i w_j rho(u_ij) gamma(s_ij) with respect to the y atoms
    (centers, normals, weights). ``col_start`` is the global index of the
    first column, or None when x and y are different varifolds.
    """
    n = len(yw)
    sums = np.zeros(len(kernels))
    Ga = np.zeros(n)
    Gc = np.zeros((n, 3))
    Gn = np.zeros((n, 3))
    tiny = np.finfo(np.float64).tiny
    for r0, r1 in row_tiles:
        xct, xnt, xwt, x2t = xc[r0:r1], xn[r0:r1], xw[r0:r1], x2[r0:r1]
        m = r1 - r0
        diag = (r0, col_start) if col_start is not None else None
        u = _sqdist_into(ws.get(m, n, "u"), xct, yc, x2t, y2, diag)
        s = np.matmul(xnt, yn.T, out=ws.get(m, n, "s"))
        gammas = {}
        for gid, probe in enumerate(group_probes):
            g = normal_values(probe, s, out=ws.get(m, n, f"g{gid}"))
            gp = normal_derivative(probe, s, g, out=ws.get(m, n, f"gp{gid}"))
            gammas[gid] = (g, gp)
        E = ws.get(m, n, "E")
        T1 = ws.get(m, n, "T1")
        T2 = ws.get(m, n, "T2")
        for k, spec in enumerate(kernels):
            coef = coefs[k]
            g, gp = gammas[group_ids[k]]
            position_values(spec, u, out=E)
            np.multiply(E, xwt[:, None], out=T1)  # WE: w_i * rho
            np.multiply(T1, g, out=T2)            # A:  w_i * rho * gamma
            alpha = T2.sum(axis=0)
            sums[k] += alpha @ yw
            Ga += coef * alpha
            betaA = T2.T @ xct
            pk = spec.position_kernel
            if pk == "gaussian":
                # d(rho)/du = -rho / sigma^2, so P is a scalar multiple of A
                c = -1.0 / (spec.sigma * spec.sigma)
                alphaP = alpha * c
                betaP = betaA * c
            elif pk == "cauchy":
                # d(rho)/du = -rho^2 / sigma^2
                np.multiply(T2, E, out=T2)
                c = -1.0 / (spec.sigma * spec.sigma)
                alphaP = T2.sum(axis=0) * c
                betaP = (T2.T @ xct) * c
            else:
                # exponential: d(rho)/du = -rho / (2 sigma sqrt(u)); the
                # coincident-center limit along a pair moving together is 0
                d = np.sqrt(u)
                np.maximum(d, tiny, out=d)
                np.divide(T2, d, out=T2)
                T2 *= -0.5 / spec.sigma
                T2[u == 0.0] = 0.0
                alphaP = T2.sum(axis=0)
                betaP = T2.T @ xct
            Gc += (2.0 * coef * yw)[:, None] * (alphaP[:, None] * yc - betaP)
            np.multiply(T1, gp, out=T1)           # D: w_i * rho * gamma'
            Gn += (coef * yw)[:, None] * (T1.T @ xnt)
    return sums, Ga, Gc, Gn


def _pair_sums_and_ygrads(
    mu: DiscreteVarifold,
    nu: DiscreteVarifold,
    kernels,
    coefs,
    *,
    tile_size,
    threads,
    deterministic,
    workspace: Workspace | None = None,
):
    """Per-kernel sums plus coefficient-weighted gradients w.r.t. nu's atoms."""
    same = mu is nu
    ws = workspace or Workspace()
    xc, xn, xw = mu.centers, mu.normals, mu.weights
    yc, yn, yw = nu.centers, nu.normals, nu.weights
    x2 = np.einsum("ij,ij->i", xc, xc)
    y2 = np.einsum("ij,ij->i", yc, yc)
    group_probes, group_ids = _normal_groups(kernels)
    row_tiles = _tiles(len(xw), tile_size)
    col_tiles = _tiles(len(yw), tile_size)

    def run(col):
        c0, c1 = col
        return _grad_col_block(
            ws,
            xc, xn, xw, x2,
            yc[c0:c1], yn[c0:c1], yw[c0:c1], y2[c0:c1],
            kernels, coefs, group_ids, group_probes, row_tiles,
            c0 if same else None,
        )

    with _blas_guard(len(xw) * len(yw)):
        if threads <= 1 or len(col_tiles) == 1:
            results = [run(col) for col in col_tiles]
        else:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(run, col_tiles))

    Ga = np.concatenate([r[1] for r in results])
    Gc = np.vstack([r[2] for r in results])
    Gn = np.vstack([r[3] for r in results])
    if deterministic:
        acc = _Kahan(len(kernels))
        for r in results:
            acc.add(r[0])
        sums = acc.sum
    else:
        sums = np.sum([r[0] for r in results], axis=0)
    return sums, Ga, Gc, Gn


def _atom_grads_to_vertices(mesh: TriMesh, w, wnorm, Ga, Gc, Gn) -> np.ndarray:
    """Chain per-atom gradients through c, n, a back to vertex positions."""
    n = w / wnorm[:, None]
    gw = (Gn - np.einsum("ij,ij->i", Gn, n)[:, None] * n) / wnorm[:, None]
    gw += 0.5 * Ga[:, None] * n

    f = mesh.faces
    p = mesh.vertices[f[:, 0]]
    q = mesh.vertices[f[:, 1]]
    r = mesh.vertices[f[:, 2]]
    grad_q = np.cross(r - p, gw)
    grad_r = np.cross(gw, q - p)
    grad_p = -grad_q - grad_r
    center_part = Gc / 3.0

    out = np.zeros_like(mesh.vertices)
    np.add.at(out, f[:, 0], grad_p + center_part)
    np.add.at(out, f[:, 1], grad_q + center_part)
    np.add.at(out, f[:, 2], grad_r + center_part)
    return out


def _pred_varifold(mesh: TriMesh):
    """Varifold atoms of the differentiated mesh; degenerate faces are an error here."""
    centers, w, wnorm = _face_frames(mesh)
    thr = degeneracy_threshold(mesh)
    if np.any(wnorm <= thr):
        bad = int(np.argmax(wnorm <= thr))
        raise DegenerateFaceError(
            f"face {bad} of the differentiated mesh is degenerate; "
            "its normal is undefined (consider an edge regularizer)"
        )
    vf = DiscreteVarifold(centers=centers, normals=w / wnorm[:, None], weights=wnorm / 2.0)
    return vf, w, wnorm


def gm_loss_gradient_terms(
    X,
    Xhat: TriMesh,
    spec: MultiScaleSpec,
    *,
    target_self: np.ndarray | None = None,
    tile_size: int = DEFAULT_TILE,
    threads: int = 1,
    deterministic: bool = True,
    workspace: Workspace | None = None,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Multi-scale GM loss and its gradient w.r.t. the vertices of ``Xhat``.

    Returns (total, per-scale raw losses, gradient). ``target_self`` may carry
    the cached per-scale <mu_X, mu_X> terms (they are constant while ``X`` is
    fixed, e.g. across registration iterations); ``workspace`` recycles
    scratch buffers across repeated calls.
    """
    mu = _atoms(X)
    if not isinstance(Xhat, TriMesh):
        raise TypeError("the differentiated argument must be a TriMesh")
    nu, w, wnorm = _pred_varifold(Xhat)
    kernels = list(spec.kernels)
    lam = spec.weights
    opts = dict(
        tile_size=tile_size, threads=threads, deterministic=deterministic, workspace=workspace
    )

    if target_self is None:
        target_self = _pair_sums(mu, mu, kernels, **opts)
    cross, cGa, cGc, cGn = _pair_sums_and_ygrads(mu, nu, kernels, -2.0 * lam, **opts)
    self_, sGa, sGc, sGn = _pair_sums_and_ygrads(nu, nu, kernels, 2.0 * lam, **opts)

    per_scale = target_self + self_ - 2.0 * cross
    total = float(lam @ per_scale)
    grad = _atom_grads_to_vertices(Xhat, w, wnorm, cGa + sGa, cGc + sGc, cGn + sGn)
    if not (np.isfinite(total) and np.all(np.isfinite(grad))):
        raise NonFiniteError("GM loss gradient is not finite")
    return total, per_scale, grad


def gm_loss_gradient(
    X,
    Xhat: TriMesh,
    spec: MultiScaleSpec,
    *,
    target_self: np.ndarray | None = None,
    tile_size: int = DEFAULT_TILE,
    threads: int = 1,
    deterministic: bool = True,
) -> tuple[float, np.ndarray]:
    """Multi-scale GM loss and d(loss)/d(vertices of Xhat), in closed form.

    The gradient flows through center, unnormalized normal, area and unit
    normal of every face of ``Xhat``; only terms involving mu_Xhat contribute.
    """
    total, _, grad = gm_loss_gradient_terms(
        X, Xhat, spec,
        target_self=target_self, tile_size=tile_size, threads=threads, deterministic=deterministic,
    )
    return total, grad
