"""Scratch: FD oracle for the analytic gradient (pre-build check)."""
import numpy as np

from varimesh import KernelSpec, MultiScaleSpec, TriMesh, multiscale_gm_loss, gm_loss_gradient
from varimesh.shapes import icosahedron


def random_blob(rng, scale=1.0):
    mesh = icosahedron()
    v = np.array(mesh.vertices)
    radii = 1.0 + 0.25 * rng.standard_normal(len(v))
    v *= radii[:, None]
    # random rotation via QR
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    v = v @ q.T * scale + rng.standard_normal(3)
    return TriMesh(v, mesh.faces)


def fd_gradient(X, Xhat, spec, h):
    v0 = np.array(Xhat.vertices)
    g = np.zeros_like(v0)
    for i in range(len(v0)):
        for k in range(3):
            vp = v0.copy(); vp[i, k] += h
            vm = v0.copy(); vm[i, k] -= h
            lp, _ = multiscale_gm_loss(X, TriMesh(vp, Xhat.faces), spec)
            lm, _ = multiscale_gm_loss(X, TriMesh(vm, Xhat.faces), spec)
            g[i, k] = (lp - lm) / (2 * h)
    return g


rng = np.random.default_rng(np.random.Philox(7))
worst = 0.0
for pos in ("gaussian", "cauchy", "exponential"):
    for nor in ("current", "varifold", "oriented_varifold"):
        X = random_blob(rng)
        Xhat = random_blob(rng)
        spec = MultiScaleSpec.single(
            KernelSpec(sigma=1.2, position_kernel=pos, normal_kernel=nor)
        )
        bbox = np.linalg.norm(
            np.vstack([X.vertices, Xhat.vertices]).max(0)
            - np.vstack([X.vertices, Xhat.vertices]).min(0)
        )
        h = 1e-5 * bbox
        _, ga = gm_loss_gradient(X, Xhat, spec)
        gf = fd_gradient(X, Xhat, spec, h)
        err = np.abs(ga - gf).max() / max(np.abs(gf).max(), 1e-300)
        worst = max(worst, err)
        print(f"{pos:12s} {nor:18s} max rel err = {err:.3e}")
print("worst:", worst, "PASS" if worst < 1e-5 else "FAIL")
