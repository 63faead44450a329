"""Lipschitz-Killing curvature and resel estimation.

The top-dimension curvature l_D is estimated from finite differences of
normalized residual fields along the components that tile the search
space: one term per simplex on meshes (with a 1/D! factor), one term per
unit lattice cube (volume 1, no factorial). Differences of raw residuals
are divided by the residual norm at the component's base vertex, the
approximation du ~= dr / ||r|| that holds when the error variance varies
smoothly. Lower-order curvatures follow the isotropic power-law
interpolation l_d = mu_d (l_D / mu_D)^(d/D).

Everything here depends only on residual values and connectivity, never
on vertex coordinates: warping or embedding the mesh leaves l_D
bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import IntrinsicVolumes, LatticeSpace, MeshSpace
from .glm import ResidualSet

FOUR_LOG2 = 4.0 * math.log(2.0)


@dataclass(frozen=True)
class ReselVector:
    """Curvatures l_0..l_D with their resel-unit counterparts.

    resels_d = l_d / (4 ln 2)^(d/2); resels_0 equals the Euler
    characteristic of the search space. ``fwhm`` carries per-axis
    smoothness in voxels for lattice spaces (None for meshes).
    """

    lkc: tuple[float, ...]
    resels: tuple[float, ...]
    fwhm: tuple[float, ...] | None = None

    @property
    def dimension(self) -> int:
        return len(self.lkc) - 1

    @classmethod
    def from_lkc(cls, lkc, fwhm=None) -> "ReselVector":
        lkc = tuple(float(v) for v in lkc)
        resels = tuple(v / FOUR_LOG2 ** (d / 2.0) for d, v in enumerate(lkc))
        return cls(lkc=lkc, resels=resels, fwhm=tuple(fwhm) if fwhm is not None else None)

    @classmethod
    def from_resels(cls, resels, fwhm=None) -> "ReselVector":
        resels = tuple(float(v) for v in resels)
        lkc = tuple(v * FOUR_LOG2 ** (d / 2.0) for d, v in enumerate(resels))
        return cls(lkc=lkc, resels=resels, fwhm=tuple(fwhm) if fwhm is not None else None)

    @classmethod
    def from_top_resels(cls, resels_top: float, mu: IntrinsicVolumes,
                        fwhm=None) -> "ReselVector":
        """Fill sub-dimensional resel counts from a known top count by the
        same power-law interpolation used for curvature estimates."""
        top_lkc = float(resels_top) * FOUR_LOG2 ** (mu.dimension / 2.0)
        return lkc_vector(top_lkc, mu, fwhm=fwhm)


def _gram_sqrt_det(diffs: list[np.ndarray]) -> np.ndarray:
    """sqrt|G| per component for D in {1,2,3}; diffs[k] has shape (n, N)."""
    d = len(diffs)
    if d == 1:
        return np.sqrt((diffs[0] * diffs[0]).sum(axis=0))
    if d == 2:
        g00 = (diffs[0] * diffs[0]).sum(axis=0)
        g11 = (diffs[1] * diffs[1]).sum(axis=0)
        g01 = (diffs[0] * diffs[1]).sum(axis=0)
        det = g00 * g11 - g01 * g01
        return np.sqrt(np.maximum(det, 0.0))
    g = np.empty((3, 3) + diffs[0].shape[1:])
    for i in range(3):
        for j in range(i, 3):
            g[i, j] = g[j, i] = (diffs[i] * diffs[j]).sum(axis=0)
    det = (g[0, 0] * (g[1, 1] * g[2, 2] - g[1, 2] * g[1, 2])
           - g[0, 1] * (g[0, 1] * g[2, 2] - g[1, 2] * g[0, 2])
           + g[0, 2] * (g[0, 1] * g[1, 2] - g[1, 1] * g[0, 2]))
    return np.sqrt(np.maximum(det, 0.0))


def _lattice_lkc_top(res: ResidualSet, space: LatticeSpace, symmetric: bool) -> float:
    d = space.dimension
    dims = space.dims
    base_shape = tuple(n - 1 for n in dims)
    if any(n == 0 for n in base_shape):
        raise ValueError("lattice extent too small: no complete components")
    u = res.u.reshape((res.n,) + dims)
    norms = res.norms.reshape(dims)
    usable = space.mask & ~res.flagged.reshape(dims)

    base = tuple(slice(0, n) for n in base_shape)
    valid = usable[base].copy()
    shifts = []
    for ax in range(d):
        sl = tuple(slice(1, None) if a == ax else slice(0, base_shape[a])
                   for a in range(d))
        shifts.append(sl)
        valid &= usable[sl]
    if not valid.any():
        raise ValueError("no complete components inside the mask")

    u_base = u[(slice(None),) + base]
    n_base = norms[base]
    diffs = []
    for ax in range(d):
        sl = (slice(None),) + shifts[ax]
        n_nb = norms[shifts[ax]]
        denom = 0.5 * (n_base + n_nb) if symmetric else n_base
        denom = np.where(valid, denom, 1.0)
        delta = (u[sl] * (n_nb / denom) - u_base * (n_base / denom))
        diffs.append(delta.reshape(res.n, -1))
    contrib = _gram_sqrt_det(diffs)
    return float(contrib[valid.ravel()].sum())


def _mesh_lkc_top(res: ResidualSet, space: MeshSpace, symmetric: bool) -> float:
    simplices = space.simplices
    if len(simplices) == 0:
        raise ValueError("no complete components inside the mask")
    ok = ~res.flagged[simplices].any(axis=1)
    simplices = simplices[ok]
    if len(simplices) == 0:
        raise ValueError("every component touches a flagged zero-residual vertex")
    d = space.dimension
    base = simplices[:, 0]
    n_base = res.norms[base]
    diffs = []
    for j in range(1, d + 1):
        other = simplices[:, j]
        n_other = res.norms[other]
        denom = 0.5 * (n_base + n_other) if symmetric else n_base
        diffs.append(res.u[:, other] * (n_other / denom)
                     - res.u[:, base] * (n_base / denom))
    contrib = _gram_sqrt_det(diffs)
    return float(contrib.sum()) / math.factorial(d)


def lkc_top(residuals: ResidualSet, space, *, norm_mode: str = "source") -> float:
    """Estimate l_D from finite differences of normalized residuals.

    Parameters
    ----------
    residuals : ResidualSet
        Defined on every vertex of ``space``; flagged vertices and
        components touching them are skipped.
    space : LatticeSpace or MeshSpace
    norm_mode : {'source', 'symmetric'}
        Which residual norm divides the raw-residual differences: the
        component's base vertex (default) or the mean of the two edge
        endpoints (sensitivity checks only; immaterial to first order).

    Returns
    -------
    float
        l_D >= 0. Lattice components are unit forward-difference cubes;
        mesh components are the simplices, with the 1/D! factor.
    """
    if norm_mode not in ("source", "symmetric"):
        raise ValueError(f"norm_mode must be 'source' or 'symmetric', got {norm_mode!r}")
    symmetric = norm_mode == "symmetric"
    if residuals.u.shape[1] != space.n_points:
        raise ValueError(
            f"residuals cover {residuals.u.shape[1]} vertices, space has {space.n_points}"
        )
    if isinstance(space, LatticeSpace):
        return _lattice_lkc_top(residuals, space, symmetric)
    if isinstance(space, MeshSpace):
        return _mesh_lkc_top(residuals, space, symmetric)
    raise TypeError(f"not a search space: {type(space).__name__}")


def lkc_vector(lkc_top_value: float, mu: IntrinsicVolumes,
               fwhm=None) -> ReselVector:
    """Interpolate l_0..l_D from the top curvature and intrinsic volumes.

    l_d = mu_d (l_D / mu_D)^(d/D); equivalently
    resels_d = mu_d (resels_D / mu_D)^(d/D).
    """
    d_top = mu.dimension
    if mu[d_top] <= 0:
        raise ValueError(f"mu_D must be positive, got {mu[d_top]}")
    if lkc_top_value < 0:
        raise ValueError(f"l_D must be nonnegative, got {lkc_top_value}")
    ratio = lkc_top_value / mu[d_top]
    lkc = tuple(mu[d] * ratio ** (d / d_top) for d in range(d_top + 1))
    return ReselVector.from_lkc(lkc, fwhm=fwhm)


def fwhm_estimate(residuals: ResidualSet, space: LatticeSpace) -> np.ndarray:
    """Per-axis smoothness of the residual fields, in voxels.

    For each axis the mean squared normalized-residual difference over
    in-mask forward edges gives the axis roughness lambda_i; the
    reported width is FWHM_i = sqrt(4 ln 2 / lambda_i), +inf for a
    perfectly flat axis.
    """
    if not isinstance(space, LatticeSpace):
        raise TypeError("fwhm_estimate needs a lattice space")
    if residuals.u.shape[1] != space.n_points:
        raise ValueError("residuals do not cover the lattice")
    dims = space.dims
    u = residuals.u.reshape((residuals.n,) + dims)
    norms = residuals.norms.reshape(dims)
    usable = space.mask & ~residuals.flagged.reshape(dims)
    out = np.empty(space.dimension)
    for ax in range(space.dimension):
        lo = tuple(slice(0, -1) if a == ax else slice(None) for a in range(space.dimension))
        hi = tuple(slice(1, None) if a == ax else slice(None) for a in range(space.dimension))
        valid = usable[lo] & usable[hi]
        if not valid.any():
            raise ValueError(f"no valid edges along axis {ax}")
        denom = np.where(valid, norms[lo], 1.0)
        delta = (u[(slice(None),) + hi] * (norms[hi] / denom)
                 - u[(slice(None),) + lo] * (norms[lo] / denom))
        lam = float((delta * delta).sum(axis=0)[valid].mean())
        out[ax] = np.inf if lam == 0 else math.sqrt(FOUR_LOG2 / lam)
    return out
