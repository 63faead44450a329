"""Mass-univariate general linear model.

Fits an identical design at every vertex of a search space, producing
t-statistic fields, per-vertex residual variance and the unit-normalized
residual fields that drive smoothness estimation. All fits are pure and
vertex-independent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import special, stats

RANK_RTOL = 1e-10
ORTHO_RTOL = 1e-8


@dataclass(frozen=True)
class FieldType:
    """Null distribution of a statistic field: 'gaussian' or 'student_t'."""

    kind: str
    dof: float | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "student_t"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        if self.kind == "student_t":
            if self.dof is None or not np.isfinite(self.dof) or self.dof < 1:
                raise ValueError(f"student_t needs dof >= 1, got {self.dof}")

    @classmethod
    def gaussian(cls) -> "FieldType":
        return cls("gaussian")

    @classmethod
    def student_t(cls, dof: float) -> "FieldType":
        return cls("student_t", float(dof))


@dataclass(frozen=True)
class DesignMatrix:
    """An n_obs x n_reg design with named regressors.

    Rank follows the tolerance rule: singular values greater than
    1e-10 times the largest count toward the rank.
    """

    values: np.ndarray
    regressor_names: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("design matrix must be 2D")
        if len(self.regressor_names) != v.shape[1]:
            raise ValueError("one regressor name per column required")
        object.__setattr__(self, "values", v)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def n_reg(self) -> int:
        return self.values.shape[1]

    @cached_property
    def rank(self) -> int:
        s = np.linalg.svd(self.values, compute_uv=False)
        if s.size == 0:
            return 0
        return int((s > RANK_RTOL * s[0]).sum())

    @classmethod
    def from_csv(cls, path) -> "DesignMatrix":
        """Load a design from CSV with a header row of regressor names."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2:
            raise ValueError(f"{path}: need a header row and at least one data row")
        names = tuple(name.strip() for name in rows[0])
        try:
            values = np.array([[float(x) for x in row] for row in rows[1:]])
        except ValueError as exc:
            raise ValueError(f"{path}: non-numeric design entry ({exc})") from None
        return cls(values, names)


@dataclass
class GlmFit:
    """Per-vertex least-squares fit produced by :func:`fit`."""

    design: DesignMatrix
    betas: np.ndarray      # (n_reg, n_vertices)
    residuals: np.ndarray  # (n_obs, n_vertices)
    sigma2: np.ndarray     # (n_vertices,)
    dof: int


@dataclass
class StatField:
    """Per-vertex statistic values with their null field type."""

    values: np.ndarray
    field_type: FieldType


@dataclass
class ResidualSet:
    """Unit-normalized residual fields u = r / ||r|| per vertex.

    ``norms`` keeps the raw residual lengths so that downstream
    finite differences can use the difference-of-raw-residuals
    approximation; ``flagged`` marks zero-residual vertices (their u is
    the zero vector and they are excluded from smoothness estimation).
    """

    u: np.ndarray        # (n, n_vertices)
    norms: np.ndarray    # (n_vertices,)
    flagged: np.ndarray  # (n_vertices,) bool
    n: int


def fit(data, design: DesignMatrix) -> GlmFit:
    """Fit the design at every vertex by least squares.

    Parameters
    ----------
    data : ndarray
        Shape (n_obs, n_vertices); one column per vertex.
    design : DesignMatrix

    Returns
    -------
    GlmFit with betas, residuals, per-vertex sigma2 = SSR / dof and
    dof = n_obs - rank.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    x = design.values
    if data.shape[0] != design.n_obs:
        raise ValueError(
            f"data has {data.shape[0]} rows, design has {design.n_obs}"
        )
    dof = design.n_obs - design.rank
    if dof < 1:
        raise ValueError(f"no residual degrees of freedom (n_obs={design.n_obs}, "
                         f"rank={design.rank})")
    betas = np.linalg.pinv(x, rcond=RANK_RTOL) @ data
    residuals = data - x @ betas
    sigma2 = (residuals * residuals).sum(axis=0) / dof
    return GlmFit(design=design, betas=betas, residuals=residuals,
                  sigma2=sigma2, dof=dof)


def _contrast_variance_factor(design: DesignMatrix, contrast: np.ndarray) -> float:
    """c' (X'X)^+ c, with an estimability check for rank-deficient designs."""
    x = design.values
    xtx = x.T @ x
    xtx_pinv = np.linalg.pinv(xtx, rcond=RANK_RTOL)
    c_norm = np.linalg.norm(contrast)
    if c_norm > 0:
        reachable = xtx @ (xtx_pinv @ contrast)
        if np.linalg.norm(reachable - contrast) > ORTHO_RTOL * c_norm:
            raise ValueError("contrast is not estimable under this design")
    return float(contrast @ xtx_pinv @ contrast)


def t_map(glm_fit: GlmFit, contrast) -> StatField:
    """t statistic field for a contrast of regression coefficients.

    t = c'beta / sqrt(sigma2 * c'(X'X)^+ c) per vertex. Vertices with
    zero residual variance get +/-inf by the sign of the effect, or 0
    when the effect is also zero.
    """
    contrast = np.asarray(contrast, dtype=float).ravel()
    if contrast.shape[0] != glm_fit.design.n_reg:
        raise ValueError(
            f"contrast length {contrast.shape[0]} != {glm_fit.design.n_reg} regressors"
        )
    var_factor = _contrast_variance_factor(glm_fit.design, contrast)
    effect = contrast @ glm_fit.betas
    denom2 = glm_fit.sigma2 * var_factor
    with np.errstate(divide="ignore", invalid="ignore"):
        t = effect / np.sqrt(denom2)
    zero_var = denom2 == 0
    if np.any(zero_var):
        t = np.where(zero_var & (effect > 0), np.inf, t)
        t = np.where(zero_var & (effect < 0), -np.inf, t)
        t = np.where(zero_var & (effect == 0), 0.0, t)
    return StatField(values=t, field_type=FieldType.student_t(glm_fit.dof))


def normalized_residuals(glm_fit: GlmFit) -> ResidualSet:
    """Unit-normalize the residual vector at every vertex (zero-residual
    vertices are flagged, not fatal)."""
    r = glm_fit.residuals
    norms = np.sqrt((r * r).sum(axis=0))
    flagged = norms == 0.0
    safe = np.where(flagged, 1.0, norms)
    u = r / safe
    u[:, flagged] = 0.0
    return ResidualSet(u=u, norms=norms, flagged=flagged, n=r.shape[0])


def z_equivalent(stat: StatField) -> np.ndarray:
    """Gaussian Z-score equivalents of a Student-t field.

    Z = Phi^-1(1 - P(T_dof >= t)), evaluated through log tail
    probabilities so far-tail values do not underflow; antisymmetric in
    t. Gaussian fields pass through unchanged.
    """
    t = np.asarray(stat.values, dtype=float)
    if stat.field_type.kind == "gaussian":
        return t.copy()
    dof = stat.field_type.dof
    z = np.empty_like(t, dtype=float)
    pos = t >= 0
    # ndtri_exp(log p) = Phi^-1(p): stable for tiny tail masses
    z[pos] = -special.ndtri_exp(stats.t.logsf(t[pos], dof))
    z[~pos] = special.ndtri_exp(stats.t.logsf(-t[~pos], dof))
    nonfinite = ~np.isfinite(t)
    if np.any(nonfinite):
        z[nonfinite] = t[nonfinite]
    return z


def read_contrast_csv(path) -> np.ndarray:
    """Read a contrast row vector from CSV (single numeric row)."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row]
    if len(rows) != 1:
        raise ValueError(f"{path}: expected a single contrast row, got {len(rows)}")
    try:
        return np.array([float(x) for x in rows[0]])
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric contrast entry ({exc})") from None
