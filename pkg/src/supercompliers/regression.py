"""OLS, just-identified 2SLS and stacked regressions with robust/clustered variance.

Small-sample corrections follow Stata conventions: HC1 ``n / (n - k)`` for
heteroskedasticity-robust variance and ``G/(G-1) * (n-1)/(n-k)`` for
cluster-robust variance. Least squares is solved through a QR factorisation;
normal equations are never formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg, stats

from .exceptions import EstimationError, RankDeficiencyError, WeakFirstStageError

RANK_RTOL = 1e-10
WEAK_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class CoefficientEstimates:
    beta: np.ndarray
    vcov: np.ndarray
    n: int
    names: tuple[str, ...]
    first_stage_f: float | None = None
    n_clusters: int | None = None

    def __post_init__(self):
        k = len(self.beta)
        if self.vcov.shape != (k, k) or len(self.names) != k:
            raise ValueError("beta, vcov and names have inconsistent dimensions")

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.vcov), 0.0, None))

    def index(self, name: str) -> int:
        return self.names.index(name)

    def coef(self, name: str) -> float:
        return float(self.beta[self.index(name)])

    def stderr(self, name: str) -> float:
        return float(self.se[self.index(name)])


def _as_matrix(a, n: int | None = None) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if n is not None and a.shape[0] != n:
        raise ValueError(f"expected {n} rows, got {a.shape[0]}")
    return a


def _default_names(prefix: str, k: int) -> list[str]:
    return [f"{prefix}{j}" for j in range(k)]


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    n, k = X.shape
    if n <= k:
        raise RankDeficiencyError(f"need more observations than regressors (n={n}, k={k})", list(names))
    s = np.linalg.svd(X, compute_uv=False)
    if s[0] == 0.0 or s[-1] / s[0] < RANK_RTOL:
        _, r, piv = linalg.qr(X, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > RANK_RTOL * diag[0])) if diag[0] > 0 else 0
        bad = [names[j] for j in piv[rank:]]
        raise RankDeficiencyError(f"design is rank deficient; collinear column(s): {', '.join(bad)}", bad)


@dataclass
class _Fit:
    """Per-equation pieces needed to assemble a sandwich variance."""

    beta: np.ndarray
    bread: np.ndarray      # (k, k) inverse Hessian
    scores: np.ndarray     # (n, k) per-row moment contributions
    names: list[str]
    first_stage_f: float | None = None


def _fit_ols(X: np.ndarray, y: np.ndarray, names: Sequence[str]) -> _Fit:
    _check_rank(X, names)
    q, r = np.linalg.qr(X)
    beta = linalg.solve_triangular(r, q.T @ y)
    rinv = linalg.solve_triangular(r, np.eye(r.shape[0]))
    bread = rinv @ rinv.T
    resid = y - X @ beta
    return _Fit(beta, bread, X * resid[:, None], list(names))


def _partial_out(W: np.ndarray, *vs: np.ndarray) -> list[np.ndarray]:
    q, _ = np.linalg.qr(W)
    return [v - q @ (q.T @ v) for v in vs]


def _fit_iv(y: np.ndarray, x: np.ndarray, z: np.ndarray, W: np.ndarray, names: Sequence[str],
            cluster_codes: np.ndarray | None = None, n_clusters: int | None = None) -> _Fit:
    """Just-identified IV: one endogenous ``x`` instrumented by ``z``, exogenous ``W``."""
    _check_rank(np.column_stack([W, z]), [*names[:-1], "instrument"])
    zt, xt, yt = _partial_out(W, z, x, y)
    cross = float(zt @ xt)
    scale = float(np.linalg.norm(zt) * np.linalg.norm(xt))

    fs = _fit_ols(np.column_stack([W, z]), x, [*names[:-1], "instrument"])
    fs_var = _sandwich([fs], [cluster_codes], n_clusters)[-1, -1]
    fs_f = float(fs.beta[-1] ** 2 / fs_var) if fs_var > 0 else (0.0 if fs.beta[-1] == 0 else np.inf)
    if scale == 0.0 or abs(cross) <= WEAK_RTOL * scale:
        raise WeakFirstStageError(
            f"weak/zero first stage: instrument is (numerically) uncorrelated with the "
            f"endogenous regressor (first-stage F = {fs_f:.3g})",
            statistic=fs_f,
        )

    b_endog = float(zt @ yt) / cross
    qw, rw = np.linalg.qr(W)
    gamma = linalg.solve_triangular(rw, qw.T @ (y - b_endog * x))
    beta = np.append(gamma, b_endog)
    X = np.column_stack([W, x])
    Z = np.column_stack([W, z])
    resid = y - X @ beta
    bread = np.linalg.inv(Z.T @ X)
    return _Fit(beta, bread, Z * resid[:, None], list(names), fs_f)


def _codes(ids) -> tuple[np.ndarray, int]:
    _, codes = np.unique(np.asarray(ids), return_inverse=True)
    codes = codes.ravel()
    return codes, int(codes.max()) + 1


def _sandwich(fits: Sequence[_Fit], codes: Sequence[np.ndarray | None], n_clusters: int | None,
              dof: tuple[int, int] | None = None) -> np.ndarray:
    """Joint sandwich over equations whose rows are tied together by cluster codes.

    With ``codes`` all ``None`` there is one equation and the HC1 form is used.
    ``dof`` overrides the ``(n, k)`` used in the small-sample correction.
    """
    k_tot = sum(f.beta.shape[0] for f in fits)
    n_dof, k_dof = dof if dof is not None else (sum(f.scores.shape[0] for f in fits), k_tot)
    bread = linalg.block_diag(*[f.bread for f in fits])
    if all(c is None for c in codes):
        if len(fits) != 1:
            raise ValueError("multiple equations need cluster codes")
        s = fits[0].scores
        meat = s.T @ s * (n_dof / (n_dof - k_dof))
    else:
        g = n_clusters
        summed = np.zeros((g, k_tot))
        col = 0
        for f, c in zip(fits, codes):
            for j in range(f.scores.shape[1]):
                summed[:, col + j] = np.bincount(c, weights=f.scores[:, j], minlength=g)
            col += f.scores.shape[1]
        if g < 2:
            raise EstimationError("cluster-robust variance needs at least two clusters")
        meat = summed.T @ summed * (g / (g - 1)) * ((n_dof - 1) / (n_dof - k_dof))
    v = bread @ meat @ bread.T
    return (v + v.T) / 2


def ols(design, response, *, cluster=None, names: Sequence[str] | None = None) -> CoefficientEstimates:
    """Least squares with HC1 (default) or cluster-robust (``cluster=ids``) covariance."""
    y = np.asarray(response, dtype=float).ravel()
    X = _as_matrix(design, y.shape[0])
    names = list(names) if names is not None else _default_names("b", X.shape[1])
    fit = _fit_ols(X, y, names)
    if cluster is None:
        v = _sandwich([fit], [None], None)
        g = None
    else:
        codes, g = _codes(cluster)
        if codes.shape[0] != y.shape[0]:
            raise ValueError("cluster ids must have one entry per row")
        v = _sandwich([fit], [codes], g)
    return CoefficientEstimates(fit.beta, v, y.shape[0], tuple(names), n_clusters=g)


def tsls(response, endogenous, instrument, exog=None, *, cluster=None,
         names: Sequence[str] | None = None) -> CoefficientEstimates:
    """Just-identified two-stage least squares.

    ``exog`` defaults to an intercept column. The coefficient on the
    endogenous regressor is last in ``beta``. Raises
    :class:`WeakFirstStageError` when the instrument carries no
    (numerically detectable) variation in the endogenous regressor after
    partialling out ``exog``.
    """
    y = np.asarray(response, dtype=float).ravel()
    n = y.shape[0]
    x = np.asarray(endogenous, dtype=float).ravel()
    z = np.asarray(instrument, dtype=float).ravel()
    if x.shape[0] != n or z.shape[0] != n:
        raise ValueError("response, endogenous and instrument lengths differ")
    W = np.ones((n, 1)) if exog is None else _as_matrix(exog, n)
    if names is None:
        names = (["const"] if exog is None else _default_names("w", W.shape[1])) + ["endog"]
    names = list(names)
    if len(names) != W.shape[1] + 1:
        raise ValueError("names must cover exog columns plus the endogenous regressor")
    codes, g = (None, None) if cluster is None else _codes(cluster)
    fit = _fit_iv(y, x, z, W, names, codes, g)
    v = _sandwich([fit], [codes], g)
    return CoefficientEstimates(fit.beta, v, n, tuple(names), first_stage_f=fit.first_stage_f, n_clusters=g)


@dataclass
class Stack:
    """One equation of a stacked regression.

    A stack-specific intercept is always added. With ``instrument`` set,
    ``regressors`` must be a single endogenous column estimated by 2SLS.
    ``exog`` holds additional controls (e.g. stratum dummies) placed after
    the intercept. ``ids`` are the observation (cluster) ids of the rows; when
    omitted, the ``cluster`` argument of :func:`stacked_regression` is used.
    """

    response: np.ndarray
    regressors: np.ndarray
    label: str = ""
    names: Sequence[str] | None = None
    ids: np.ndarray | None = None
    instrument: np.ndarray | None = None
    exog: np.ndarray | None = None
    exog_names: Sequence[str] | None = None


def stacked_regression(stacks: Sequence[Stack | tuple], cluster=None) -> CoefficientEstimates:
    """Estimate several equations jointly, clustering on observation ids across stacks.

    Each stack is fitted separately (the joint design is block diagonal) and
    the covariance is the cluster-robust sandwich of the stacked scores, so
    covariances between coefficients of different stacks are estimated.
    Coefficient names are ``"<label>:<name>"``.
    """
    if not stacks:
        raise ValueError("no stacks")
    fits, id_list = [], []
    for s_idx, s in enumerate(stacks):
        if not isinstance(s, Stack):
            s = Stack(*s)
        y = np.asarray(s.response, dtype=float).ravel()
        n = y.shape[0]
        R = _as_matrix(s.regressors)
        if R.shape[0] != n:
            raise ValueError(f"stack {s_idx}: response has {n} rows, regressors {R.shape[0]}")
        ids = s.ids if s.ids is not None else cluster
        if ids is None:
            raise ValueError("stacked regression needs observation ids")
        ids = np.asarray(ids)
        if ids.shape[0] != n:
            raise ValueError(f"stack {s_idx}: {n} rows but {ids.shape[0]} ids (mismatched stack lengths)")
        label = s.label or f"s{s_idx + 1}"
        exog = np.ones((n, 1))
        exog_names = ["const"]
        if s.exog is not None:
            extra = _as_matrix(s.exog, n)
            exog = np.column_stack([exog, extra])
            exog_names += list(s.exog_names or _default_names("w", extra.shape[1]))
        reg_names = list(s.names or _default_names("theta", R.shape[1]))
        names = [f"{label}:{nm}" for nm in exog_names + reg_names]
        if s.instrument is not None:
            if R.shape[1] != 1:
                raise ValueError("instrumented stacks take exactly one endogenous regressor")
            fit = _fit_iv(y, R[:, 0], np.asarray(s.instrument, dtype=float).ravel(), exog, names, None)
        else:
            fit = _fit_ols(np.column_stack([exog, R]), y, names)
        fits.append(fit)
        id_list.append(ids)

    _, inverse = np.unique(np.concatenate(id_list), return_inverse=True)
    inverse = inverse.ravel()
    g = int(inverse.max()) + 1
    codes, start = [], 0
    for ids in id_list:
        codes.append(inverse[start:start + ids.shape[0]])
        start += ids.shape[0]
    v = _sandwich(fits, codes, g)
    beta = np.concatenate([f.beta for f in fits])
    names = tuple(nm for f in fits for nm in f.names)
    n_tot = sum(f.scores.shape[0] for f in fits)
    return CoefficientEstimates(beta, v, n_tot, names, n_clusters=g)


@dataclass(frozen=True)
class ARConfidenceSet:
    """Anderson-Rubin confidence set as a union of intervals.

    An endpoint of ``-inf``/``inf`` means the set was still accepting at the
    edge of the search grid; ``unbounded`` is then true.
    """

    intervals: tuple[tuple[float, float], ...]
    level: float
    point_estimate: float | None
    grid: np.ndarray = field(repr=False)
    critical_value: float = np.nan
    warnings: tuple[str, ...] = ()

    @property
    def unbounded(self) -> bool:
        return any(np.isinf(lo) or np.isinf(hi) for lo, hi in self.intervals)

    @property
    def empty(self) -> bool:
        return not self.intervals

    def contains(self, c: float) -> bool:
        return any(lo <= c <= hi for lo, hi in self.intervals)


class _ARStatistic:
    """Robust AR statistic for H0: mean of h in the target group equals ``c``.

    The reduced-form response ``(h - c) * w`` is linear in ``c``, so its slope
    on ``z`` is ``a - c b`` and its HC1 variance is a quadratic in ``c``.
    """

    def __init__(self, h, w, z, cluster=None):
        h, w, z = (np.asarray(v, dtype=float).ravel() for v in (h, w, z))
        X = np.column_stack([np.ones_like(z), z])
        fa = _fit_ols(X, h * w, ["const", "z"])
        fb = _fit_ols(X, w, ["const", "z"])
        n = z.shape[0]
        # singleton clusters reproduce HC1 exactly; dof is per equation
        codes, g = (np.arange(n), n) if cluster is None else _codes(cluster)
        v = _sandwich([fa, fb], [codes, codes], g, dof=(n, 2))
        self.a, self.b = fa.beta[1], fb.beta[1]
        # slopes this small relative to the data scale are float dust around zero
        scale = float(np.std(w)) / max(float(np.std(z)), np.finfo(float).tiny)
        if abs(self.b) <= WEAK_RTOL * scale:
            self.b = 0.0
        self.vaa, self.vab, self.vbb = v[1, 1], v[1, 3], v[3, 3]

    def __call__(self, c):
        c = np.asarray(c, dtype=float)
        num = (self.a - c * self.b) ** 2
        den = self.vaa - 2 * c * self.vab + c * c * self.vbb
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num > 0, np.inf, 0.0))
        return out


def anderson_rubin_ci(h, w, z, *, level: float = 0.95, grid=None, n_grid: int = 401,
                      width_se: float = 10.0, rtol: float = 1e-6, cluster=None) -> ARConfidenceSet:
    """Invert the AR test for the Wald ratio ``Δ E[h w] / Δ E[w]`` over a grid.

    ``w`` is the group indicator product (``Y`` for supercompliers, ``D`` for
    compliers, ...). Candidate values ``c`` are accepted when the robust
    t-test of the ``z`` slope in the regression of ``(h - c) w`` on ``z``
    does not reject. Accepted grid runs are refined at their boundaries by
    bisection to ``rtol`` relative width.
    """
    stat = _ARStatistic(h, w, z, cluster)
    crit = float(stats.chi2.ppf(level, 1))
    notes: list[str] = []
    point = float(stat.a / stat.b) if stat.b != 0 else None

    if grid is None:
        if point is not None:
            var_point = (stat.vaa - 2 * point * stat.vab + point ** 2 * stat.vbb) / stat.b ** 2
            half = width_se * np.sqrt(max(var_point, 0.0))
            if not half > 0:
                half = width_se * max(1.0, abs(point))
            center = point
        else:
            hv = np.asarray(h, dtype=float)
            center = float(hv.mean())
            half = width_se * (float(hv.std()) + 1.0)
            notes.append("reduced form is exactly zero; AR set is unbounded on the grid")
        grid = np.linspace(center - half, center + half, n_grid)
    else:
        grid = np.sort(np.asarray(grid, dtype=float).ravel())
        if grid.size == 0:
            raise ValueError("empty AR grid")
        if point is not None and not grid[0] <= point <= grid[-1]:
            msg = f"AR grid [{grid[0]:.6g}, {grid[-1]:.6g}] does not bracket the Wald estimate {point:.6g}"
            warnings.warn(msg, stacklevel=2)
            notes.append(msg)

    accept = stat(grid) <= crit

    def _edge(inside: float, outside: float) -> float:
        lo, hi = inside, outside
        while abs(hi - lo) > rtol * max(1.0, abs(lo)):
            mid = 0.5 * (lo + hi)
            if stat(mid) <= crit:
                lo = mid
            else:
                hi = mid
        return lo

    intervals = []
    i, m = 0, grid.size
    while i < m:
        if not accept[i]:
            i += 1
            continue
        j = i
        while j + 1 < m and accept[j + 1]:
            j += 1
        lo = -np.inf if i == 0 else _edge(grid[i], grid[i - 1])
        hi = np.inf if j == m - 1 else _edge(grid[j], grid[j + 1])
        intervals.append((float(lo), float(hi)))
        i = j + 1
    return ARConfidenceSet(tuple(intervals), level, point, grid, crit, tuple(notes))
