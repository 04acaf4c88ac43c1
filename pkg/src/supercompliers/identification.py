"""Shares and characteristics of supercompliers, compliers and the ca/cn groups.

Every estimator is a difference-of-means regression or a just-identified
2SLS regression of ``h(X) * W`` on ``W`` instrumented by ``Z``, where ``W``
is the indicator that singles out the target group:

============== =================
target         W
============== =================
complier       ``D``
supercomplier  ``Y``
ca             ``(1 - D) Y``
cn             ``D (1 - Y)``
============== =================
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .data import ObservationTable
from .exceptions import DataValidationError, EstimationError, WeakFirstStageError
from .regression import Stack, ols, stacked_regression, tsls

TARGETS = ("population", "complier", "supercomplier", "ca", "cn")
LATENT_TARGETS = ("complier", "supercomplier", "ca", "cn")
TABLE_DIFFERENCES = (
    ("complier", "population"),
    ("supercomplier", "population"),
    ("supercomplier", "complier"),
)

HLike = str | np.ndarray | Sequence[float] | Callable[[ObservationTable], np.ndarray]


@dataclass(frozen=True)
class WaldEstimate:
    """A ratio estimate with robust inference.

    ``value`` equals ``numerator / denominator`` up to floating-point rounding
    (the value itself comes from the 2SLS solve).
    """

    value: float
    se: float
    ci: tuple[float, float]
    numerator: float
    denominator: float
    label: str
    level: float = 0.95

    @classmethod
    def build(cls, value, se, numerator, denominator, label, level=0.95) -> "WaldEstimate":
        crit = stats.norm.ppf(0.5 + level / 2)
        value, se = float(value), float(se)
        return cls(value, se, (value - crit * se, value + crit * se), float(numerator),
                   float(denominator), label, level)

    @property
    def t_stat(self) -> float:
        return self.value / self.se if self.se > 0 else np.inf * np.sign(self.value)

    def to_dict(self) -> dict:
        return {
            "label": self.label, "value": self.value, "se": self.se,
            "ci": list(self.ci), "level": self.level,
            "numerator": self.numerator, "denominator": self.denominator,
        }


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Per-row kappa-type weights and the supercomplier weight ``pi``."""

    kappa: np.ndarray
    kappa0: np.ndarray
    kappa1: np.ndarray
    pi: np.ndarray
    tau: float


def _cluster(table: ObservationTable):
    return table.cluster


def _resolve_h(table: ObservationTable, h: HLike) -> np.ndarray:
    if isinstance(h, str):
        return table.covariate(h)
    if callable(h):
        out = np.asarray(h(table), dtype=float).ravel()
    else:
        out = np.asarray(h, dtype=float).ravel()
    if out.shape[0] != table.n:
        raise ValueError(f"h has {out.shape[0]} values for {table.n} rows")
    if not np.isfinite(out).all():
        raise ValueError("h must be finite")
    return out


def group_indicator(table: ObservationTable, target: str) -> np.ndarray:
    """The per-row variable ``W`` whose arm difference identifies the target's share."""
    y, d = table.y, table.d
    if target == "complier":
        return d.copy()
    if target == "supercomplier":
        return y.copy()
    if target in ("ca", "cn") and not table.y_binary:
        raise DataValidationError(f"target {target!r} requires a binary outcome")
    if target == "ca":
        return (1 - d) * y
    if target == "cn":
        return d * (1 - y)
    raise ValueError(f"unknown target {target!r}; choose from {TARGETS}")


def _arm_difference(v: np.ndarray, z: np.ndarray) -> float:
    return float(v[z == 1].mean() - v[z == 0].mean())


def _diff_of_means(table: ObservationTable, v: np.ndarray, regressor: np.ndarray, label: str,
                   level: float) -> WaldEstimate:
    X = np.column_stack([np.ones(table.n), regressor])
    res = ols(X, v, cluster=_cluster(table), names=["const", "slope"])
    return WaldEstimate.build(res.beta[1], res.se[1], res.beta[1], 1.0, label, level)


def compute_weights(table: ObservationTable, tau: float | None = None) -> WeightSet:
    """Kappa, kappa0, kappa1 and pi weights; ``tau`` defaults to the sample share of ``z = 1``.

    Only with the sample share do the in-sample identities ``mean(kappa) ==
    first stage`` and ``mean(pi) == reduced form`` hold exactly.
    """
    tau = table.tau_hat if tau is None else float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must lie strictly between 0 and 1")
    z, d, y = table.z, table.d, table.y
    kappa = 1 - d * (1 - z) / (1 - tau) - (1 - d) * z / tau
    kappa0 = (1 - d) * (1 - z) / (1 - tau) - (1 - d) * z / tau
    kappa1 = d * z / tau - d * (1 - z) / (1 - tau)
    pi = kappa - (kappa0 * y + kappa1 * (1 - y))
    return WeightSet(kappa, kappa0, kappa1, pi, tau)


def supercomplier_share(table: ObservationTable, level: float = 0.95) -> WaldEstimate:
    """Reduced form: the supercomplier share for binary Y.

    With a non-binary outcome the same number is the share scaled by the
    supercomplier average treatment effect, and is labelled accordingly.
    """
    label = "supercomplier share" if table.y_binary else "TE-scaled supercomplier share"
    return _diff_of_means(table, table.y, table.z, label, level)


def complier_share(table: ObservationTable, level: float = 0.95) -> WaldEstimate:
    """First stage: the treatment complier share."""
    return _diff_of_means(table, table.d, table.z, "complier share", level)


def other_group_shares(table: ObservationTable, level: float = 0.95) -> tuple[WaldEstimate, WaldEstimate]:
    """Shares of the ca and cn groups.

    ca: regress ``(1-D)Y`` on ``1-Z``; cn: regress ``D(1-Y)`` on ``Z``.
    """
    if not table.y_binary:
        raise DataValidationError("ca/cn shares require a binary outcome")
    z, d, y = table.z, table.d, table.y
    ca = _diff_of_means(table, (1 - d) * y, 1 - z, "ca share", level)
    cn = _diff_of_means(table, d * (1 - y), z, "cn share", level)
    return ca, cn


def _mean_label(target: str, table: ObservationTable, suffix: str = "") -> str:
    if target == "supercomplier" and not table.y_binary:
        return "TE-weighted supercomplier mean" + suffix
    return f"{target} mean{suffix}"


def _zero_denominator(target: str, exc: WeakFirstStageError) -> WeakFirstStageError:
    what = "first stage" if target == "complier" else "reduced form"
    return WeakFirstStageError(
        f"zero {what} for target {target!r}: the target share is unidentified in sample",
        statistic=exc.statistic,
    )


def characteristics_wald(table: ObservationTable, h: HLike, target: str = "supercomplier",
                         level: float = 0.95) -> WaldEstimate:
    """Mean of ``h(X)`` in a target group via the Wald ratio, estimated by 2SLS.

    ``h`` is a covariate name, an array with one value per row, or a callable
    taking the table. For ``target="population"`` this is the sample mean.
    """
    hv = _resolve_h(table, h)
    if target == "population":
        res = ols(np.ones((table.n, 1)), hv, cluster=_cluster(table), names=["mean"])
        return WaldEstimate.build(res.beta[0], res.se[0], res.beta[0], 1.0, "population mean", level)
    w = group_indicator(table, target)
    try:
        res = tsls(hv * w, w, table.z, cluster=_cluster(table))
    except WeakFirstStageError as exc:
        raise _zero_denominator(target, exc) from None
    num = _arm_difference(hv * w, table.z)
    den = _arm_difference(w, table.z)
    return WaldEstimate.build(res.beta[-1], res.se[-1], num, den, _mean_label(target, table), level)


def characteristics_plugin(table: ObservationTable, h: HLike, target: str = "supercomplier",
                           tau: float | None = None, level: float = 0.95) -> WaldEstimate:
    """Weighting (plug-in) estimator of a supercomplier or complier mean.

    Equal to ``mean(pi * h) / reduced form`` (``kappa`` and first stage for
    compliers), computed as 2SLS after shifting ``W`` by ``1 - tau``.
    Sampling variation in the estimated ``tau`` is ignored for inference.
    """
    if target not in ("supercomplier", "complier"):
        raise ValueError("plug-in estimator is defined for supercomplier and complier targets")
    hv = _resolve_h(table, h)
    tau = table.tau_hat if tau is None else float(tau)
    w = group_indicator(table, target) - (1 - tau)
    try:
        res = tsls(hv * w, w, table.z, cluster=_cluster(table))
    except WeakFirstStageError as exc:
        raise _zero_denominator(target, exc) from None
    num = _arm_difference(hv * w, table.z)
    den = _arm_difference(w, table.z)
    return WaldEstimate.build(res.beta[-1], res.se[-1], num, den,
                              _mean_label(target, table, " (plug-in)"), level)


@dataclass(frozen=True)
class FinkNotoReport:
    """Share-and-mean assembly vs 2SLS complier characteristics."""

    chi_fn: float
    chi_2sls: float
    s_at: float
    s_c: float
    mu_t: float
    mu_at: float

    @property
    def difference(self) -> float:
        return self.chi_fn - self.chi_2sls

    @property
    def equal(self) -> bool:
        return abs(self.difference) <= 1e-10 * max(1.0, abs(self.chi_2sls))


def fink_noto_equivalence_check(table: ObservationTable, h: HLike) -> FinkNotoReport:
    """Assemble ``((s_AT + s_C) mu_T - s_AT mu_AT) / s_C`` and compare with 2SLS.

    The two are algebraically identical on every sample; a mismatch raises.
    """
    hv = _resolve_h(table, h)
    z, d = table.z, table.d
    p1 = d[z == 1].mean()
    s_at = d[z == 0].mean()
    s_c = p1 - s_at
    if s_c == 0:
        raise WeakFirstStageError("zero first stage: complier share s_C is 0")
    treated1 = (d == 1) & (z == 1)
    treated0 = (d == 1) & (z == 0)
    mu_t = float(hv[treated1].mean()) if treated1.any() else 0.0
    mu_at = float(hv[treated0].mean()) if treated0.any() else 0.0
    chi_fn = ((s_at + s_c) * mu_t - s_at * mu_at) / s_c
    chi = tsls(hv * d, d, z).beta[-1]
    report = FinkNotoReport(float(chi_fn), float(chi), float(s_at), float(s_c), mu_t, mu_at)
    if not report.equal:
        raise EstimationError(
            f"assembly estimator {report.chi_fn!r} differs from 2SLS {report.chi_2sls!r}"
        )
    return report


@dataclass(frozen=True)
class CDFEstimate:
    grid: np.ndarray
    estimates: tuple[WaldEstimate, ...]
    rearranged: np.ndarray | None = None

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])


def characteristics_cdf(table: ObservationTable, covariate: str | np.ndarray, grid,
                        target: str = "supercomplier", rearrange: bool = False,
                        level: float = 0.95) -> CDFEstimate:
    """Pointwise Wald estimates of ``Pr(X <= x | target)`` on a grid.

    Values are raw and need not be monotone; ``rearrange=True`` adds a sorted
    (monotone rearranged) companion series.
    """
    xv = _resolve_h(table, covariate)
    grid = np.asarray(grid, dtype=float).ravel()
    if grid.size == 0:
        raise ValueError("empty grid")
    if np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted")
    ests = tuple(
        characteristics_wald(table, (xv <= g).astype(float), target, level) for g in grid
    )
    rearranged = None
    if rearrange:
        rearranged = np.sort(np.clip([e.value for e in ests], 0.0, 1.0))
    return CDFEstimate(grid, ests, rearranged)


def discretize_equal_frequency(values, bins: int = 20) -> np.ndarray:
    """Integer cell codes: distinct values if there are at most ``bins``, else quantile bins."""
    values = np.asarray(values, dtype=float)
    uniq, codes = np.unique(values, return_inverse=True)
    if uniq.size <= bins:
        return codes.ravel()
    edges = np.quantile(values, np.linspace(0, 1, bins + 1)[1:-1])
    raw = np.searchsorted(edges, values, side="right")
    return np.unique(raw, return_inverse=True)[1].ravel()


def weighted_quantile(values, weights, theta: float) -> float:
    """Minimiser of ``sum_i w_i * rho_theta(x_i - q)`` for nonnegative weights.

    Returns the smallest data point at which the cumulative weight reaches
    ``theta`` times the total.
    """
    if not 0.0 < theta < 1.0:
        raise ValueError("theta must lie strictly between 0 and 1")
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    order = np.argsort(values, kind="stable")
    cw = np.cumsum(weights[order])
    total = cw[-1] if cw.size else 0.0
    if not total > 0:
        raise EstimationError("no supercomplier mass detected: all weights are zero")
    idx = int(np.searchsorted(cw, theta * total, side="left"))
    return float(values[order[min(idx, cw.size - 1)]])


@dataclass(frozen=True)
class QuantileEstimate:
    """Supercomplier quantile with its conditional-weight diagnostics.

    ``se`` and ``ci`` come from inverting the pointwise CDF interval at the
    estimate (Woodruff interval); with discrete X they can be degenerate.
    """

    value: float
    theta: float
    se: float
    ci: tuple[float, float]
    cell_weights: np.ndarray       # E[pi | cell] before clipping
    cell_counts: np.ndarray
    n_clipped: int
    conditioning: str

    def to_dict(self) -> dict:
        return {
            "theta": self.theta, "value": self.value, "se": self.se, "ci": list(self.ci),
            "conditioning": self.conditioning, "n_cells": int(self.cell_weights.size),
            "n_clipped_cells": self.n_clipped,
        }


def conditional_pi_weights(table: ObservationTable, cells: np.ndarray, tau: float | None = None
                           ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell averages of ``pi``: estimates of ``Pr(G = cc | cell)``.

    Returns ``(per-cell weight, per-cell count, per-row weight)``, unclipped.
    """
    pi = compute_weights(table, tau).pi
    codes = np.unique(np.asarray(cells), return_inverse=True)[1].ravel()
    counts = np.bincount(codes)
    cell_w = np.bincount(codes, weights=pi) / counts
    return cell_w, counts, cell_w[codes]


def supercomplier_quantile(table: ObservationTable, covariate: str | np.ndarray, theta: float,
                           conditioning: str = "x", bins: int = 20, tau: float | None = None,
                           level: float = 0.95) -> QuantileEstimate:
    """Supercomplier ``theta``-quantile of a covariate.

    ``pi`` is averaged within cells of V (``"x"``: covariate cells,
    ``"yx"``: outcome-by-covariate cells). Negative cell averages are clipped
    to zero and counted; the quantile minimises the check-function objective
    under the clipped weights.
    """
    if not table.y_binary:
        raise DataValidationError("supercomplier quantiles require a binary outcome")
    xv = _resolve_h(table, covariate)
    xcells = discretize_equal_frequency(xv, bins)
    if conditioning == "x":
        cells = xcells
    elif conditioning == "yx":
        cells = xcells * 2 + table.y.astype(int)
    else:
        raise ValueError("conditioning must be 'x' or 'yx'")
    cell_w, counts, row_w = conditional_pi_weights(table, cells, tau)
    n_clipped = int(np.sum(cell_w < 0))
    clipped = np.clip(row_w, 0.0, None)
    q = weighted_quantile(xv, clipped, theta)

    crit = stats.norm.ppf(0.5 + level / 2)
    try:
        se_f = characteristics_wald(table, (xv <= q).astype(float), "supercomplier", level).se
        lo = weighted_quantile(xv, clipped, min(max(theta - crit * se_f, 1e-12), 1 - 1e-12))
        hi = weighted_quantile(xv, clipped, min(max(theta + crit * se_f, 1e-12), 1 - 1e-12))
        se = (hi - lo) / (2 * crit)
    except EstimationError:
        lo = hi = se = np.nan
    return QuantileEstimate(q, float(theta), float(se), (float(lo), float(hi)), cell_w, counts,
                            n_clipped, conditioning)


@dataclass(frozen=True)
class StratumComponent:
    label: str
    n: int
    share: float            # stratum share of the sample
    tau: float              # E[Z | W]
    reduced_form: float     # RF_W for the target's indicator
    omega: float            # RF_W * tau (1 - tau)
    mean: float | None      # within-stratum Wald mean, None when RF_W == 0


@dataclass(frozen=True)
class StratifiedEstimate:
    estimate: WaldEstimate
    weighted_average: float
    components: tuple[StratumComponent, ...]
    warnings: tuple[str, ...] = ()


def stratum_dummies(labels: np.ndarray) -> tuple[np.ndarray, list[str], np.ndarray]:
    """Indicator columns for all but the first stratum; also returns labels and codes."""
    uniq, codes = np.unique(labels, return_inverse=True)
    codes = codes.ravel()
    dummies = (codes[:, None] == np.arange(1, uniq.size)[None, :]).astype(float)
    return dummies, [str(u) for u in uniq], codes


def stratified_characteristics(table: ObservationTable, h: HLike, target: str = "supercomplier",
                               level: float = 0.95, rtol: float = 1e-8) -> StratifiedEstimate:
    """2SLS with stratum fixed effects plus its explicit per-stratum decomposition.

    The fixed-effects coefficient equals the average of within-stratum means
    weighted by stratum share times ``omega_W = RF_W * tau_W * (1 - tau_W)``.
    A stratum with a zero reduced form gets ``omega_W = 0`` and a warning.
    """
    if table.stratum is None:
        raise DataValidationError("table has no strata")
    if target == "population":
        raise ValueError("stratified estimation targets a latent group")
    hv = _resolve_h(table, h)
    w = group_indicator(table, target)
    z = table.z
    dummies, labels, codes = stratum_dummies(table.stratum)
    exog = np.column_stack([np.ones(table.n), dummies])
    try:
        res = tsls(hv * w, w, z, exog=exog, cluster=_cluster(table),
                   names=["const", *[f"stratum[{lab}]" for lab in labels[1:]], "endog"])
    except WeakFirstStageError as exc:
        raise _zero_denominator(target, exc) from None

    notes: list[str] = []
    comps = []
    num_total = den_total = 0.0
    fe_num = var_total = 0.0
    for k, lab in enumerate(labels):
        m = codes == k
        zs = z[m]
        tau_w = float(zs.mean())
        rf = _arm_difference(w[m], zs)
        delta_hw = _arm_difference((hv * w)[m], zs)
        share = float(m.mean())
        omega = rf * tau_w * (1 - tau_w)
        var_z = tau_w * (1 - tau_w)
        fe_num += share * var_z * delta_hw
        var_total += share * var_z
        if rf == 0.0:
            notes.append(f"stratum {lab!r} has zero reduced form; included with omega = 0")
            mean = None
        else:
            mean = delta_hw / rf
            num_total += share * omega * mean
        den_total += share * omega
        comps.append(StratumComponent(lab, int(m.sum()), share, tau_w, rf, omega, mean))
    if den_total == 0.0:
        raise WeakFirstStageError("all strata have zero reduced form")
    weighted = num_total / den_total
    beta = float(res.beta[-1])
    if abs(beta - weighted) > rtol * max(1.0, abs(beta)):
        msg = f"fixed-effects 2SLS {beta!r} differs from omega-weighted average {weighted!r}"
        if any(c.mean is None for c in comps):
            notes.append(msg)
        else:
            raise EstimationError(msg)
    for note in notes:
        warnings.warn(note, stacklevel=2)
    # numerator/denominator: fixed-effects reduced-form slopes of h*W and W on Z
    est = WaldEstimate.build(beta, res.se[-1], fe_num / var_total, den_total / var_total,
                             _mean_label(target, table, " (stratum FE)"), level)
    return StratifiedEstimate(est, float(weighted), tuple(comps), tuple(notes))


def bias_under_violation(share_cf: float, share_cc: float, mean_cc: float, mean_cf: float) -> float:
    """Limit of the supercomplier Wald mean when compfiers (cf) are present.

    ``mean_cc + xi * (mean_cc - mean_cf)`` with ``xi = share_cf / (share_cc - share_cf)``;
    the bias is linear in the compfier share relative to the reduced form.
    """
    rf = share_cc - share_cf
    if rf == 0:
        raise EstimationError("zero reduced form: share_cc equals share_cf")
    xi = share_cf / rf
    return mean_cc + xi * (mean_cc - mean_cf)


@dataclass(frozen=True, eq=False)
class CharacteristicsRow:
    """Joint estimates of one covariate's mean across targets (one stacked regression)."""

    name: str
    means: Mapping[str, WaldEstimate]
    vcov: np.ndarray
    targets: tuple[str, ...]
    level: float = 0.95

    def difference(self, a: str, b: str) -> tuple[float, float]:
        i, j = self.targets.index(a), self.targets.index(b)
        v = self.vcov[i, i] + self.vcov[j, j] - 2 * self.vcov[i, j]
        return self.means[a].value - self.means[b].value, float(np.sqrt(max(v, 0.0)))

    def differences(self, pairs=TABLE_DIFFERENCES) -> dict[str, tuple[float, float]]:
        return {f"{a}-{b}": self.difference(a, b) for a, b in pairs
                if a in self.targets and b in self.targets}


def stacked_characteristics(table: ObservationTable, h: HLike, targets: Sequence[str] | None = None,
                            name: str | None = None, stratified: bool = False,
                            level: float = 0.95) -> CharacteristicsRow:
    """Estimate a covariate's mean for several targets in one stacked regression.

    The population stack regresses ``h`` on a constant; each latent target is
    a 2SLS stack. Clustering on the observation id (or the table's cluster
    labels) gives the cross-target covariance needed for differences.
    """
    hv = _resolve_h(table, h)
    if targets is None:
        targets = ("population", "complier", "supercomplier") + (("ca", "cn") if table.y_binary else ())
    targets = tuple(targets)
    ids = table.cluster if table.cluster is not None else np.arange(table.n)
    exog = exog_names = None
    if stratified:
        if table.stratum is None:
            raise DataValidationError("table has no strata")
        exog, labels, _ = stratum_dummies(table.stratum)
        exog_names = [f"stratum[{lab}]" for lab in labels[1:]]

    stacks = []
    for t in targets:
        if t == "population":
            stacks.append(Stack(hv, np.empty((table.n, 0)), label=t, ids=ids))
            continue
        w = group_indicator(table, t)
        stacks.append(Stack(hv * w, w, label=t, names=["mean"], ids=ids, instrument=table.z,
                            exog=exog, exog_names=exog_names))
    try:
        res = stacked_regression(stacks)
    except WeakFirstStageError as exc:
        raise WeakFirstStageError(f"zero reduced form or first stage in stacked estimation: {exc}",
                                  exc.statistic) from None
    idx = [res.index("population:const") if t == "population" else res.index(f"{t}:mean") for t in targets]
    vcov = res.vcov[np.ix_(idx, idx)]
    means = {}
    for t, i in zip(targets, idx):
        if t == "population":
            means[t] = WaldEstimate.build(res.beta[i], np.sqrt(res.vcov[i, i]), res.beta[i], 1.0,
                                          "population mean", level)
        else:
            w = group_indicator(table, t)
            means[t] = WaldEstimate.build(res.beta[i], np.sqrt(res.vcov[i, i]),
                                          _arm_difference(hv * w, table.z), _arm_difference(w, table.z),
                                          _mean_label(t, table), level)
    return CharacteristicsRow(name or (h if isinstance(h, str) else "h"), means, vcov, targets, level)


@dataclass(frozen=True)
class GroupSummary:
    share_cc: WaldEstimate
    share_ca: WaldEstimate | None
    share_cn: WaldEstimate | None
    share_complier: WaldEstimate
    characteristics: Mapping[str, CharacteristicsRow] = field(default_factory=dict)


def summarize(table: ObservationTable, covariates: Sequence[str] | None = None,
              stratified: bool = False, level: float = 0.95) -> GroupSummary:
    """Shares of cc/ca/cn/compliers plus joint characteristics for each covariate."""
    cc = supercomplier_share(table, level)
    fs = complier_share(table, level)
    ca = cn = None
    if table.y_binary:
        ca, cn = other_group_shares(table, level)
    covariates = list(table.x_names if covariates is None else covariates)
    rows = {c: stacked_characteristics(table, c, name=c, stratified=stratified, level=level)
            for c in covariates}
    return GroupSummary(cc, ca, cn, fs, rows)
