"""Report assembly: a versioned JSON document plus a fixed-width text rendering.

Reports contain no timestamps or host details, so identical inputs and seeds
produce identical bytes.
"""

from __future__ import annotations

import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import __version__
from .assumption_tests import joint_sharp_test, om_test, om_test_conditional
from .data import DataConfig, ObservationTable
from .dgp import StratificationDGP, sample, true_values
from .exceptions import ConfigError, EstimationError
from .identification import (
    characteristics_cdf,
    characteristics_wald,
    group_indicator,
    stacked_characteristics,
    stratified_characteristics,
    summarize,
    supercomplier_quantile,
)
from .regression import anderson_rubin_ci

SCHEMA_VERSION = "1.0"
OUTPUT_DIR_ENV = "SCK_OUTPUT_DIR"

_SHORT = {"population": "population", "complier": "complier", "supercomplier": "supercomp",
          "ca": "ca", "cn": "cn"}


@dataclass(frozen=True)
class AnalysisOptions:
    """Analysis settings; every field can also be set in the ``analysis:`` config section."""

    level: float = 0.95
    weak_f_threshold: float = 10.0
    draws: int = 100_000
    seed: int = 0
    test_level: float = 0.05
    ar_intervals: bool = False

    @classmethod
    def from_mapping(cls, raw: Mapping | None) -> "AnalysisOptions":
        raw = dict(raw or {})
        allowed = set(cls.__dataclass_fields__)
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown analysis keys: {sorted(unknown)}")
        try:
            opts = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
        if not 0.0 < opts.level < 1.0 or not 0.0 < opts.test_level < 1.0:
            raise ConfigError("levels must lie in (0, 1)")
        return opts

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def load_analysis_config(path: str | os.PathLike) -> tuple[DataConfig, AnalysisOptions]:
    """Read the data mapping and optional ``analysis:`` section from one YAML file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError("config must be a mapping")
    raw = dict(raw)
    analysis = raw.pop("analysis", None)
    return DataConfig.from_mapping(raw), AnalysisOptions.from_mapping(analysis)


class WarningLog:
    """Collects report warnings; each condition code is kept once."""

    def __init__(self):
        self._items: dict[str, str] = {}

    def add(self, code: str, message: str) -> None:
        self._items.setdefault(code, message)

    def __len__(self) -> int:
        return len(self._items)

    def to_list(self) -> list[dict]:
        return [{"code": c, "message": m} for c, m in self._items.items()]


@dataclass
class AnalysisReport:
    command: str
    metadata: dict
    shares: dict = field(default_factory=dict)
    characteristics: list = field(default_factory=list)
    tests: dict = field(default_factory=dict)
    quantiles: list = field(default_factory=list)
    simulation: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "metadata": self.metadata,
            "shares": self.shares,
            "characteristics": self.characteristics,
            "tests": self.tests,
            "quantiles": self.quantiles,
            "simulation": self.simulation,
            "warnings": self.warnings,
        }

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def write(self, out_dir: str | os.PathLike, stem: str | None = None) -> tuple[str, str]:
        """Write ``<stem>.json`` and ``<stem>.txt``; returns their paths."""
        os.makedirs(out_dir, exist_ok=True)
        stem = stem or self.command
        jpath = os.path.join(out_dir, f"{stem}.json")
        tpath = os.path.join(out_dir, f"{stem}.txt")
        with open(jpath, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_json())
        with open(tpath, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(render_text(self))
        return jpath, tpath


def _clean(obj: Any) -> Any:
    """JSON-safe copy: numpy scalars to Python, nan to null, infinities to strings."""
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return None
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    return obj


def _est(e) -> dict:
    return {"value": e.value, "se": e.se, "ci": list(e.ci), "label": e.label}


def _metadata(table: ObservationTable | None, **extra) -> dict:
    meta = {"package_version": __version__}
    if table is not None:
        meta.update({"n": table.n, "tau_hat": table.tau_hat, "y_binary": table.y_binary})
    meta.update(extra)
    return meta


# --------------------------------------------------------------------------
# builders


def _weak_check(log: WarningLog, rf_est, threshold: float) -> None:
    f = (rf_est.value / rf_est.se) ** 2 if rf_est.se > 0 else math.inf
    if f < threshold:
        log.add("weak_reduced_form",
                f"reduced-form F statistic {f:.3f} is below {threshold:g}; "
                "supercomplier estimates are weakly identified")


def build_estimate_report(table: ObservationTable, config: DataConfig, options: AnalysisOptions,
                          input_hash: str, covariates: Sequence[str] | None = None,
                          stratified: bool = False) -> AnalysisReport:
    """Shares plus one stacked regression per covariate: group means and their differences."""
    log = WarningLog()
    covs = list(covariates if covariates is not None else table.x_names)
    summary = summarize(table, covs, stratified=False, level=options.level)
    _weak_check(log, summary.share_cc, options.weak_f_threshold)
    shares = {"supercomplier": _est(summary.share_cc), "complier": _est(summary.share_complier)}
    if summary.share_ca is not None:
        shares["ca"] = _est(summary.share_ca)
        shares["cn"] = _est(summary.share_cn)

    rows = []
    for c in covs:
        row = summary.characteristics[c]
        entry = {
            "covariate": c,
            "means": {t: _est(row.means[t]) for t in row.targets},
            "differences": {k: {"value": v, "se": s} for k, (v, s) in row.differences().items()},
        }
        if stratified:
            entry["stratified"] = _stratified_entry(table, c, options, log)
        if options.ar_intervals:
            w = group_indicator(table, "supercomplier")
            ar = anderson_rubin_ci(table.covariate(c), w, table.z, level=options.level,
                                   cluster=table.cluster)
            entry["ar_interval"] = {"intervals": [list(iv) for iv in ar.intervals],
                                    "unbounded": ar.unbounded}
            for note in ar.warnings:
                log.add("ar_grid", note)
        rows.append(entry)

    meta = _metadata(table, input_sha256=input_hash, config=config.to_dict(),
                     options=options.to_dict(), seed=None, stratified=stratified)
    return AnalysisReport("estimate", meta, shares=shares, characteristics=rows, warnings=log.to_list())


def _stratified_entry(table: ObservationTable, covariate: str, options: AnalysisOptions,
                      log: WarningLog) -> dict:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = stratified_characteristics(table, covariate, "supercomplier", options.level)
    if any(c.mean is None for c in est.components):
        zero = [c.label for c in est.components if c.mean is None]
        log.add("zero_omega_strata", f"strata with zero reduced form get omega = 0: {', '.join(zero)}")
    row = stacked_characteristics(table, covariate, name=covariate, stratified=True, level=options.level)
    return {
        "fe_estimate": _est(est.estimate),
        "weighted_average": est.weighted_average,
        "components": [
            {"label": c.label, "n": c.n, "share": c.share, "tau": c.tau,
             "reduced_form": c.reduced_form, "omega": c.omega, "mean": c.mean}
            for c in est.components
        ],
        "means": {t: _est(row.means[t]) for t in row.targets},
    }


def build_test_report(table: ObservationTable, options: AnalysisOptions, input_hash: str,
                      cells: np.ndarray | None = None, cell_column: str | None = None) -> AnalysisReport:
    """Joint sharp test, the reduced-form OM test, and optionally the per-cell OM test."""
    log = WarningLog()
    tests: dict = {}
    om = om_test(table, options.test_level)
    tests["om"] = om.to_dict()
    if table.y_binary:
        tests["joint"] = joint_sharp_test(table, options.test_level, options.draws, options.seed).to_dict()
    else:
        log.add("joint_test_skipped", "joint sharp test needs a binary outcome; only OM tests were run")
    if cells is not None:
        res = om_test_conditional(table, cells, options.test_level, options.draws, options.seed)
        tests["om_conditional"] = {**res.to_dict(), "cell_column": cell_column}
    if om.reject or any(t.get("reject") for t in tests.values()):
        log.add("assumption_rejected", "at least one test rejects the identifying assumptions")
    meta = _metadata(table, input_sha256=input_hash, options=options.to_dict(), seed=options.seed)
    return AnalysisReport("test", meta, tests=tests, warnings=log.to_list())


def build_quantile_report(table: ObservationTable, covariate: str, thetas: Sequence[float],
                          options: AnalysisOptions, input_hash: str, conditioning: str = "x",
                          bins: int = 20, grid: Sequence[float] | None = None) -> AnalysisReport:
    log = WarningLog()
    qs = []
    for th in thetas:
        q = supercomplier_quantile(table, covariate, th, conditioning, bins, level=options.level)
        if q.n_clipped:
            log.add("clipped_weights", "negative conditional supercomplier weights were clipped to zero")
        qs.append(q.to_dict())
    xv = table.covariate(covariate)
    if grid is None:
        grid = np.unique(np.quantile(xv, [0.1, 0.25, 0.5, 0.75, 0.9]))
    cdf = characteristics_cdf(table, covariate, grid, rearrange=True, level=options.level)
    if np.any(np.diff(cdf.values) < 0) or np.any((cdf.values < 0) | (cdf.values > 1)):
        log.add("cdf_not_monotone", "raw CDF estimates are not a valid CDF; see the rearranged series")
    meta = _metadata(table, input_sha256=input_hash, options=options.to_dict(), seed=None,
                     covariate=covariate, conditioning=conditioning, bins=bins)
    quant = {"covariate": covariate, "quantiles": qs,
             "cdf": {"grid": list(cdf.grid), "estimates": [_est(e) for e in cdf.estimates],
                     "rearranged": list(cdf.rearranged)}}
    return AnalysisReport("quantiles", meta, quantiles=[quant], warnings=log.to_list())


def replication_seed(seed: int, rep: int) -> int:
    """Independent per-replication seed derived from a master seed."""
    return int(np.random.SeedSequence(seed, spawn_key=(rep,)).generate_state(1, np.uint64)[0])


def build_simulation_report(dgp: StratificationDGP, n: int, seed: int, reps: int,
                            options: AnalysisOptions, dgp_hash: str) -> AnalysisReport:
    """Sample the DGP ``reps`` times and compare estimates with the analytic truth."""
    if reps < 1:
        raise ConfigError("reps must be at least 1")
    log = WarningLog()
    truth = true_values(dgp)
    targets = {"supercomplier": truth.share_cc if dgp.y_binary else truth.reduced_form,
               "complier": truth.share_complier}
    if dgp.y_binary:
        targets.update(ca=truth.share_ca, cn=truth.share_cn)
    estimands = {f"share:{k}": v for k, v in targets.items()}
    for t in ("complier", "supercomplier"):
        for c in dgp.covariate_names:
            if dgp.y_binary or t == "complier":
                tv = truth.mean_x_by_target[t][c]
            else:
                tv = truth.te_weighted_mean[c]
            estimands[f"mean:{t}:{c}"] = tv
    records = {k: [] for k in estimands}
    for r in range(reps):
        table = sample(dgp, n, replication_seed(seed, r))
        summary = summarize(table, [], level=options.level)
        _weak_check(log, summary.share_cc, options.weak_f_threshold)
        ests = {"share:supercomplier": summary.share_cc, "share:complier": summary.share_complier}
        if summary.share_ca is not None:
            ests["share:ca"], ests["share:cn"] = summary.share_ca, summary.share_cn
        for key in estimands:
            if key.startswith("mean:"):
                _, t, c = key.split(":")
                try:
                    ests[key] = characteristics_wald(table, c, t, options.level)
                except EstimationError as exc:
                    log.add("estimation_failed", f"{key}: {exc}")
                    continue
            if key in ests:
                records[key].append((ests[key].value, ests[key].se))
    rows = {}
    for key, tv in estimands.items():
        rec = np.array(records[key]).reshape(-1, 2)
        if rec.shape[0] == 0 or tv is None:
            rows[key] = {"truth": tv, "reps": int(rec.shape[0])}
            continue
        within = np.abs(rec[:, 0] - tv) <= 4 * rec[:, 1]
        rows[key] = {
            "truth": tv,
            "mean_estimate": float(rec[:, 0].mean()),
            "mean_se": float(rec[:, 1].mean()),
            "bias": float(rec[:, 0].mean() - tv),
            "share_within_4se": float(within.mean()),
            "reps": int(rec.shape[0]),
        }
    if not dgp.conforming:
        log.add("nonconforming_dgp", "DGP contains defier groups; estimators target Wald limits, not group means")
    meta = _metadata(None, dgp_sha256=dgp_hash, n=n, reps=reps, seed=seed, options=options.to_dict())
    return AnalysisReport("simulate", meta, simulation={"estimands": rows, "dgp": dgp.to_dict()},
                          warnings=log.to_list())


# --------------------------------------------------------------------------
# text rendering

_W = 12


def _num(x, width=_W, digits=4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return f"{'.':>{width}}"
    return f"{x:>{width}.{digits}f}"


def _se(x, width=_W, digits=4) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return " " * width
    return f"{'(' + format(x, f'.{digits}f') + ')':>{width}}"


def render_text(report: AnalysisReport) -> str:
    d = _clean(report.to_dict())
    lines = [f"sck {d['command']} report (schema {SCHEMA_VERSION}, version {d['metadata']['package_version']})"]
    meta = d["metadata"]
    for key in ("input_sha256", "dgp_sha256", "n", "tau_hat", "reps", "seed"):
        if meta.get(key) is not None:
            val = meta[key]
            lines.append(f"  {key:<14}{val:.4f}" if isinstance(val, float) else f"  {key:<14}{val}")
    lines.append("")

    if d["shares"]:
        lines.append("Group shares")
        lines.append(f"  {'group':<16}{'estimate':>{_W}}{'se':>{_W}}")
        for name, e in d["shares"].items():
            lines.append(f"  {name:<16}{_num(e['value'])}{_num(e['se'])}")
        lines.append("")

    if d["characteristics"]:
        targets = list(d["characteristics"][0]["means"])
        diffs = list(d["characteristics"][0]["differences"])
        lines.append("Characteristics: means and differences (standard errors in parentheses)")
        head = f"  {'covariate':<16}" + "".join(f"{_SHORT.get(t, t):>{_W}}" for t in targets)
        head += "".join(f"{_diff_label(k):>{_W}}" for k in diffs)
        lines.append(head)
        for row in d["characteristics"]:
            vals = [row["means"][t] for t in targets] + [row["differences"][k] for k in diffs]
            lines.append(f"  {row['covariate']:<16}" + "".join(_num(v["value"]) for v in vals))
            lines.append(f"  {'':<16}" + "".join(_se(v["se"]) for v in vals))
            if "stratified" in row:
                fe = row["stratified"]["fe_estimate"]
                lines.append(f"  {'  strata FE':<16}{_num(fe['value'])}{_se(fe['se'])}")
            if "ar_interval" in row:
                ivs = ", ".join(f"[{lo}, {hi}]" if isinstance(lo, str) or isinstance(hi, str)
                                else f"[{lo:.4f}, {hi:.4f}]" for lo, hi in row["ar_interval"]["intervals"])
                lines.append(f"  {'  AR set':<16}  {ivs or 'empty'}")
        lines.append("")

    if d["tests"]:
        lines.append("Assumption tests")
        for name, t in d["tests"].items():
            if name == "om":
                lines.append(f"  OM (reduced form >= 0): estimate {t['estimate']:.4f}  se {t['se']:.4f}  "
                             f"p {t['p_value']:.4f}  reject {t['reject']}")
                continue
            lines.append(f"  {name}: theta_min {t['theta_min']:.4f}  critical {t['critical_value']:.4f}  "
                         f"p {t['p_value']:.4f}  reject {t['reject']}  (draws {t['draws']}, seed {t['seed']})")
            for nm, th, se in zip(t["names"], t["theta"], t["se"]):
                lines.append(f"    {nm:<20}{_num(th)}{_se(se)}")
        lines.append("")

    for block in d["quantiles"]:
        lines.append(f"Supercomplier quantiles of {block['covariate']}")
        lines.append(f"  {'theta':<8}{'quantile':>{_W}}{'se':>{_W}}")
        for q in block["quantiles"]:
            lines.append(f"  {q['theta']:<8.3f}{_num(q['value'])}{_num(q['se'])}")
        lines.append(f"  {'x':>{_W}}{'cdf':>{_W}}{'se':>{_W}}{'rearranged':>{_W}}")
        for g, e, r in zip(block["cdf"]["grid"], block["cdf"]["estimates"], block["cdf"]["rearranged"]):
            lines.append(f"  {_num(g)}{_num(e['value'])}{_num(e['se'])}{_num(r)}")
        lines.append("")

    if d["simulation"]:
        lines.append("Simulation: estimates against analytic truth")
        lines.append(f"  {'estimand':<28}{'truth':>{_W}}{'mean est':>{_W}}{'mean se':>{_W}}{'within 4se':>{_W}}")
        for key, r in d["simulation"]["estimands"].items():
            lines.append(f"  {key:<28}{_num(r.get('truth'))}{_num(r.get('mean_estimate'))}"
                         f"{_num(r.get('mean_se'))}{_num(r.get('share_within_4se'), digits=3)}")
        lines.append("")

    lines.append("Warnings")
    if d["warnings"]:
        lines.extend(f"  [{w['code']}] {w['message']}" for w in d["warnings"])
    else:
        lines.append("  none")
    return "\n".join(lines) + "\n"


def _diff_label(key: str) -> str:
    a, b = key.split("-")
    abbrev = {"population": "pop", "complier": "c", "supercomplier": "sc", "ca": "ca", "cn": "cn"}
    return f"{abbrev.get(a, a)}-{abbrev.get(b, b)}"
