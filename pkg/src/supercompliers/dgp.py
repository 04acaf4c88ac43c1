"""Exact simulator over the 16-group extended principal stratification.

A DGP is a finite mixture: stratum -> group -> covariate support point, with
``Z ~ Bernoulli(tau)`` drawn independently within each stratum. Because every
law has finite support, every population quantity is an exact finite sum over
"atoms" (stratum, group, support point, z), which makes this module the
ground truth that the estimators are checked against.

Seeding: a master seed ``s`` and a fixed block size of ``BLOCK_SIZE`` rows.
Block ``b`` draws from ``SeedSequence(s, spawn_key=(b,))``, so a sample is
identical whether blocks are generated serially or in parallel.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import yaml

from .data import Group, ObservationTable
from .exceptions import ConfigError, InequalityViolation

BLOCK_SIZE = 1 << 16
SUM_TOL = 1e-12

INEQUALITY_NAMES = ("cn_share", "ca_share", "cc_share")
INEQUALITY_DESCRIPTIONS = {
    "cn_share": "Pr(Y=0, D=1 | Z=1) - Pr(Y=0, D=1 | Z=0) >= 0",
    "ca_share": "Pr(Y=1, D=0 | Z=0) - Pr(Y=1, D=0 | Z=1) >= 0",
    "cc_share": "Pr(Y=1 | Z=1) - Pr(Y=1 | Z=0) >= 0",
}


@dataclass(frozen=True, eq=False)
class DiscreteLaw:
    """Finite-support law of the covariate vector within one group.

    ``outcomes`` optionally attaches potential outcomes ``(Y0, Y1)`` to each
    support point, replacing the group's binary values; this is how
    non-binary-outcome DGPs are expressed.
    """

    support: np.ndarray
    probs: np.ndarray
    outcomes: np.ndarray | None = None

    def __post_init__(self):
        support = np.asarray(self.support, dtype=float)
        if support.ndim == 1:
            support = support[:, None]
        probs = np.asarray(self.probs, dtype=float).ravel()
        if support.shape[0] != probs.shape[0]:
            raise ValueError("support and probs lengths differ")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"covariate law must be a probability vector (sums to {probs.sum()!r})")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "probs", probs)
        if self.outcomes is not None:
            out = np.asarray(self.outcomes, dtype=float)
            if out.shape != (probs.shape[0], 2):
                raise ValueError("outcomes must hold one (Y0, Y1) pair per support point")
            object.__setattr__(self, "outcomes", out)

    @classmethod
    def point(cls, value: float | Sequence[float] = 0.0) -> "DiscreteLaw":
        return cls(np.atleast_2d(np.asarray(value, dtype=float)), [1.0])

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    def to_dict(self) -> dict:
        out = {"support": self.support.tolist(), "probs": self.probs.tolist()}
        if self.outcomes is not None:
            out["outcomes"] = self.outcomes.tolist()
        return out


@dataclass(frozen=True, eq=False)
class Stratum:
    label: str
    dgp: "StratificationDGP"
    prob: float


@dataclass(frozen=True, eq=False)
class StratificationDGP:
    """Group shares, assignment probability and per-group covariate laws.

    Groups absent from ``covariate_law`` get a point mass at zero. Use
    :meth:`stratified` to build a DGP whose assignment probability and group
    composition vary by stratum.
    """

    shares: Mapping[Group, float]
    tau: float
    covariate_law: Mapping[Group, DiscreteLaw] = field(default_factory=dict)
    covariate_names: tuple[str, ...] = ()
    strata: tuple[Stratum, ...] | None = None

    def __post_init__(self):
        shares = {Group(g): float(p) for g, p in dict(self.shares).items()}
        full = {g: shares.get(g, 0.0) for g in Group}
        vals = np.array(list(full.values()))
        if np.any(vals < 0) or abs(vals.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"group shares must be nonnegative and sum to 1 (sum={vals.sum()!r})")
        if not 0.0 < float(self.tau) < 1.0:
            raise ValueError("tau must lie strictly between 0 and 1")
        laws = {Group(g): law for g, law in dict(self.covariate_law).items()}
        names = tuple(self.covariate_names)
        dims = {law.dim for law in laws.values()}
        if len(dims) > 1:
            raise ValueError("covariate laws have different dimensions")
        dim = dims.pop() if dims else max(len(names), 1)
        if not names:
            names = tuple(f"x{j + 1}" for j in range(dim)) if laws else ()
        elif len(names) != dim:
            raise ValueError("covariate_names does not match the law dimension")
        for g in Group:
            laws.setdefault(g, DiscreteLaw.point(np.zeros(max(dim, 1))))
        object.__setattr__(self, "shares", full)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "covariate_law", laws)
        object.__setattr__(self, "covariate_names", names)
        if self.strata is not None:
            object.__setattr__(self, "strata", tuple(self.strata))

    @classmethod
    def stratified(cls, strata: Iterable[Stratum | tuple]) -> "StratificationDGP":
        """Mixture of within-stratum DGPs; top-level fields are the pooled laws."""
        strata = tuple(s if isinstance(s, Stratum) else Stratum(*s) for s in strata)
        probs = np.array([s.prob for s in strata])
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > SUM_TOL:
            raise ValueError("stratum probabilities must sum to 1")
        names = strata[0].dgp.covariate_names
        if any(s.dgp.covariate_names != names for s in strata):
            raise ValueError("strata must share covariate names")
        if any(s.dgp.strata is not None for s in strata):
            raise ValueError("nested strata are not supported")
        shares = {g: sum(s.prob * s.dgp.shares[g] for s in strata) for g in Group}
        tau = float(sum(s.prob * s.dgp.tau for s in strata))
        laws = {}
        for g in Group:
            total = shares[g]
            sup, pr, outs = [], [], []
            has_out = any(s.dgp.covariate_law[g].outcomes is not None for s in strata)
            for s in strata:
                law = s.dgp.covariate_law[g]
                weight = s.prob * s.dgp.shares[g] / total if total > 0 else s.prob
                sup.append(law.support)
                pr.append(law.probs * weight)
                if has_out:
                    outs.append(law.outcomes if law.outcomes is not None
                                else np.tile(g.potentials[2:], (law.probs.size, 1)))
            p = np.concatenate(pr)
            laws[g] = DiscreteLaw(np.vstack(sup), p / p.sum(), np.vstack(outs) if has_out else None)
        return cls(shares, tau, laws, names, strata)

    @property
    def y_binary(self) -> bool:
        return all(law.outcomes is None for law in self.covariate_law.values())

    @property
    def conforming(self) -> bool:
        """No treatment or outcome defiers."""
        return all(self.shares[g] == 0.0 for g in Group if not g.admissible)

    def components(self) -> tuple[Stratum, ...]:
        return self.strata if self.strata is not None else (Stratum("", self, 1.0),)

    def to_dict(self) -> dict:
        if self.strata is not None:
            return {
                "covariates": list(self.covariate_names),
                "strata": [{"label": s.label, "prob": s.prob, "dgp": s.dgp.to_dict()} for s in self.strata],
            }
        groups = {}
        for g in Group:
            if self.shares[g] == 0.0:
                continue
            groups[g.value] = {"share": self.shares[g], "law": self.covariate_law[g].to_dict()}
        return {"tau": self.tau, "covariates": list(self.covariate_names), "groups": groups}

    @classmethod
    def from_dict(cls, raw: Mapping) -> "StratificationDGP":
        try:
            names = tuple(raw.get("covariates", ()))
            if "strata" in raw:
                strata = [Stratum(str(s["label"]), cls.from_dict({"covariates": list(names), **s["dgp"]}),
                                  float(s["prob"])) for s in raw["strata"]]
                return cls.stratified(strata)
            shares, laws = {}, {}
            for key, entry in raw["groups"].items():
                g = Group(key)
                shares[g] = float(entry["share"])
                if "law" in entry:
                    law = entry["law"]
                    laws[g] = DiscreteLaw(law["support"], law["probs"], law.get("outcomes"))
            return cls(shares, float(raw["tau"]), laws, names)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid DGP specification: {exc}") from None


def load_dgp(path: str | os.PathLike) -> StratificationDGP:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read DGP file {path}: {exc}") from None
    if not isinstance(raw, Mapping):
        raise ConfigError("DGP file must contain a mapping")
    return StratificationDGP.from_dict(raw)


def save_dgp(dgp: StratificationDGP, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(dgp.to_dict(), fh, sort_keys=False)


# --------------------------------------------------------------------------
# atoms


@dataclass(frozen=True, eq=False)
class _Atoms:
    """Enumerated (stratum, group, support point) cells, before drawing Z."""

    prob: np.ndarray
    stratum: np.ndarray
    group: np.ndarray          # index into GROUPS
    x: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    tau: np.ndarray            # assignment probability of the atom's stratum


GROUPS = tuple(Group)


def _atoms(dgp: StratificationDGP) -> _Atoms:
    cols = {k: [] for k in ("prob", "stratum", "group", "x", "y0", "y1", "tau")}
    for s_idx, s in enumerate(dgp.components()):
        sub = s.dgp
        for g_idx, g in enumerate(GROUPS):
            p = sub.shares[g]
            if p == 0.0:
                continue
            law = sub.covariate_law[g]
            m = law.probs.size
            cols["prob"].append(s.prob * p * law.probs)
            cols["stratum"].append(np.full(m, s_idx))
            cols["group"].append(np.full(m, g_idx))
            cols["x"].append(law.support)
            if law.outcomes is None:
                _, _, y0, y1 = g.potentials
                cols["y0"].append(np.full(m, float(y0)))
                cols["y1"].append(np.full(m, float(y1)))
            else:
                cols["y0"].append(law.outcomes[:, 0])
                cols["y1"].append(law.outcomes[:, 1])
            cols["tau"].append(np.full(m, sub.tau))
    return _Atoms(**{k: np.concatenate(v) if k != "x" else np.vstack(v) for k, v in cols.items()})


_D0 = np.array([g.potentials[0] for g in GROUPS], dtype=float)
_D1 = np.array([g.potentials[1] for g in GROUPS], dtype=float)


def _realize(atoms: _Atoms, idx: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = atoms.group[idx]
    d = np.where(z == 1, _D1[g], _D0[g])
    y = np.where(d == 1, atoms.y1[idx], atoms.y0[idx])
    return d, y


def _sample_block(atoms: _Atoms, cum: np.ndarray, seed: int, block: int, size: int):
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block,)))
    # one (size, 2) draw keeps each row's uniforms independent of the block length
    u = rng.random((size, 2))
    idx = np.minimum(np.searchsorted(cum, u[:, 0] * cum[-1], side="right"), cum.size - 1)
    z = (u[:, 1] < atoms.tau[idx]).astype(float)
    return idx, z


def sample(dgp: StratificationDGP, n: int, seed: int = 0, *, return_groups: bool = False,
           workers: int = 1):
    """Draw ``n`` rows: group and covariates from the mixture, ``Z`` independently,
    then ``D = D_Z(G)`` and ``Y = Y_D(G)``.

    Deterministic in ``(dgp, n, seed)`` regardless of ``workers``. With
    ``return_groups=True`` also returns the per-row :class:`Group` labels.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    atoms = _atoms(dgp)
    cum = np.cumsum(atoms.prob)
    n_blocks = -(-n // BLOCK_SIZE)
    sizes = [min(BLOCK_SIZE, n - b * BLOCK_SIZE) for b in range(n_blocks)]
    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(lambda b: _sample_block(atoms, cum, seed, b, sizes[b]), range(n_blocks)))
    else:
        parts = [_sample_block(atoms, cum, seed, b, sizes[b]) for b in range(n_blocks)]
    idx = np.concatenate([p[0] for p in parts])
    z = np.concatenate([p[1] for p in parts])
    d, y = _realize(atoms, idx, z)
    stratum = None
    if dgp.strata is not None:
        labels = np.array([s.label for s in dgp.strata])
        stratum = labels[atoms.stratum[idx]]
    table = ObservationTable(z=z, d=d, y=y, x=atoms.x[idx], x_names=dgp.covariate_names,
                             stratum=stratum, y_binary=dgp.y_binary)
    if return_groups:
        return table, np.array(GROUPS, dtype=object)[atoms.group[idx]]
    return table


# --------------------------------------------------------------------------
# observed distributions and rationalization


@dataclass(frozen=True, eq=False)
class ObservedDistribution:
    """``P(Y, D | Z)`` for both arms; arrays indexed ``[y, d]``."""

    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        for name in ("p0", "p1"):
            a = np.asarray(getattr(self, name), dtype=float).reshape(2, 2)
            if np.any(a < -SUM_TOL) or abs(a.sum() - 1.0) > SUM_TOL:
                raise ValueError(f"{name} must be a probability table over (Y, D)")
            object.__setattr__(self, name, a)

    @classmethod
    def from_cells(cls, arm0: Mapping[tuple[int, int], float], arm1: Mapping[tuple[int, int], float]):
        """Build from ``{(y, d): prob}`` mappings, one per instrument arm."""
        p0, p1 = np.zeros((2, 2)), np.zeros((2, 2))
        for (y, d), p in arm0.items():
            p0[y, d] = p
        for (y, d), p in arm1.items():
            p1[y, d] = p
        return cls(p0, p1)

    def arm(self, z: int) -> np.ndarray:
        return self.p1 if z == 1 else self.p0

    @property
    def inequality_lhs(self) -> tuple[float, float, float]:
        """Left-hand sides of the three sharp inequalities (cn, ca, cc shares)."""
        cn = self.p1[0, 1] - self.p0[0, 1]
        ca = self.p0[1, 0] - self.p1[1, 0]
        cc = self.p1[1].sum() - self.p0[1].sum()
        return float(cn), float(ca), float(cc)

    def max_abs_difference(self, other: "ObservedDistribution") -> float:
        return float(max(np.abs(self.p0 - other.p0).max(), np.abs(self.p1 - other.p1).max()))


def induce(dgp: StratificationDGP) -> ObservedDistribution:
    """Exact ``P(Y, D | Z)`` implied by a DGP (pooled over strata)."""
    atoms = _atoms(dgp)
    tabs = []
    for z in (0, 1):
        pz = atoms.prob * (atoms.tau if z == 1 else 1 - atoms.tau)
        d, y = _realize(atoms, np.arange(atoms.prob.size), np.full(atoms.prob.size, z))
        tab = np.zeros((2, 2))
        if not np.isin(y, (0.0, 1.0)).all():
            raise ValueError("observed (Y, D) cells are defined for binary outcomes only")
        np.add.at(tab, (y.astype(int), d.astype(int)), pz)
        tabs.append(tab / pz.sum())
    return ObservedDistribution(*tabs)


def check_inequalities(observed: ObservedDistribution, tol: float = SUM_TOL) -> list[str]:
    """Names of the sharp inequalities that the distribution violates."""
    return [name for name, v in zip(INEQUALITY_NAMES, observed.inequality_lhs) if v < -tol]


def rationalize(observed: ObservedDistribution, tau: float = 0.5,
                covariate_names: Sequence[str] = ()) -> StratificationDGP:
    """Construct conforming group shares that induce ``observed`` exactly.

    Ambiguous mass is split evenly between aa/ac and between nn/nc; the
    f-groups get zero share. Raises :class:`InequalityViolation` naming the
    violated inequalities when no conforming DGP exists.
    """
    bad = check_inequalities(observed)
    if bad:
        detail = "; ".join(f"inequality {b} violated ({INEQUALITY_DESCRIPTIONS[b]})" for b in bad)
        raise InequalityViolation(detail, bad)
    p0, p1 = observed.p0, observed.p1
    cn, ca, cc = (max(v, 0.0) for v in observed.inequality_lhs)
    shares = {
        Group.aa: 0.5 * p0[1, 1],
        Group.ac: 0.5 * p0[1, 1],
        Group.an: p0[0, 1],
        Group.na: p1[1, 0],
        Group.nn: 0.5 * p1[0, 0],
        Group.nc: 0.5 * p1[0, 0],
        Group.ca: ca,
        Group.cn: cn,
        Group.cc: cc,
    }
    shares = {g: max(float(p), 0.0) for g, p in shares.items()}
    total = sum(shares.values())
    # float dust only; the construction sums to one exactly in real arithmetic
    shares = {g: p / total for g, p in shares.items()}
    laws = {}
    if covariate_names:
        laws = {g: DiscreteLaw.point(np.zeros(len(covariate_names))) for g in shares}
    return StratificationDGP(shares, tau, laws, tuple(covariate_names))


# --------------------------------------------------------------------------
# analytic truth


@dataclass(frozen=True, eq=False)
class AnalyticTruth:
    """Population quantities of a DGP, computed as exact finite sums.

    ``mean_x_by_target`` holds group means of each covariate; ``wald_limit``
    holds the probability limits of the Wald estimators (equal to the group
    means when the DGP conforms). Entries are ``None`` when undefined.
    """

    shares: Mapping[Group, float]
    share_cc: float
    share_ca: float
    share_cn: float
    share_complier: float
    first_stage: float
    reduced_form: float
    late: float | None
    mean_x_by_target: Mapping[str, Mapping[str, float | None]]
    wald_limit: Mapping[str, Mapping[str, float | None]]
    inequality_lhs: tuple[float, float, float]
    te_weighted_mean: Mapping[str, float | None]
    fe_limit: Mapping[str, float | None] | None
    _atoms: _Atoms = field(repr=False)
    _names: tuple[str, ...] = field(repr=False)

    def _cc_marginal(self, covariate: str) -> tuple[np.ndarray, np.ndarray]:
        j = self._names.index(covariate)
        a = self._atoms
        cc = a.group == GROUPS.index(Group.cc)
        if not cc.any() or a.prob[cc].sum() == 0:
            raise ValueError("DGP has no supercompliers")
        vals, inv = np.unique(a.x[cc, j], return_inverse=True)
        probs = np.bincount(inv.ravel(), weights=a.prob[cc]) / a.prob[cc].sum()
        return vals, probs

    def cc_cdf(self, covariate: str, x: float | np.ndarray) -> np.ndarray | float:
        """``Pr(X <= x | G = cc)``."""
        vals, probs = self._cc_marginal(covariate)
        cdf = np.cumsum(probs)
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.searchsorted(vals, xs, side="right")
        out = np.where(idx > 0, cdf[np.maximum(idx - 1, 0)], 0.0)
        return float(out[0]) if np.ndim(x) == 0 else out

    def cc_quantile(self, covariate: str, theta: float) -> float:
        """Smallest support point with cc-group CDF at least ``theta``."""
        vals, probs = self._cc_marginal(covariate)
        cdf = np.cumsum(probs)
        return float(vals[min(int(np.searchsorted(cdf, theta - 1e-14, side="left")), vals.size - 1)])

    def cc_probability_given(self, covariate: str) -> dict[float, float]:
        """``Pr(G = cc | X = v)`` for each support value ``v`` of a covariate."""
        j = self._names.index(covariate)
        a = self._atoms
        cc = a.group == GROUPS.index(Group.cc)
        out = {}
        for v in np.unique(a.x[:, j]):
            m = a.x[:, j] == v
            out[float(v)] = float(a.prob[m & cc].sum() / a.prob[m].sum())
        return out


def _group_mask(a: _Atoms, groups: Iterable[Group]) -> np.ndarray:
    idx = [GROUPS.index(g) for g in groups]
    return np.isin(a.group, idx)


_TARGET_GROUPS = {
    "complier": (Group.ca, Group.cn, Group.cc, Group.cf),
    "supercomplier": (Group.cc,),
    "ca": (Group.ca,),
    "cn": (Group.cn,),
}


def _indicator(target: str, d: np.ndarray, y: np.ndarray) -> np.ndarray:
    return {"complier": d, "supercomplier": y, "ca": (1 - d) * y, "cn": d * (1 - y)}[target]


def true_values(dgp: StratificationDGP) -> AnalyticTruth:
    """All population quantities of the DGP, without simulation."""
    a = _atoms(dgp)
    names = dgp.covariate_names
    shares = dict(dgp.shares)
    share_complier = sum(shares[g] for g in Group if g.treatment_type == "c")

    # per-arm expectations over atoms
    n_atoms = a.prob.size
    arm = {}
    for z in (0, 1):
        pz = a.prob * (a.tau if z == 1 else 1 - a.tau)
        d, y = _realize(a, np.arange(n_atoms), np.full(n_atoms, z))
        arm[z] = (pz / pz.sum(), d, y)

    def arm_diff(f) -> float:
        w1, d1, y1 = arm[1]
        w0, d0, y0 = arm[0]
        return float(w1 @ f(d1, y1) - w0 @ f(d0, y0))

    first_stage = arm_diff(lambda d, y: d)
    reduced_form = arm_diff(lambda d, y: y)
    late = reduced_form / first_stage if first_stage != 0 else None

    means: dict[str, dict[str, float | None]] = {"population": {}}
    wald: dict[str, dict[str, float | None]] = {"population": {}}
    for j, nm in enumerate(names):
        x = a.x[:, j]
        means["population"][nm] = float(a.prob @ x)
        wald["population"][nm] = float(a.prob @ x)
    for target, groups in _TARGET_GROUPS.items():
        mask = _group_mask(a, groups)
        mass = a.prob[mask].sum()
        den = arm_diff(lambda d, y, t=target: _indicator(t, d, y))
        means[target], wald[target] = {}, {}
        for j, nm in enumerate(names):
            x = a.x[:, j]
            means[target][nm] = float(a.prob[mask] @ x[mask] / mass) if mass > 0 else None
            if den != 0:
                num = arm_diff(lambda d, y, t=target, x=x: x * _indicator(t, d, y))
                wald[target][nm] = num / den
            else:
                wald[target][nm] = None

    cc = _group_mask(a, (Group.cc,))
    te = a.y1 - a.y0
    te_den = float(a.prob[cc] @ te[cc])
    te_weighted = {nm: (float(a.prob[cc] @ (a.x[cc, j] * te[cc])) / te_den if te_den != 0 else None)
                   for j, nm in enumerate(names)}

    if dgp.y_binary:
        lhs = induce(dgp).inequality_lhs
    else:
        lhs = (float("nan"),) * 3

    fe_limit = None
    if dgp.strata is not None:
        fe_limit = {}
        for nm in names:
            num = den = 0.0
            for s in dgp.strata:
                sub = true_values(s.dgp)
                omega = sub.reduced_form * s.dgp.tau * (1 - s.dgp.tau)
                if sub.wald_limit["supercomplier"].get(nm) is not None:
                    num += s.prob * omega * sub.wald_limit["supercomplier"][nm]
                den += s.prob * omega
            fe_limit[nm] = num / den if den != 0 else None

    return AnalyticTruth(
        shares=shares,
        share_cc=shares[Group.cc],
        share_ca=shares[Group.ca],
        share_cn=shares[Group.cn],
        share_complier=share_complier,
        first_stage=first_stage,
        reduced_form=reduced_form,
        late=late,
        mean_x_by_target=means,
        wald_limit=wald,
        inequality_lhs=lhs,
        te_weighted_mean=te_weighted,
        fe_limit=fe_limit,
        _atoms=a,
        _names=names,
    )


# --------------------------------------------------------------------------
# special constructions


def variance_gap_example(mu_y: float) -> float:
    """``var(XY | Z=1) - var(X (Y - 1 + tau) | Z=1)`` in the binary-X construction.

    ``tau = 0.5``, ``X ~ Bernoulli(0.5)`` independent of ``Y`` given ``Z = 1``,
    ``Pr(Y = 1 | Z = 1) = mu_y``. Positive values mean the Wald numerator is
    noisier than the plug-in numerator.
    """
    if not 0.0 <= mu_y <= 1.0:
        raise ValueError("mu_y must lie in [0, 1]")
    return 0.25 * mu_y - 0.0625


def variance_gap_dgp(mu_y: float) -> StratificationDGP:
    """A DGP realising the variance-gap construction (aa and nn types only)."""
    if not 0.0 <= mu_y <= 1.0:
        raise ValueError("mu_y must lie in [0, 1]")
    law = DiscreteLaw([0.0, 1.0], [0.5, 0.5])
    return StratificationDGP({Group.aa: mu_y, Group.nn: 1.0 - mu_y}, 0.5,
                             {Group.aa: law, Group.nn: law}, ("x",))


@dataclass(frozen=True)
class VarianceGapSimulation:
    mu_y: float
    estimate: float
    mcse: float
    analytic: float
    n_treated: int


def simulate_variance_gap(mu_y: float, n: int, seed: int = 0) -> VarianceGapSimulation:
    """Sample the construction and estimate the variance difference in the ``Z = 1`` arm.

    The Monte Carlo SE is the delta-method SE of a difference of sample variances.
    """
    table = sample(variance_gap_dgp(mu_y), n, seed)
    m = table.z == 1
    x, y = table.covariate("x")[m], table.y[m]
    a = x * y
    b = x * (y - 0.5)
    est = float(a.var() - b.var())
    psi = (a - a.mean()) ** 2 - (b - b.mean()) ** 2
    mcse = float(psi.std(ddof=1) / np.sqrt(psi.size))
    return VarianceGapSimulation(mu_y, est, mcse, variance_gap_example(mu_y), int(m.sum()))


def violation_dgp(share_cf: float, share_cc: float, other_shares: Mapping[Group, float] | None = None,
                  covariate_laws: Mapping[Group, DiscreteLaw] | None = None, tau: float = 0.5,
                  covariate_names: Sequence[str] = ()) -> StratificationDGP:
    """A DGP with compfiers (cf) alongside supercompliers.

    ``other_shares`` defaults to placing the remaining mass on never-takers
    (``nn``). The result deliberately breaks outcome monotonicity.
    """
    shares = {Group.cf: float(share_cf), Group.cc: float(share_cc)}
    if other_shares is None:
        rest = 1.0 - share_cf - share_cc
        if rest < -SUM_TOL:
            raise ValueError("share_cf + share_cc exceeds 1")
        shares[Group.nn] = max(rest, 0.0)
    else:
        for g, p in other_shares.items():
            g = Group(g)
            if g in shares:
                raise ValueError(f"group {g.value} given twice")
            shares[g] = float(p)
    return StratificationDGP(shares, tau, dict(covariate_laws or {}), tuple(covariate_names))
