"""Observation tables, the 16-group taxonomy, and CSV/config ingestion."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np
import yaml

from .exceptions import ConfigError, DataValidationError

MISSING_TOKENS = frozenset({"", "NA", "N/A", "NaN", "nan", "."})

_TYPE_POTENTIALS = {
    # response type -> (value when input is 0, value when input is 1)
    "a": (1, 1),
    "n": (0, 0),
    "c": (0, 1),
    "f": (1, 0),
}


class Group(enum.Enum):
    """One cell of the extended principal stratification.

    The first letter is the treatment-response type (how D reacts to Z),
    the second the outcome-response type (how Y reacts to D): always taker,
    never taker, complier, defier.
    """

    aa = "aa"
    an = "an"
    ac = "ac"
    af = "af"
    na = "na"
    nn = "nn"
    nc = "nc"
    nf = "nf"
    ca = "ca"
    cn = "cn"
    cc = "cc"
    cf = "cf"
    fa = "fa"
    fn = "fn"
    fc = "fc"
    ff = "ff"

    @property
    def treatment_type(self) -> str:
        return self.value[0]

    @property
    def outcome_type(self) -> str:
        return self.value[1]

    @property
    def potentials(self) -> tuple[int, int, int, int]:
        return group_to_potentials(self)

    @property
    def admissible(self) -> bool:
        """True if allowed under treatment and outcome monotonicity."""
        return self.treatment_type != "f" and self.outcome_type != "f"

    @property
    def is_complier(self) -> bool:
        return self.treatment_type == "c"

    def treatment(self, z: int) -> int:
        return _TYPE_POTENTIALS[self.treatment_type][z]

    def outcome(self, d: int) -> int:
        return _TYPE_POTENTIALS[self.outcome_type][d]


ADMISSIBLE_GROUPS = tuple(g for g in Group if g.admissible)


def group_to_potentials(g: Group) -> tuple[int, int, int, int]:
    """Return ``(D0, D1, Y0, Y1)`` for a group."""
    d0, d1 = _TYPE_POTENTIALS[g.treatment_type]
    y0, y1 = _TYPE_POTENTIALS[g.outcome_type]
    return d0, d1, y0, y1


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ObservationTable:
    """Rectangular (Z, D, Y, X, stratum, cluster) data consumed by every estimator.

    Arrays are copied and made read-only on construction.
    """

    z: np.ndarray
    d: np.ndarray
    y: np.ndarray
    x: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    x_names: tuple[str, ...] = ()
    stratum: np.ndarray | None = None
    cluster: np.ndarray | None = None
    y_binary: bool = True

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float).ravel()
        d = np.asarray(self.d, dtype=float).ravel()
        y = np.asarray(self.y, dtype=float).ravel()
        n = z.shape[0]
        if n == 0:
            raise DataValidationError("empty table")
        if d.shape[0] != n or y.shape[0] != n:
            raise DataValidationError("z, d and y must have the same length")
        x = np.asarray(self.x, dtype=float)
        if x.size == 0:
            x = np.empty((n, 0))
        if x.ndim == 1:
            x = x[:, None]
        if x.shape[0] != n:
            raise DataValidationError(f"x has {x.shape[0]} rows, expected {n}")
        names = tuple(self.x_names)
        if not names:
            names = tuple(f"x{j + 1}" for j in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise DataValidationError("x_names does not match the number of covariate columns")
        if len(set(names)) != len(names):
            raise DataValidationError("duplicate covariate names")

        if not np.isin(z, (0.0, 1.0)).all():
            raise DataValidationError("non-binary instrument")
        if not np.isin(d, (0.0, 1.0)).all():
            raise DataValidationError("non-binary treatment")
        if self.y_binary and not np.isin(y, (0.0, 1.0)).all():
            raise DataValidationError("non-binary outcome (set y_binary=False to allow)")
        if not np.isfinite(y).all():
            raise DataValidationError("outcome contains non-finite values")
        if not np.isfinite(x).all():
            raise DataValidationError("covariates contain missing or non-finite values")
        share = z.mean()
        if not 0.0 < share < 1.0:
            raise DataValidationError("degenerate assignment arm: all rows have the same z")

        object.__setattr__(self, "z", _frozen(z))
        object.__setattr__(self, "d", _frozen(d))
        object.__setattr__(self, "y", _frozen(y))
        object.__setattr__(self, "x", _frozen(x))
        object.__setattr__(self, "x_names", names)

        for attr in ("stratum", "cluster"):
            labels = getattr(self, attr)
            if labels is None:
                continue
            labels = np.asarray(labels)
            if labels.ndim != 1 or labels.shape[0] != n:
                raise DataValidationError(f"{attr} must be one label per row")
            object.__setattr__(self, attr, _frozen(labels))

        if self.stratum is not None:
            for label in np.unique(self.stratum):
                zs = z[self.stratum == label]
                if not 0.0 < zs.mean() < 1.0:
                    raise DataValidationError(
                        f"degenerate assignment arm in stratum {str(label)!r}"
                    )

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def tau_hat(self) -> float:
        """Sample share assigned to ``z = 1``."""
        return float(self.z.mean())

    def covariate(self, name: str) -> np.ndarray:
        try:
            j = self.x_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}; have {list(self.x_names)}") from None
        return self.x[:, j]

    def subset(self, mask: np.ndarray) -> "ObservationTable":
        mask = np.asarray(mask)
        return ObservationTable(
            z=self.z[mask],
            d=self.d[mask],
            y=self.y[mask],
            x=self.x[mask],
            x_names=self.x_names,
            stratum=None if self.stratum is None else self.stratum[mask],
            cluster=None if self.cluster is None else self.cluster[mask],
            y_binary=self.y_binary,
        )

    def with_stratum(self, labels: Sequence | np.ndarray) -> "ObservationTable":
        return ObservationTable(
            z=self.z, d=self.d, y=self.y, x=self.x, x_names=self.x_names,
            stratum=np.asarray(labels), cluster=self.cluster, y_binary=self.y_binary,
        )

    def to_csv(self, target: TextIO | str | os.PathLike) -> None:
        """Write the table in the standard CSV schema (z, d, y, covariates, stratum, cluster)."""
        header = ["z", "d", "y", *self.x_names]
        if self.stratum is not None:
            header.append("stratum")
        if self.cluster is not None:
            header.append("cluster")

        def _fmt(v: float) -> str:
            return str(int(v)) if float(v).is_integer() else repr(float(v))

        def _write(fh):
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i in range(self.n):
                row = [_fmt(self.z[i]), _fmt(self.d[i]), _fmt(self.y[i])]
                row += [_fmt(v) for v in self.x[i]]
                if self.stratum is not None:
                    row.append(str(self.stratum[i]))
                if self.cluster is not None:
                    row.append(str(self.cluster[i]))
                w.writerow(row)

        if isinstance(target, (str, os.PathLike)):
            with open(target, "w", encoding="utf-8", newline="") as fh:
                _write(fh)
        else:
            _write(target)


def concat_tables(tables: Iterable[ObservationTable], stratum_labels: Sequence | None = None) -> ObservationTable:
    """Row-bind tables; optionally tag each block with a stratum label."""
    tables = list(tables)
    if not tables:
        raise ValueError("no tables to concatenate")
    names = tables[0].x_names
    if any(t.x_names != names for t in tables):
        raise ValueError("tables have different covariates")
    if stratum_labels is not None:
        stratum = np.concatenate([np.repeat(np.asarray([lab]), t.n) for lab, t in zip(stratum_labels, tables)])
    elif all(t.stratum is not None for t in tables):
        stratum = np.concatenate([t.stratum for t in tables])
    else:
        stratum = None
    return ObservationTable(
        z=np.concatenate([t.z for t in tables]),
        d=np.concatenate([t.d for t in tables]),
        y=np.concatenate([t.y for t in tables]),
        x=np.vstack([t.x for t in tables]),
        x_names=names,
        stratum=stratum,
        y_binary=all(t.y_binary for t in tables),
    )


@dataclass(frozen=True)
class DataConfig:
    """Maps logical variables to CSV column names."""

    z: str = "z"
    d: str = "d"
    y: str = "y"
    covariates: tuple[str, ...] = ()
    stratum: str | None = None
    cluster: str | None = None
    y_binary: bool = True
    tau_known: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "covariates", tuple(self.covariates))
        if self.tau_known is not None and not 0.0 < float(self.tau_known) < 1.0:
            raise ConfigError("tau_known must lie strictly between 0 and 1")

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "DataConfig":
        if not isinstance(raw, Mapping):
            raise ConfigError("config must be a mapping")
        raw = dict(raw.get("data", raw))
        allowed = {"z", "d", "y", "covariates", "stratum", "cluster", "y_binary", "tau_known"}
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        covs = raw.get("covariates", ())
        if isinstance(covs, str):
            covs = [c.strip() for c in covs.split(",") if c.strip()]
        if not isinstance(raw.get("y_binary", True), bool):
            raise ConfigError("y_binary must be true or false")
        try:
            return cls(**{**raw, "covariates": tuple(covs)})
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "z": self.z, "d": self.d, "y": self.y, "covariates": list(self.covariates),
            "stratum": self.stratum, "cluster": self.cluster,
            "y_binary": self.y_binary, "tau_known": self.tau_known,
        }


def load_config(path: str | os.PathLike) -> DataConfig:
    """Read a YAML (or JSON) data config file."""
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return DataConfig.from_mapping(raw or {})


def _parse_binary(token: str, what: str, row: int) -> float:
    if token == "0":
        return 0.0
    if token == "1":
        return 1.0
    raise DataValidationError(f"non-binary {what} value {token!r} at data row {row}")


def _parse_real(token: str, what: str, row: int) -> float:
    try:
        v = float(token)
    except ValueError:
        raise DataValidationError(f"non-numeric {what} value {token!r} at data row {row}") from None
    if not np.isfinite(v):
        raise DataValidationError(f"non-finite {what} value at data row {row}")
    return v


def load_observations(source: TextIO | str | os.PathLike, mapping: DataConfig | Mapping | None = None) -> ObservationTable:
    """Parse a CSV stream into a validated :class:`ObservationTable`.

    Binary columns accept only the literal tokens ``0`` and ``1``. Rows with
    a missing mapped field are rejected (never dropped), and the offending
    row numbers are reported. Row numbers count data rows from 1.
    """
    if mapping is None:
        cfg = DataConfig()
    elif isinstance(mapping, DataConfig):
        cfg = mapping
    else:
        cfg = DataConfig.from_mapping(mapping)

    if isinstance(source, (str, os.PathLike)) and not isinstance(source, io.IOBase):
        with open(source, encoding="utf-8", newline="") as fh:
            return load_observations(fh, cfg)

    reader = csv.reader(source)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise DataValidationError("empty input: header row required") from None
    index = {name: j for j, name in enumerate(header)}

    wanted = [cfg.z, cfg.d, cfg.y, *cfg.covariates]
    if cfg.stratum:
        wanted.append(cfg.stratum)
    if cfg.cluster:
        wanted.append(cfg.cluster)
    missing = [c for c in wanted if c not in index]
    if missing:
        raise DataValidationError(f"missing column(s): {', '.join(missing)}")

    rows = [[tok.strip() for tok in r] for r in reader if any(tok.strip() for tok in r)]
    if not rows:
        raise DataValidationError("no data rows")
    for i, r in enumerate(rows, start=1):
        if len(r) != len(header):
            raise DataValidationError(f"data row {i} has {len(r)} fields, header has {len(header)}")

    for cov in cfg.covariates:
        j = index[cov]
        if all(r[j] in MISSING_TOKENS for r in rows):
            raise DataValidationError(f"covariate {cov!r} is missing in every row")

    bad_rows = [i for i, r in enumerate(rows, start=1) if any(r[index[c]] in MISSING_TOKENS for c in wanted)]
    if bad_rows:
        shown = ", ".join(map(str, bad_rows[:20])) + (" ..." if len(bad_rows) > 20 else "")
        raise DataValidationError(f"missing values in mapped columns at data rows: {shown}")

    n = len(rows)
    z = np.empty(n)
    d = np.empty(n)
    y = np.empty(n)
    x = np.empty((n, len(cfg.covariates)))
    for i, r in enumerate(rows, start=1):
        z[i - 1] = _parse_binary(r[index[cfg.z]], "instrument", i)
        d[i - 1] = _parse_binary(r[index[cfg.d]], "treatment", i)
        if cfg.y_binary:
            y[i - 1] = _parse_binary(r[index[cfg.y]], "outcome", i)
        else:
            y[i - 1] = _parse_real(r[index[cfg.y]], "outcome", i)
        for j, cov in enumerate(cfg.covariates):
            x[i - 1, j] = _parse_real(r[index[cov]], f"covariate {cov!r}", i)

    stratum = np.array([r[index[cfg.stratum]] for r in rows]) if cfg.stratum else None
    cluster = np.array([r[index[cfg.cluster]] for r in rows]) if cfg.cluster else None
    return ObservationTable(
        z=z, d=d, y=y, x=x, x_names=cfg.covariates,
        stratum=stratum, cluster=cluster, y_binary=cfg.y_binary,
    )


def read_bytes_hash(path: str | os.PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
