"""Weekly mortality panels: CSV ingestion, validation and the hemisphere transform.

Rates are held internally as natural logs. The reciprocal transform used for
southern-hemisphere countries is then a sign flip, which makes it an exact
involution.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from gbll.errors import (
    ConfigError,
    DataError,
    MissingCell,
    NonPositiveRate,
    RaggedYear,
    ShapeMismatch,
    UnknownCountry,
)

WEEKS_PER_YEAR = 52
_WEEK_LABEL = re.compile(r"^(\d{4})-W(\d{1,2})$")


def parse_week_label(label: str) -> tuple[int, int]:
    m = _WEEK_LABEL.match(str(label).strip())
    if not m:
        raise ConfigError(f"bad week label {label!r}, expected YYYY-Www")
    return int(m.group(1)), int(m.group(2))


def format_week_label(year: int, week: int) -> str:
    return f"{year:04d}-W{week:02d}"


@dataclass(frozen=True)
class MortalityTensor:
    """Country x age-group x week panel of central mortality rates.

    ``log_rates`` has shape ``(J, N, T)``. ``reciprocal[j]`` is True when
    country ``j`` currently carries reciprocal rates.
    """

    log_rates: np.ndarray
    countries: tuple[str, ...]
    age_groups: tuple[str, ...]
    weeks: tuple[str, ...]
    hemisphere: tuple[str, ...]
    reciprocal: tuple[bool, ...] = ()

    def __post_init__(self):
        arr = np.array(self.log_rates, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeMismatch(f"expected a 3-D (country, age, week) array, got shape {arr.shape}")
        J, N, T = arr.shape
        if len(self.countries) != J or len(self.age_groups) != N or len(self.weeks) != T:
            raise ShapeMismatch(
                f"labels ({len(self.countries)}, {len(self.age_groups)}, {len(self.weeks)}) "
                f"do not match array shape {arr.shape}"
            )
        if len(self.hemisphere) != J:
            raise ShapeMismatch("one hemisphere flag per country required")
        for h in self.hemisphere:
            if h not in ("north", "south"):
                raise ConfigError(f"hemisphere must be 'north' or 'south', got {h!r}")
        if J < 1 or N < 1:
            raise ShapeMismatch("empty panel")
        if not np.all(np.isfinite(arr)):
            j, x, t = np.argwhere(~np.isfinite(arr))[0]
            raise NonPositiveRate(self.countries[j], self.age_groups[x], self.weeks[t])
        arr.setflags(write=False)
        object.__setattr__(self, "log_rates", arr)
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "age_groups", tuple(self.age_groups))
        object.__setattr__(self, "weeks", tuple(self.weeks))
        object.__setattr__(self, "hemisphere", tuple(self.hemisphere))
        if not self.reciprocal:
            object.__setattr__(self, "reciprocal", (False,) * J)
        elif len(self.reciprocal) != J:
            raise ShapeMismatch("one reciprocal flag per country required")

    @classmethod
    def from_rates(cls, rates, countries, age_groups, weeks, hemisphere=None) -> "MortalityTensor":
        rates = np.asarray(rates, dtype=np.float64)
        bad = ~(np.isfinite(rates) & (rates > 0))
        if bad.any():
            j, x, t = np.argwhere(bad)[0]
            raise NonPositiveRate(countries[j], age_groups[x], weeks[t], float(rates[j, x, t]))
        if hemisphere is None:
            hemisphere = ("north",) * rates.shape[0]
        return cls(np.log(rates), tuple(countries), tuple(age_groups), tuple(weeks), tuple(hemisphere))

    @property
    def rates(self) -> np.ndarray:
        return np.exp(self.log_rates)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.log_rates.shape

    @property
    def J(self) -> int:
        return self.log_rates.shape[0]

    @property
    def N(self) -> int:
        return self.log_rates.shape[1]

    @property
    def T(self) -> int:
        return self.log_rates.shape[2]

    def week_positions(self) -> np.ndarray:
        """1-based position of each week within its calendar year."""
        years = [parse_week_label(w)[0] for w in self.weeks]
        pos = np.empty(len(years), dtype=int)
        count: dict[int, int] = {}
        for i, y in enumerate(years):
            count[y] = count.get(y, 0) + 1
            pos[i] = count[y]
        # a leading partial year is aligned to the end of its calendar year
        first = years[0]
        short = WEEKS_PER_YEAR - count[first]
        if short > 0:
            pos[np.asarray(years) == first] += short
        return pos

    def year_fractions(self) -> np.ndarray:
        return (self.week_positions() - 1) / WEEKS_PER_YEAR

    def stacked_log(self) -> np.ndarray:
        """Log rates as a ``(J, T, N)`` stack of per-country panels."""
        return np.ascontiguousarray(self.log_rates.transpose(0, 2, 1))

    def head(self, n_weeks: int) -> "MortalityTensor":
        return replace(self, log_rates=self.log_rates[:, :, :n_weeks], weeks=self.weeks[:n_weeks])

    def subset(self, countries: Sequence[str]) -> "MortalityTensor":
        idx = []
        for c in countries:
            if c not in self.countries:
                raise UnknownCountry(f"country {c!r} not in panel")
            idx.append(self.countries.index(c))
        return MortalityTensor(
            self.log_rates[idx],
            tuple(self.countries[i] for i in idx),
            self.age_groups,
            self.weeks,
            tuple(self.hemisphere[i] for i in idx),
            tuple(self.reciprocal[i] for i in idx),
        )


@dataclass
class IngestConfig:
    """Declarative CSV schema.

    Either ``age_column`` + ``rate_column`` (long layout, one row per age) or
    ``age_columns`` mapping label -> column (wide layout, as in STMF files)
    must be given. Weeks come from ``year_column`` + ``week_column`` or from a
    single ``week_label_column`` holding ``YYYY-Www``.
    """

    countries: list[str] = field(default_factory=list)
    age_groups: list[str] = field(default_factory=list)
    hemisphere: dict[str, str] = field(default_factory=dict)
    start: str | None = None
    end: str | None = None
    country_column: str = "country"
    sex_column: str | None = None
    sex_value: str = "b"
    year_column: str | None = "year"
    week_column: str | None = "week"
    week_label_column: str | None = None
    age_column: str | None = "age"
    rate_column: str | None = "rate"
    age_columns: dict[str, str] | None = None
    delimiter: str = ","

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "IngestConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown ingest keys: {sorted(unknown)}")
        cfg = cls(**dict(raw))
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "IngestConfig":
        return cls.from_mapping(read_config_document(path).get("data", {}))

    def validate(self):
        if self.age_columns is None and not (self.age_column and self.rate_column):
            raise ConfigError("either age_columns or age_column + rate_column is required")
        if self.week_label_column is None and not (self.year_column and self.week_column):
            raise ConfigError("either week_label_column or year_column + week_column is required")
        for c, h in self.hemisphere.items():
            if h not in ("north", "south"):
                raise ConfigError(f"hemisphere for {c!r} must be north or south, got {h!r}")
        for w in (self.start, self.end):
            if w is not None:
                parse_week_label(w)


def read_config_document(path) -> dict:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return json.loads(text)
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc


def _weeks_from_frame(df: pd.DataFrame, cfg: IngestConfig) -> pd.DataFrame:
    if cfg.week_label_column is not None:
        parsed = [parse_week_label(v) for v in df[cfg.week_label_column]]
        df = df.assign(_year=[p[0] for p in parsed], _week=[p[1] for p in parsed])
    else:
        df = df.assign(_year=df[cfg.year_column].astype(int), _week=df[cfg.week_column].astype(int))
    return df


def _select_weeks(keys: list[tuple[int, int]]) -> list[tuple[int, int]]:
    """Drop ISO week 53 where a year would otherwise exceed 52 weeks."""
    by_year: dict[int, list[int]] = {}
    for y, w in keys:
        by_year.setdefault(y, []).append(w)
    out = []
    for y in sorted(by_year):
        ws = sorted(set(by_year[y]))
        if len(ws) > WEEKS_PER_YEAR and 53 in ws:
            ws.remove(53)
        if len(ws) != WEEKS_PER_YEAR:
            raise RaggedYear(y, len(ws))
        if ws != list(range(ws[0], ws[0] + WEEKS_PER_YEAR)):
            raise DataError(f"weeks of {y} are not contiguous")
        out.extend((y, w) for w in ws)
    return out


def load_csv(path, config: IngestConfig) -> MortalityTensor:
    """Read a weekly mortality CSV into a validated :class:`MortalityTensor`."""
    config.validate()
    df = pd.read_csv(path, sep=config.delimiter, dtype={config.country_column: str}, encoding="utf-8")
    df.columns = [str(c).strip() for c in df.columns]
    needed = [config.country_column]
    if config.sex_column:
        needed.append(config.sex_column)
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise ConfigError(f"columns {missing} not found in {path}")
    if config.sex_column:
        df = df[df[config.sex_column].astype(str).str.strip() == config.sex_value]
    df = df.assign(**{config.country_column: df[config.country_column].str.strip()})

    present = sorted(set(df[config.country_column]))
    countries = list(config.countries) or present
    for c in countries:
        if c not in present:
            raise UnknownCountry(f"country {c!r} not present in {path}")
    df = df[df[config.country_column].isin(countries)]
    df = _weeks_from_frame(df, config)

    lo = parse_week_label(config.start) if config.start else None
    hi = parse_week_label(config.end) if config.end else None
    key = list(zip(df["_year"], df["_week"]))
    keep = np.ones(len(df), dtype=bool)
    for i, k in enumerate(key):
        if (lo is not None and k < lo) or (hi is not None and k > hi):
            keep[i] = False
    df = df[keep]

    # long layout: country, week, age, rate
    if config.age_columns is not None:
        ages = list(config.age_groups) or list(config.age_columns)
        cols = {}
        for a in ages:
            if a not in config.age_columns:
                raise ConfigError(f"age group {a!r} has no column mapping")
            cols[config.age_columns[a]] = a
        absent = [c for c in cols if c not in df.columns]
        if absent:
            raise ConfigError(f"rate columns {absent} not found in {path}")
        long = df.melt(
            id_vars=[config.country_column, "_year", "_week"],
            value_vars=list(cols),
            var_name="_age",
            value_name="_rate",
        )
        long["_age"] = long["_age"].map(cols)
    else:
        for c in (config.age_column, config.rate_column):
            if c not in df.columns:
                raise ConfigError(f"column {c!r} not found in {path}")
        long = df.rename(columns={config.age_column: "_age", config.rate_column: "_rate"})
        long["_age"] = long["_age"].astype(str).str.strip()
        ages = list(config.age_groups) or sorted(set(long["_age"]))
        long = long[long["_age"].isin(ages)]
    long = long.rename(columns={config.country_column: "_country"})[["_country", "_year", "_week", "_age", "_rate"]]

    if long.duplicated(["_country", "_year", "_week", "_age"]).any():
        raise DataError("duplicate (country, week, age) rows")
    week_keys = _select_weeks(sorted(set(zip(long["_year"], long["_week"]))))
    if not week_keys:
        raise DataError("no rows left after filtering")

    t_index = {k: i for i, k in enumerate(week_keys)}
    j_index = {c: i for i, c in enumerate(countries)}
    x_index = {a: i for i, a in enumerate(ages)}
    J, N, T = len(countries), len(ages), len(week_keys)
    rates = np.full((J, N, T), np.nan)
    for c, y, w, a, r in long.itertuples(index=False):
        t = t_index.get((y, w))
        if t is None:
            continue
        rates[j_index[c], x_index[a], t] = float(r)

    labels = [format_week_label(y, w) for y, w in week_keys]
    holes = np.argwhere(np.isnan(rates))
    if len(holes):
        j, _, t = holes[0]
        raise MissingCell(countries[j], labels[t])
    bad = ~(np.isfinite(rates) & (rates > 0))
    if bad.any():
        j, x, t = np.argwhere(bad)[0]
        raise NonPositiveRate(countries[j], ages[x], labels[t], float(rates[j, x, t]))

    hemisphere = tuple(config.hemisphere.get(c, "north") for c in countries)
    return MortalityTensor(np.log(rates), tuple(countries), tuple(ages), tuple(labels), hemisphere)


def apply_hemisphere_transform(tensor: MortalityTensor) -> MortalityTensor:
    """Replace southern-hemisphere rates by their reciprocals (toggling)."""
    south = np.array([h == "south" for h in tensor.hemisphere])
    logs = tensor.log_rates.copy()
    logs[south] = -logs[south]
    flags = tuple(r != s for r, s in zip(tensor.reciprocal, south))
    return replace(tensor, log_rates=logs, reciprocal=flags)


def back_transform_log(log_values: np.ndarray, reciprocal: Sequence[bool]) -> np.ndarray:
    """Undo the reciprocal transform on a per-country leading axis of log values."""
    out = np.array(log_values, dtype=np.float64, copy=True)
    flip = np.asarray(reciprocal, dtype=bool)
    out[flip] = -out[flip]
    return out


def log_panel(tensor: MortalityTensor, country) -> np.ndarray:
    """``T x N`` matrix of log rates for one country (index or code)."""
    j = tensor.countries.index(country) if isinstance(country, str) else int(country)
    return np.array(tensor.log_rates[j].T)
