"""Expanding-window backtests scored by MAPE at monthly horizons.

Fold ``r`` trains on weeks ``1..base + H_(r)`` (``H_(0) = 0``) and forecasts
the next 52 weeks. Month ``h`` scores weeks ``1..H_(h)`` of every forecast.
Errors are taken on the observed rate scale, after undoing the reciprocal
transform of southern-hemisphere countries.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Protocol, Sequence

import numpy as np

from gbll.boost import fit_gbll
from gbll.data import MortalityTensor, apply_hemisphere_transform, back_transform_log
from gbll.diagnostics import LjungBoxConfig
from gbll.errors import ConfigError, GbllError, InsufficientData
from gbll.forecast import forecast_ensemble, forecast_fit
from gbll.multipop import fit_hby, fit_li_lee
from gbll.tsmodels import DEFAULT_GRID

log = logging.getLogger(__name__)

MONTH_END_WEEKS = (4, 9, 13, 17, 22, 26, 30, 35, 39, 43, 48, 52)


@dataclass(frozen=True)
class BacktestPlan:
    H: tuple[int, ...] = MONTH_END_WEEKS
    base_train_weeks: int = 169
    n_folds: int = 10
    horizon_weeks: int = 52

    def __post_init__(self):
        H = tuple(int(v) for v in self.H)
        if any(b <= a for a, b in zip(H, H[1:])) or H[0] < 1:
            raise ConfigError("H must be strictly increasing positive week counts")
        if H[-1] != self.horizon_weeks:
            raise ConfigError("the last element of H must equal the horizon")
        if not 1 <= self.n_folds <= len(H):
            raise ConfigError(f"n_folds must lie in [1, {len(H)}]")
        if self.base_train_weeks < 1:
            raise ConfigError("base_train_weeks must be positive")
        object.__setattr__(self, "H", H)

    @property
    def fold_offsets(self) -> tuple[int, ...]:
        return ((0,) + self.H)[: self.n_folds]

    def train_weeks(self, r: int) -> int:
        return self.base_train_weeks + self.fold_offsets[r]

    @property
    def required_weeks(self) -> int:
        return self.train_weeks(self.n_folds - 1) + self.horizon_weeks


class Forecaster(Protocol):
    label: str

    def fit_forecast(self, log_panels: np.ndarray, week_fracs: np.ndarray, h: int,
                     countries: Sequence[str]) -> np.ndarray:
        """Map ``(J, T, N)`` training log rates to ``(J, h, N)`` forecast log rates."""


@dataclass(frozen=True)
class LLModel:
    grid: tuple = DEFAULT_GRID
    label: str = "LL"

    def fit_forecast(self, log_panels, week_fracs, h, countries=()):
        return forecast_fit(fit_li_lee(log_panels), week_fracs, h, self.grid)


@dataclass(frozen=True)
class HbyModel:
    order: tuple[int, int] = (6, 6)
    grid: tuple = DEFAULT_GRID
    label: str = "HBY"

    def fit_forecast(self, log_panels, week_fracs, h, countries=()):
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            fit = fit_hby(log_panels, self.order)
        return forecast_fit(fit, week_fracs, h, self.grid)


@dataclass(frozen=True)
class GbllModel:
    G: int = 50
    lb: LjungBoxConfig = field(default_factory=LjungBoxConfig)
    grid: tuple = DEFAULT_GRID
    gamma_cap: float | None = None
    label: str = "GBLL"

    def fit_forecast(self, log_panels, week_fracs, h, countries=()):
        ens = fit_gbll(log_panels, self.G, self.lb, self.gamma_cap)
        return forecast_ensemble(ens, week_fracs, h, self.grid)


@dataclass(frozen=True)
class MapeTable:
    """Mean absolute percentage errors by forecast month (fractions, not percent)."""

    label: str
    mape: np.ndarray  # (M,)
    by_age: np.ndarray  # (M, N)
    by_country: np.ndarray  # (M, J)
    age_groups: tuple[str, ...]
    countries: tuple[str, ...]

    def scaled(self, factor: float = 100.0) -> np.ndarray:
        return self.mape * factor


@dataclass(frozen=True)
class BacktestResult:
    """Absolute percentage errors ``(folds, J, N, horizon)`` plus the plan that produced them."""

    label: str
    ape: np.ndarray
    plan: BacktestPlan
    countries: tuple[str, ...]
    age_groups: tuple[str, ...]
    method: str = "none"

    def table(self) -> MapeTable:
        M = len(self.plan.H)
        mape = np.empty(M)
        by_age = np.empty((M, self.ape.shape[2]))
        by_country = np.empty((M, self.ape.shape[1]))
        for m, hw in enumerate(self.plan.H):
            block = self.ape[:, :, :, :hw]
            mape[m] = block.mean()
            by_age[m] = block.mean(axis=(0, 1, 3))
            by_country[m] = block.mean(axis=(0, 2, 3))
        return MapeTable(self.label, mape, by_age, by_country, self.age_groups, self.countries)

    def tidy_rows(self):
        """Rows (model, method, fold, country, age, h, mape)."""
        for r in range(self.ape.shape[0]):
            for j, c in enumerate(self.countries):
                for x, a in enumerate(self.age_groups):
                    for m, hw in enumerate(self.plan.H):
                        yield {
                            "model": self.label,
                            "method": self.method,
                            "fold": r,
                            "country": c,
                            "age": a,
                            "h": m + 1,
                            "mape": float(self.ape[r, j, x, :hw].mean()),
                        }


def _groups(countries: Sequence[str], grouping: Mapping[str, int] | None) -> list[list[int]]:
    if grouping is None:
        return [list(range(len(countries)))]
    missing = [c for c in countries if c not in grouping]
    if missing:
        raise ConfigError(f"grouping does not cover countries {missing}")
    ids = sorted(set(grouping[c] for c in countries))
    return [[j for j, c in enumerate(countries) if grouping[c] == g] for g in ids]


def _run_fold(tensor: MortalityTensor, model, plan: BacktestPlan, r: int, grouping) -> np.ndarray:
    work = apply_hemisphere_transform(tensor)
    n_train = plan.train_weeks(r)
    hw = plan.horizon_weeks
    train = work.head(n_train)
    stack = train.stacked_log()
    fracs = train.year_fractions()
    fc = np.empty((tensor.J, hw, tensor.N))
    for g, members in enumerate(_groups(tensor.countries, grouping)):
        try:
            fc[members] = model.fit_forecast(stack[members], fracs, hw, [tensor.countries[j] for j in members])
        except GbllError as exc:
            raise type(exc)(f"fold {r}, group {g + 1}: {exc}") from exc
    fc = back_transform_log(fc, work.reciprocal)
    truth = tensor.rates[:, :, n_train : n_train + hw]  # (J, N, hw)
    pred = np.exp(fc).transpose(0, 2, 1)
    return np.abs(pred - truth) / truth


def run_backtest(
    tensor: MortalityTensor,
    model,
    plan: BacktestPlan = BacktestPlan(),
    grouping: Mapping[str, int] | None = None,
    jobs: int = 1,
    method: str = "none",
) -> BacktestResult:
    """Expanding-window backtest of ``model`` on ``tensor`` (rates on the observed scale)."""
    if tensor.T < plan.required_weeks:
        raise InsufficientData(f"backtest needs {plan.required_weeks} weeks, panel has {tensor.T}")
    if any(tensor.reciprocal):
        raise ConfigError("pass the untransformed panel; the hemisphere transform is applied per fold")
    folds = range(plan.n_folds)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_fold, *zip(*[(tensor, model, plan, r, grouping) for r in folds])))
    else:
        parts = []
        for r in folds:
            log.info("%s fold %d/%d", getattr(model, "label", "model"), r + 1, plan.n_folds)
            parts.append(_run_fold(tensor, model, plan, r, grouping))
    return BacktestResult(
        getattr(model, "label", type(model).__name__),
        np.stack(parts),
        plan,
        tensor.countries,
        tensor.age_groups,
        method,
    )


def mape_by_age(result: BacktestResult) -> np.ndarray:
    """``(months, N)`` MAPE per age group."""
    return result.table().by_age


@dataclass(frozen=True)
class ClusteredComparison:
    results: dict  # (method, model label) -> BacktestResult
    reference: BacktestResult | None
    groupings: dict  # method -> {country: cluster}

    def layout(self):
        """Column labels and ``(months, columns)`` MAPE matrix in the clustered-table layout."""
        cols, values = [], []
        for (method, label), res in self.results.items():
            cols.append(f"M{method}_{label}")
            values.append(res.table().mape)
        if self.reference is not None:
            cols.append(f"whole_{self.reference.label}")
            values.append(self.reference.table().mape)
        return cols, np.column_stack(values)


def run_clustered_comparison(
    tensor: MortalityTensor,
    methods: Sequence = (1, 2, 3),
    models: Sequence = (),
    plan: BacktestPlan = BacktestPlan(),
    K: int | None = 3,
    groupings: Mapping | None = None,
    reference=None,
    jobs: int = 1,
    seed: int = 42,
    restarts: int = 25,
) -> ClusteredComparison:
    """Backtest every model within every clustering method, plus an unclustered reference.

    Clusters are computed from the full panel unless ``groupings`` maps each
    method to a precomputed ``{country: cluster}`` assignment.
    """
    from gbll.cluster import cluster_countries

    models = list(models) or [LLModel(), HbyModel(), GbllModel()]
    if reference is None:
        reference = next((m for m in models if getattr(m, "label", "") == "GBLL"), None)
    chosen = {}
    for method in methods:
        if groupings is not None and method in groupings:
            chosen[method] = dict(groupings[method])
        else:
            chosen[method] = cluster_countries(tensor, method, K, restarts=restarts, seed=seed).assignments
    results = {}
    for method in methods:
        for model in models:
            results[(method, model.label)] = run_backtest(
                tensor, model, plan, chosen[method], jobs, method=str(method)
            )
    ref = run_backtest(tensor, reference, plan, None, jobs) if reference is not None else None
    return ClusteredComparison(results, ref, chosen)
