"""Run configuration: a TOML/JSON document overlaid with command-line flags."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from gbll.backtest import MONTH_END_WEEKS, BacktestPlan, GbllModel, HbyModel, LLModel
from gbll.data import IngestConfig, read_config_document
from gbll.diagnostics import LjungBoxConfig
from gbll.errors import ConfigError

MODEL_NAMES = ("ll", "hby", "gbll")


@dataclass
class RunConfig:
    data_path: str | None = None
    ingest: IngestConfig = field(default_factory=IngestConfig)
    model: str = "gbll"
    models: tuple[str, ...] = MODEL_NAMES
    max_iter: int = 50
    lb_lags: int = 10
    lb_alpha: float = 0.05
    hby_order: tuple[int, int] = (6, 6)
    gamma_cap: float | None = None
    arima_p_max: int = 3
    arima_q_max: int = 3
    arima_d: tuple[int, ...] = (0, 1)
    clustering: tuple[int, ...] = ()
    method: int = 2
    k: int | None = None
    k_max: int = 8
    restarts: int = 25
    base_train_weeks: int = 169
    n_folds: int = 10
    H: tuple[int, ...] = MONTH_END_WEEKS
    horizon: int = 52
    out: str = "out"
    jobs: int = 1
    seed: int = 42

    _SECTIONS = {
        "model": {"name": "model", "models": "models", "max_iter": "max_iter", "G": "max_iter",
                  "lb_lags": "lb_lags", "lb_alpha": "lb_alpha", "hby_order": "hby_order", "order": "hby_order",
                  "gamma_cap": "gamma_cap", "arima_p_max": "arima_p_max", "arima_q_max": "arima_q_max",
                  "arima_d": "arima_d"},
        "cluster": {"methods": "clustering", "method": "method", "k": "k", "k_max": "k_max",
                    "restarts": "restarts", "seed": "seed"},
        "backtest": {"base_train_weeks": "base_train_weeks", "n_folds": "n_folds", "H": "H",
                     "horizon": "horizon", "models": "models", "clustering": "clustering"},
        "run": {"out": "out", "jobs": "jobs", "seed": "seed"},
    }

    @classmethod
    def from_document(cls, doc: dict) -> "RunConfig":
        cfg = cls()
        data = dict(doc.get("data", {}))
        path = data.pop("path", None)
        cfg.data_path = path
        cfg.ingest = IngestConfig.from_mapping(data)
        for section, keys in cls._SECTIONS.items():
            raw = doc.get(section, {})
            for k, v in raw.items():
                if k not in keys:
                    raise ConfigError(f"unknown key [{section}] {k}")
                setattr(cfg, keys[k], v)
        unknown = set(doc) - set(cls._SECTIONS) - {"data"}
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            doc = read_config_document(path)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = cls.from_document(doc)
        if cfg.data_path and not Path(cfg.data_path).is_absolute():
            cfg.data_path = str(Path(path).parent / cfg.data_path)
        return cfg

    def validate(self) -> "RunConfig":
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"model must be one of {MODEL_NAMES}, got {self.model!r}")
        self.models = tuple(m.lower() for m in self.models)
        for m in self.models:
            if m not in MODEL_NAMES:
                raise ConfigError(f"unknown model {m!r}")
        if int(self.max_iter) < 1:
            raise ConfigError("max_iter must be >= 1")
        self.lb()  # validates lags / alpha
        order = self.hby_order
        self.hby_order = (int(order), int(order)) if isinstance(order, int) else tuple(int(v) for v in order)
        if len(self.hby_order) != 2 or min(self.hby_order) < 0:
            raise ConfigError("HBY order must be one or two non-negative integers")
        if not (0 <= self.arima_p_max <= 3 and 0 <= self.arima_q_max <= 3):
            raise ConfigError("ARIMA p and q must lie in 0..3")
        if not set(self.arima_d) <= {0, 1} or not self.arima_d:
            raise ConfigError("ARIMA d must be drawn from {0, 1}")
        self.clustering = tuple(int(m) for m in self.clustering)
        for m in (*self.clustering, self.method):
            if m not in (1, 2, 3):
                raise ConfigError(f"clustering method must be 1, 2 or 3, got {m!r}")
        if self.k is not None and int(self.k) < 1:
            raise ConfigError("k must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        self.plan()
        self.ingest.validate()
        return self

    def lb(self) -> LjungBoxConfig:
        return LjungBoxConfig(int(self.lb_lags), float(self.lb_alpha))

    def grid(self) -> tuple:
        return tuple(itertools.product(range(self.arima_p_max + 1), tuple(self.arima_d), range(self.arima_q_max + 1)))

    def plan(self) -> BacktestPlan:
        return BacktestPlan(tuple(self.H), int(self.base_train_weeks), int(self.n_folds), int(self.H[-1]))

    def build_model(self, name: str):
        grid = self.grid()
        if name == "ll":
            return LLModel(grid)
        if name == "hby":
            return HbyModel(self.hby_order, grid)
        return GbllModel(int(self.max_iter), self.lb(), grid, self.gamma_cap)
