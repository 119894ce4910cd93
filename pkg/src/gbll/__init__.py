"""Gradient-boosted Li-Lee mortality modelling for weekly multi-population data."""

from gbll.boost import GbllEnsemble, ensemble_fitted, fit_gbll, line_search_gamma
from gbll.data import IngestConfig, MortalityTensor, apply_hemisphere_transform, load_csv, log_panel
from gbll.diagnostics import LjungBoxConfig, acf, ljung_box_p, white_noise_counts
from gbll.lee_carter import LeeCarterFit, fit_lc
from gbll.multipop import HbyFit, LiLeeFit, fit_hby, fit_li_lee, predict

__version__ = "0.1.0"

__all__ = [
    "GbllEnsemble",
    "HbyFit",
    "IngestConfig",
    "LeeCarterFit",
    "LiLeeFit",
    "LjungBoxConfig",
    "MortalityTensor",
    "acf",
    "apply_hemisphere_transform",
    "ensemble_fitted",
    "fit_gbll",
    "fit_hby",
    "fit_lc",
    "fit_li_lee",
    "line_search_gamma",
    "ljung_box_p",
    "load_csv",
    "log_panel",
    "predict",
    "white_noise_counts",
]
