"""Synthetic weekly mortality panels for tests."""

from __future__ import annotations

import csv

import numpy as np

from gbll.data import MortalityTensor, format_week_label

AGES = ("0-64", "65-74", "75-84", "85+")


def week_labels(T: int, start_year: int = 2015) -> list[str]:
    return [format_week_label(start_year + t // 52, t % 52 + 1) for t in range(T)]


def seasonal_log_rates(J=4, T=260, N=4, noise=0.02, seed=0, south=()):
    """(J, N, T) log rates: age level + annual winter peak + AR(1) noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(T)
    w = (t % 52) / 52
    level = np.log([0.0004, 0.002, 0.006, 0.02])[:N]
    out = np.empty((J, N, T))
    for j in range(J):
        amp = 0.10 + 0.05 * rng.random()
        phase = 0.3 * rng.standard_normal()
        trend = -0.0004 * t * (1 + 0.2 * rng.standard_normal())
        season = amp * np.cos(2 * np.pi * w + phase)
        if j in south:
            season = -season
        e = np.zeros((N, T))
        z = rng.standard_normal((N, T))
        for k in range(1, T):
            e[:, k] = 0.5 * e[:, k - 1] + z[:, k]
        load = np.linspace(0.8, 1.2, N)
        out[j] = level[:, None] + load[:, None] * (season + trend)[None, :] + noise * e
    return out


def make_tensor(J=4, T=260, N=4, noise=0.02, seed=0, south=()) -> MortalityTensor:
    logs = seasonal_log_rates(J, T, N, noise, seed, south)
    countries = tuple(f"C{j:02d}" for j in range(J))
    hemi = tuple("south" if j in south else "north" for j in range(J))
    return MortalityTensor.from_rates(np.exp(logs), countries, AGES[:N], tuple(week_labels(T)), hemi)


def write_long_csv(path, tensor: MortalityTensor) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["country", "year", "week", "age", "rate"])
        for j, c in enumerate(tensor.countries):
            for t, lab in enumerate(tensor.weeks):
                y, wk = lab.split("-W")
                for x, a in enumerate(tensor.age_groups):
                    w.writerow([c, y, int(wk), a, repr(float(tensor.rates[j, x, t]))])


def two_layer_panel(J=5, T=208, noise=0.01, seed=0, biannual_amp=0.3):
    """Dominant annual common layer plus a weaker biannual layer on a different age profile.

    Returns ``(panels (J, T, N), biannual signal (T,))``.
    """
    rng = np.random.default_rng(seed)
    w = (np.arange(T) % 52) / 52
    annual = np.cos(2 * np.pi * w)
    biannual = biannual_amp * np.sin(4 * np.pi * w)
    b1 = np.array([0.1, 0.2, 0.3, 0.4])
    b2 = np.array([0.7, 0.1, -0.3, 0.5])
    a = np.log([0.0004, 0.002, 0.006, 0.02])
    panels = np.empty((J, T, 4))
    for j in range(J):
        shift = rng.normal(0, 0.1, 4)
        panels[j] = a + shift + np.outer(annual, b1) + np.outer(biannual, b2) + noise * rng.standard_normal((T, 4))
    return panels, biannual
