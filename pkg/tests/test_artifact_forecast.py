import json

import numpy as np
import pytest

from gbll import artifact
from gbll.boost import ensemble_fitted, fit_gbll
from gbll.errors import CorruptArtifact
from gbll.forecast import forecast_ensemble, forecast_fit, forecast_index
from gbll.multipop import fit_hby, fit_li_lee
from synth import make_tensor, two_layer_panel

FAST = ((0, 0, 0), (0, 1, 0), (1, 0, 0), (1, 0, 1))


@pytest.fixture(scope="module")
def panel():
    P, _ = two_layer_panel(J=3, T=156, seed=4)
    return P, (np.arange(156) % 52) / 52


def _models(P):
    return {"ll": fit_li_lee(P), "hby": fit_hby(P, (2, 2)), "gbll": fit_gbll(P, G=4)}


def _same(a, b):
    for name in ("a_x", "b_x", "kappa_t"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_round_trip_bit_exact(panel):
    P, _ = panel
    for kind, model in _models(P).items():
        k, loaded, meta = artifact.loads(artifact.dumps(model, {"tag": 1}))
        assert k == kind and meta == {"tag": 1}
        assert np.array_equal(loaded.fitted() if kind != "gbll" else ensemble_fitted(loaded),
                              model.fitted() if kind != "gbll" else ensemble_fitted(model))
        if kind == "gbll":
            assert np.array_equal(loaded.gammas, model.gammas)
            assert loaded.stop_reason == model.stop_reason and loaded.iterations_used == model.iterations_used
            for s1, s2 in zip(loaded.stages, model.stages):
                _same(s1.product_fit, s2.product_fit)
        if kind == "hby":
            assert loaded.order == model.order


def test_save_load_and_forecast_identical(panel, tmp_path):
    P, w = panel
    ens = fit_gbll(P, G=3)
    artifact.save(tmp_path / "m.gbll", ens, {})
    _, loaded, _ = artifact.load(tmp_path / "m.gbll")
    assert np.array_equal(forecast_ensemble(ens, w, 13, FAST), forecast_ensemble(loaded, w, 13, FAST))


def test_corrupt_documents(tmp_path):
    with pytest.raises(CorruptArtifact):
        artifact.loads("not json")
    with pytest.raises(CorruptArtifact):
        artifact.loads(json.dumps({"format": "other"}))
    with pytest.raises(CorruptArtifact):
        artifact.loads(json.dumps({"format": "gbll-model", "version": 99}))
    with pytest.raises(CorruptArtifact):
        artifact.loads(json.dumps({"format": "gbll-model", "version": 1, "kind": "ll", "model": {}, "meta": {}}))
    with pytest.raises(CorruptArtifact):
        artifact.load(tmp_path / "missing")
    with pytest.raises(TypeError):
        artifact.dumps(object(), {})


def test_forecast_shapes_and_frozen(panel):
    P, w = panel
    for model in _models(P).values():
        fc = (forecast_ensemble if hasattr(model, "gammas") else forecast_fit)(model, w, 20, FAST)
        assert fc.shape == (3, 20, 4) and np.all(np.isfinite(fc))
    ens = fit_gbll(P, G=3)
    frozen = forecast_ensemble(ens, w, 10, FAST, freeze=True)
    np.testing.assert_allclose(frozen, np.repeat(ensemble_fitted(ens)[:, -1:], 10, axis=1), atol=1e-12)


def test_forecast_tracks_seasonal_panel():
    t = make_tensor(J=2, T=260, noise=0.005, seed=8)
    Y = t.stacked_log()
    w = t.year_fractions()
    fc = forecast_fit(fit_li_lee(Y[:, :208]), w[:208], 52, FAST)
    assert np.mean(np.abs(np.exp(fc - Y[:, 208:]) - 1)) < 0.05


def test_constant_index_forecast():
    assert np.array_equal(forecast_index(np.full(60, 2.5), np.arange(60) / 52, 5), np.full(5, 2.5))
