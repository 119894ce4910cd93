"""Versioned on-disk model documents.

A model file is JSON. Every real is written with ``float.hex`` so a saved
fit reloads bit-for-bit; arrays carry their shape.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from gbll.boost import GbllEnsemble
from gbll.errors import CorruptArtifact
from gbll.lee_carter import LeeCarterFit
from gbll.multipop import HbyFit, LiLeeFit

FORMAT = "gbll-model"
VERSION = 1


def _enc(a) -> dict:
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "hex": [float(v).hex() for v in a.ravel()]}


def _dec(d) -> np.ndarray:
    return np.array([float.fromhex(v) for v in d["hex"]], dtype=np.float64).reshape(d["shape"])


def _enc_lc(f: LeeCarterFit) -> dict:
    return {"a_x": _enc(f.a_x), "b_x": _enc(f.b_x), "kappa_t": _enc(f.kappa_t),
            "singular_value_share": float(f.singular_value_share).hex()}


def _dec_lc(d) -> LeeCarterFit:
    return LeeCarterFit(_dec(d["a_x"]), _dec(d["b_x"]), _dec(d["kappa_t"]),
                        float.fromhex(d["singular_value_share"]), None)


def _enc_ll(f: LiLeeFit) -> dict:
    return {"product": _enc_lc(f.product_fit), "ratios": [_enc_lc(r) for r in f.ratio_fits], "A_x": _enc(f.A_x)}


def _dec_ll(d) -> LiLeeFit:
    return LiLeeFit(_dec_lc(d["product"]), tuple(_dec_lc(r) for r in d["ratios"]), _dec(d["A_x"]), None)


def _enc_hby(f: HbyFit) -> dict:
    return {"mu": _enc(f.mu), "phi": _enc(f.phi), "beta": _enc(f.beta), "psi": _enc(f.psi),
            "gamma": _enc(f.gamma), "order": list(f.order), "requested_order": list(f.requested_order)}


def _dec_hby(d) -> HbyFit:
    return HbyFit(_dec(d["mu"]), _dec(d["phi"]), _dec(d["beta"]), _dec(d["psi"]), _dec(d["gamma"]),
                  tuple(d["order"]), tuple(d["requested_order"]), None)


def _enc_gbll(e: GbllEnsemble) -> dict:
    return {
        "stages": [_enc_ll(s) for s in e.stages],
        "gammas": _enc(e.gammas),
        "iterations_used": e.iterations_used,
        "stop_reason": e.stop_reason,
        "per_stage_loss": _enc(e.per_stage_loss),
        "max_iterations": e.max_iterations,
        "min_pvalues": _enc(e.min_pvalues),
    }


def _dec_gbll(d) -> GbllEnsemble:
    return GbllEnsemble(
        stages=tuple(_dec_ll(s) for s in d["stages"]),
        gammas=_dec(d["gammas"]),
        iterations_used=int(d["iterations_used"]),
        stop_reason=d["stop_reason"],
        per_stage_loss=_dec(d["per_stage_loss"]),
        max_iterations=int(d["max_iterations"]),
        residuals=None,
        min_pvalues=_dec(d["min_pvalues"]),
    )


_KINDS = {
    "ll": (LiLeeFit, _enc_ll, _dec_ll),
    "hby": (HbyFit, _enc_hby, _dec_hby),
    "gbll": (GbllEnsemble, _enc_gbll, _dec_gbll),
}


def dumps(model, meta: dict) -> str:
    for kind, (cls, enc, _) in _KINDS.items():
        if isinstance(model, cls):
            doc = {"format": FORMAT, "version": VERSION, "kind": kind, "meta": meta, "model": enc(model)}
            return json.dumps(doc, indent=1, sort_keys=True)
    raise TypeError(f"cannot serialise {type(model).__name__}")


def loads(text: str):
    """Return ``(kind, model, meta)``."""
    try:
        doc = json.loads(text)
        if doc.get("format") != FORMAT:
            raise CorruptArtifact("not a gbll model document")
        if doc.get("version") != VERSION:
            raise CorruptArtifact(f"unsupported model document version {doc.get('version')!r}")
        kind = doc["kind"]
        return kind, _KINDS[kind][2](doc["model"]), doc["meta"]
    except CorruptArtifact:
        raise
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptArtifact(f"corrupt model document: {exc}") from exc


def save(path, model, meta: dict) -> None:
    Path(path).write_text(dumps(model, meta), encoding="utf-8")


def load(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CorruptArtifact(f"cannot read model file {path}: {exc}") from exc
    return loads(text)
