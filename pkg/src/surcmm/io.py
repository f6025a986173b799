"""JSON fit artifacts.

Floats are written with ``repr`` precision so a saved fit reloads to the
identical parameters.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .copulas import CopulaSpec, DependenceParams
from .errors import ValidationError
from .estimation import FitDiagnostics, JointModelFit, ModelKind, PenaltyConfig
from .marginals import CompanyEffects, MarginalParams, MarginalSpec

FORMAT = "surcmm-fit/1"


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _params(p):
    return {"beta": p.beta.tolist(), "sigma": p.sigma, "tau": p.tau}


def _penalty(p):
    return {
        "lambda_1": p.lambda_1,
        "lambda_2": p.lambda_2,
        "scope": p.scope.value,
        "grid": None if p.grid is None else [list(g) for g in p.grid],
        "grid_points": p.grid_points,
        "grid_span": list(p.grid_span),
        "criterion": p.criterion,
    }


def fit_to_dict(fit, extra=None):
    """Plain-data form of a :class:`JointModelFit`."""
    d = fit.diagnostics
    out = {
        "format": FORMAT,
        "model": fit.model.value,
        "size": fit.size,
        "company_ids": list(fit.company_ids),
        "random_effects": fit.random_effects,
        "marginals": [
            {
                "family": fit.spec(k).family.value,
                "quadrature_nodes": fit.spec(k).quadrature_nodes,
                "params": _params(fit.params(k)),
                "thresholded_beta": np.asarray(fit.thresholded_beta(k)).tolist(),
                "threshold": fit.thresholds[k - 1],
                "company_effects": dict(fit.effects(k).b_hat),
            }
            for k in (1, 2)
        ],
        "copula": {
            "family": fit.copula_spec.family.value,
            "scope": fit.copula_spec.scope.value,
            "theta": fit.dependence.theta,
            "boundary": list(fit.dependence.boundary),
            "pseudo_loglik": fit.dependence.pseudo_loglik,
        },
        "penalty": _penalty(fit.penalty),
        "diagnostics": {
            "iterations": d.iterations,
            "change_norm": d.change_norm,
            "converged": d.converged,
            "tolerance": d.tolerance,
            "loglik_1": d.loglik_1,
            "loglik_2": d.loglik_2,
            "loglik_copula": d.loglik_copula,
            "loglik": d.loglik,
            "df": d.df,
            "aic": d.aic,
            "bic": d.bic,
            "criterion_table": d.criterion_table,
            "objective_history": d.objective_history,
            "threshold_table": d.threshold_table,
            "notes": d.notes,
        },
    }
    if extra:
        out["extra"] = extra
    return _plain(out)


def fit_from_dict(doc):
    if doc.get("format") != FORMAT:
        raise ValidationError(f"not a fit artifact (format {doc.get('format')!r})")
    m1, m2 = doc["marginals"]
    cop = doc["copula"]
    pen = dict(doc["penalty"])
    if pen.get("grid") is not None:
        pen["grid"] = tuple(tuple(g) for g in pen["grid"])
    pen["grid_span"] = tuple(pen["grid_span"])
    diag = dict(doc["diagnostics"])
    diag.pop("loglik", None)
    return JointModelFit(
        model=ModelKind(doc["model"]),
        spec_1=MarginalSpec(m1["family"], m1["quadrature_nodes"]),
        spec_2=MarginalSpec(m2["family"], m2["quadrature_nodes"]),
        copula_spec=CopulaSpec(cop["family"], cop["scope"]),
        params_1=MarginalParams(**m1["params"]),
        params_2=MarginalParams(**m2["params"]),
        effects_1=CompanyEffects(dict(m1["company_effects"])),
        effects_2=CompanyEffects(dict(m2["company_effects"])),
        dependence=DependenceParams(cop["theta"], tuple(cop["boundary"]), cop["pseudo_loglik"]),
        penalty=PenaltyConfig(**pen),
        thresholded_beta_1=np.array(m1["thresholded_beta"], dtype=float),
        thresholded_beta_2=np.array(m2["thresholded_beta"], dtype=float),
        company_ids=tuple(doc["company_ids"]),
        size=int(doc["size"]),
        random_effects=bool(doc["random_effects"]),
        thresholds=(float(m1["threshold"]), float(m2["threshold"])),
        diagnostics=FitDiagnostics(**diag),
    )


def dumps(obj):
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def save_fit(fit, path, extra=None):
    path = Path(path)
    path.write_text(dumps(fit_to_dict(fit, extra)), encoding="utf-8")
    return path


def load_fit(path):
    """Read a fit artifact; returns ``(fit, extra)``."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return fit_from_dict(doc), doc.get("extra", {})


__all__ = ["fit_to_dict", "fit_from_dict", "save_fit", "load_fit", "dumps"]
