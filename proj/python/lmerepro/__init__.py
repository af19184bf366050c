"""Linear mixed-effects analysis of evaluation scores."""

import json as _json

from . import _lmerepro
from ._lmerepro import (
    DataError,
    Dataset,
    NumericalError,
    ParseError,
    SpecError,
    compute_phi,
    parse_csv,
    run_cli,
    simulate,
    text_properties,
)

__all__ = [
    "DataError",
    "Dataset",
    "NumericalError",
    "ParseError",
    "SpecError",
    "compute_phi",
    "fit",
    "glrt",
    "load_csv",
    "parse_csv",
    "report",
    "run_cli",
    "simulate",
    "text_properties",
    "vca",
]


def load_csv(path, response, factors=(), covariates=(), object=""):
    with open(path, encoding="utf-8") as f:
        return parse_csv(f.read(), response, list(factors), list(covariates), object)


def fit(dataset, formula, criterion="reml"):
    return _json.loads(_lmerepro.fit(dataset, formula, criterion))


def glrt(dataset, restricted, general):
    return _json.loads(_lmerepro.glrt(dataset, restricted, general))


def vca(dataset, random, object=""):
    return _json.loads(_lmerepro.vca(dataset, list(random), object))


def report(dataset, system="system", conditional=(), run_vca=True):
    return _json.loads(_lmerepro.report(dataset, system, list(conditional), run_vca))
