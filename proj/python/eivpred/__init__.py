"""Prediction in errors-in-variables regression models.

Specs, fitted-model summaries and experiment reports are plain dictionaries
with the same layout as the JSON files used by the ``eivpred`` command line.
"""

import json

import numpy as np

from . import _eivpred
from ._eivpred import (
    DimensionError,
    EivError,
    FittedModel,
    InsufficientData,
    InvalidInput,
    NonConvergence,
    SingularCovariance,
    SpecError,
)

__version__ = _eivpred.__version__

__all__ = [
    "DimensionError",
    "EivError",
    "FittedModel",
    "InsufficientData",
    "InvalidInput",
    "NonConvergence",
    "SingularCovariance",
    "SpecError",
    "best_predictor",
    "conditional_expectation",
    "fit",
    "region",
    "run_experiment",
    "simulate",
    "transform",
    "validate",
]


def _spec(spec):
    return spec if isinstance(spec, str) else json.dumps(spec)


def _vec(v):
    return np.atleast_1d(np.asarray(v, dtype=float))


def _cols(a, n=None):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.size == 0 and n is not None:
        a = np.zeros((n, 0))
    return a


def validate(spec):
    """List of violated model assumptions (empty when the spec is usable)."""
    return _eivpred.validate(_spec(spec))


def transform(spec):
    """Observable-regression parameters implied by a latent-model spec."""
    return json.loads(_eivpred.transform(_spec(spec)))


def best_predictor(spec, z, x):
    return _eivpred.best_predictor(_spec(spec), _vec(z) if np.size(z) else np.zeros(0), _vec(x))


def conditional_expectation(spec, z, x, nodes=64):
    """Quadrature value of E[y | z, x]; independent of the closed-form transforms."""
    return _eivpred.conditional_expectation(_spec(spec), _vec(z) if np.size(z) else np.zeros(0), _vec(x), nodes)


def simulate(spec, n, seed):
    """Draw n observations; returns a dict of 2-D arrays y, z, x, xi, delta."""
    return _eivpred.simulate(_spec(spec), int(n), int(seed))


def fit(y, x, z=None, family="linear-mv", degree=1, harmonics=1):
    """Least-squares fit of the observable regression. Returns a FittedModel."""
    y = _cols(y)
    x = _cols(x)
    z = np.zeros((y.shape[0], 0)) if z is None else _cols(z, y.shape[0])
    return _eivpred.fit(y, z, x, family, degree, harmonics)


def region(model, kind, alpha, x0, z0=(), k0=None, purely_normal=False):
    """Confidence region for y0 at (z0, x0) as a dict."""
    z0 = _vec(z0) if np.size(z0) else np.zeros(0)
    return json.loads(model.region(kind, alpha, z0, _vec(x0), k0, purely_normal))


def run_experiment(config, threads=1):
    """Run a Monte Carlo experiment config and return the report dict."""
    return json.loads(_eivpred.run_experiment(_spec(config), threads))
