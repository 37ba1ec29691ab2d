import json
import math
import pathlib

import numpy as np
import pytest

import eivpred

ROOT = pathlib.Path(__file__).resolve().parents[2]

LINEAR = {
    "family": "linear-mv",
    "params": {"b": [1.0], "C": [[0.5]], "B": [[1.0]]},
    "xi_mean": [2.0],
    "xi_cov": [[1.0]],
    "z": {"kind": "gaussian", "mean": [0.0], "cov": [[1.0]]},
    "errors": {"sigma_e": [[0.25]], "sigma_eps": [[1.0]], "sigma_delta": [[1.0]], "sigma_eps_delta": [[0.3]]},
}


def test_validate_reports_problems():
    assert eivpred.validate(LINEAR) == []
    bad = json.loads(json.dumps(LINEAR))
    bad["errors"]["sigma_eps_delta"] = [[5.0]]
    assert any("PSD" in v for v in eivpred.validate(bad))


def test_transform_linear():
    t = eivpred.transform(LINEAR)
    assert t["family"] == "linear-mv"
    # B_x = (sigma_xi^2 + sigma_eps_delta) / sigma_x^2 = 1.3 / 2
    assert t["B_x"][0][0] == pytest.approx(0.65, abs=1e-14)
    assert t["b_x"][0] == pytest.approx(1.0 + 2.0 - 0.65 * 2.0, abs=1e-14)


def test_transform_matches_oracle():
    for x in (-1.0, 0.5, 3.0):
        closed = eivpred.best_predictor(LINEAR, [0.3], [x])
        quad = eivpred.conditional_expectation(LINEAR, [0.3], [x])
        assert closed[0] == pytest.approx(quad[0], abs=1e-10)


def test_simulate_fit_predict():
    data = eivpred.simulate(LINEAR, 20000, 7)
    assert data["y"].shape == (20000, 1)
    assert np.array_equal(data["x"], data["xi"] + data["delta"])
    again = eivpred.simulate(LINEAR, 20000, 7)
    assert np.array_equal(data["y"], again["y"])

    model = eivpred.fit(data["y"], data["x"], data["z"])
    assert model.n == 20000
    assert model.slopes[1, 0] == pytest.approx(0.65, abs=0.03)
    y0 = model.predict([0.0], [2.0])
    assert y0.shape == (1,)
    eta0 = model.predict_mean([0.0], [2.0], [[0.3]])
    assert abs(eta0[0] - y0[0]) < 0.1

    r = eivpred.region(model, "chisquare", 0.05, [2.0], [0.0], purely_normal=True)
    assert r["threshold"] == pytest.approx(3.8414588206941285, rel=1e-9)
    assert model.contains("chebyshev", 0.05, [0.0], [2.0], y0)


def test_quadratic_region_needs_k0():
    spec = {
        "family": "quadratic",
        "params": {"beta0": 1.0, "beta": [0.5, 1.0]},
        "xi_mean": [1.0],
        "xi_cov": [[1.0]],
        "errors": {"sigma_e": [[0.5]], "sigma_delta": [[1.0]]},
    }
    data = eivpred.simulate(spec, 5000, 3)
    model = eivpred.fit(data["y"], data["x"], family="quadratic")
    with pytest.raises(eivpred.InvalidInput):
        eivpred.region(model, "quadratic", 0.1, [0.0])
    r = eivpred.region(model, "quadratic", 0.1, [0.0], k0=0.4)
    assert r["half_width"] > 0
    assert r["k0"] == 0.4


def test_errors_are_translated():
    with pytest.raises(eivpred.SpecError):
        eivpred.transform({"family": "cubic"})
    with pytest.raises(eivpred.InsufficientData):
        eivpred.fit([[1.0]], [[1.0]])
    assert issubclass(eivpred.SpecError, eivpred.EivError)


def test_experiment_matches_cli_config():
    cfg = json.loads((ROOT / "configs" / "smoke_consistency.json").read_text())
    a = eivpred.run_experiment(cfg, threads=1)
    b = eivpred.run_experiment(cfg, threads=3)
    assert a == b
    row = a["rows"][0]
    assert row["n"] == 500
    assert not math.isnan(row["prediction_error"]["q50"])
