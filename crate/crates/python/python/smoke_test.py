"""Smoke test for the wmc_drought extension module."""

import math
import random

import wmc_drought as wmc


def main():
    assert wmc.classify(-2.0) == "ED"
    assert wmc.classify(1.0) == "MW"
    assert wmc.classify_series([0.0, None, -1.2]) == ["NN", None, "MD"]

    k = wmc.weighted_kappa([[5, 0], [0, 5]])
    assert k["kappa"] == 1.0

    w = wmc.normalize_weights([0.812, -0.0512, 0.0382, -0.0411, 0.0083, -0.0746, 0.003])
    published = [0.7895, 0.0498, 0.0371, 0.0400, 0.0081, 0.0725, 0.0029]
    assert max(abs(a - b) for a, b in zip(w, published)) <= 5e-4

    pi = wmc.stationary([[0.9, 0.1], [0.5, 0.5]])
    assert abs(pi[0] - 5 / 6) < 1e-9

    rng = random.Random(1)
    states = []
    s = 3
    for _ in range(600):
        states.append(wmc.CLASSES[s])
        if rng.random() > 0.8:
            s = rng.randrange(7)
    states[100] = None

    profile = wmc.weight_profile(states, max_lag=5)
    assert len(profile) == 5
    assert math.isclose(sum(r["weight"] for r in profile), 1.0)

    mats = wmc.estimate_transitions(states, max_lag=3)
    assert len(mats) == 3 and len(mats[0]) == 7

    model = wmc.WmcModel.fit(states, max_lag=5)
    forecasts = model.predict(states, horizon=3)
    assert len(forecasts) == 3
    assert forecasts[0]["predicted"] in wmc.CLASSES
    assert math.isclose(sum(forecasts[0]["probabilities"]), 1.0)

    report = wmc.backtest(states, max_lag=5, holdout=24)
    assert 0.0 <= report["hit_rate"] <= 1.0
    assert set(report["scores"]) == {"wmc", "markov-lag1", "climatology"}

    values = [rng.gammavariate(2.0, 30.0) for _ in range(600)]
    index = wmc.standardize(values, start="1960-01")
    assert len(index) == 600 and all(v is not None for v in index)

    try:
        wmc.classify_series([float("nan")])
    except ValueError:
        pass
    else:
        raise AssertionError("NaN accepted")

    print("smoke test passed:", model, forecasts[0]["predicted"])


if __name__ == "__main__":
    main()
