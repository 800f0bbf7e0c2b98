import numpy as np
import pytest

from grasorw import loader_model as lm


def synth(alpha_f, b_f, alpha_o, n, noise=0.0, block=0, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        eta = rng.uniform(0, 4)
        mode = lm.FULL if k % 2 == 0 else lm.ON_DEMAND
        t = alpha_f * eta + b_f if mode == lm.FULL else alpha_o * eta
        t *= 1 + noise * rng.standard_normal()
        out.append(lm.LoadSample(block, eta, mode, max(t, 0.0)))
    return out


def test_noiseless_fit():
    m = lm.fit(synth(1, 2, 3, 50))
    assert m.alpha_f == pytest.approx(1, abs=1e-9)
    assert m.b_f == pytest.approx(2, abs=1e-9)
    assert m.alpha_o == pytest.approx(3, abs=1e-9)
    assert m.eta0 == pytest.approx(1.0, abs=1e-9)


def test_noisy_fit_recovers_threshold():
    m = lm.fit(synth(1, 2, 3, 200, noise=0.05, seed=11))
    assert abs(m.eta0 - 1.0) / 1.0 < 0.05


def test_degenerate_prefers_on_demand():
    m = lm.fit(synth(3, 2, 1, 40))
    assert m.degenerate and m.eta0 is None
    assert m.choose(100.0) == lm.ON_DEMAND


def test_choose_mode_threshold():
    model = lm.LoaderModel()
    model.global_model = lm.BlockCostModel(1.0, 2.0, 3.0)
    assert model.choose_mode(0, 30, 10) == lm.FULL
    assert model.choose_mode(0, 0, 10) == lm.ON_DEMAND
    assert model.choose_mode(0, 10, 10) == lm.ON_DEMAND  # eta == eta0
    with pytest.raises(ValueError):
        model.choose_mode(0, 1, 0)
    assert lm.LoaderModel().choose_mode(0, 1, 1) == lm.FULL


def test_per_block_models_and_fallback():
    model = lm.LoaderModel()
    for s in synth(1, 2, 3, 20, block=0) + synth(1, 4, 2, 20, block=1, seed=1) + \
            synth(1, 1, 2, 4, block=2):
        model.record(s)
    model.fit()
    assert set(model.blocks) == {0, 1}
    assert model.model_for(1).eta0 == pytest.approx(4.0)
    assert model.model_for(2) is model.global_model


def test_insufficient_samples():
    with pytest.raises(lm.InsufficientSamples):
        lm.fit([lm.LoadSample(0, 1.0, lm.FULL, 1.0)])
    model = lm.LoaderModel()
    model.record(lm.LoadSample(0, 0.0, lm.FULL, 1.0))
    model.fit()
    assert model.global_model is None and model.to_json()["fallback"]


def test_zero_eta_full_sample_sets_intercept():
    s = [lm.LoadSample(0, 0.0, lm.FULL, 2.0), lm.LoadSample(0, 1.0, lm.FULL, 3.0),
         lm.LoadSample(0, 1.0, lm.ON_DEMAND, 3.0)]
    assert lm.fit(s).b_f == pytest.approx(2.0)


def test_persistence(tmp_path):
    model = lm.LoaderModel()
    for s in synth(1, 2, 3, 30):
        model.record(s)
    model.fit()
    model.save(tmp_path / "m.json")
    model.save_samples(tmp_path / "s.csv")
    back = lm.LoaderModel.load(tmp_path / "m.json")
    assert back.model_for(0) == model.model_for(0)
    again = lm.LoaderModel.load_samples(tmp_path / "s.csv")
    assert again.samples == model.samples
    parts = again.by_block()
    assert len(parts[0]) == 30


def test_invalid_sample():
    with pytest.raises(ValueError):
        lm.LoadSample(0, 1.0, "sometimes", 1.0)
    with pytest.raises(ValueError):
        lm.LoadSample(0, -1.0, lm.FULL, 1.0)
