
import numpy as np
import pytest

from ssmshrink.dssm import synth_random_dssm
from ssmshrink.lqo import StabilityError
from ssmshrink.modelio import (FormatError, dumps_model, load_model, load_report, load_signal,
                               model_from_dict, model_to_dict, report_csv, save_model,
                               save_report, save_signal)
from ssmshrink.reduce import IterationRecord, ReductionReport


def test_round_trip_bit_exact(tmp_path):
    model = synth_random_dssm(2, 5, 3, 2, seed=8, ln_eps=3e-5)
    path = tmp_path / "m.json"
    save_model(model, path)
    back = load_model(path)
    for a, b in zip(model.layers, back.layers):
        for name in ("lam", "B", "C", "U"):
            np.testing.assert_array_equal(getattr(a.system, name), getattr(b.system, name))
        np.testing.assert_array_equal(a.ln.gamma1, b.ln.gamma1)
        np.testing.assert_array_equal(a.ln.gamma2, b.ln.gamma2)
        assert a.ln.eps == b.ln.eps
    assert dumps_model(back) == path.read_text()


def test_layout(tmp_path):
    d = model_to_dict(synth_random_dssm(1, 3, 2, 1, seed=0))
    assert d["format_version"] == 1
    layer = d["layers"][0]
    assert np.shape(layer["lambda"]) == (3, 2)
    assert np.shape(layer["B"]) == (3, 2, 2)
    assert np.shape(layer["C"]) == (2, 3, 2)
    assert np.shape(layer["U"]) == (2, 1, 3, 2)
    assert len(layer["ln_gamma1"]) == 2


def test_invariants_on_load():
    d = model_to_dict(synth_random_dssm(1, 3, 2, 1, seed=0))
    d["layers"][0]["lambda"][0] = [1.0, 0.0]
    with pytest.raises(StabilityError):
        model_from_dict(d)


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format_version=2),
    lambda d: d["layers"][0].pop("B"),
    lambda d: d["layers"][0].update(C=[[1.0, 2.0]]),
    lambda d: d.update(layers=[]),
    lambda d: d["layers"][0].update(ln_gamma1=[1.0]),
])
def test_bad_files(mutate):
    d = model_to_dict(synth_random_dssm(1, 3, 2, 1, seed=0))
    mutate(d)
    with pytest.raises(ValueError):
        model_from_dict(d)


def test_invalid_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(FormatError):
        load_model(p)


def test_signal_round_trip(tmp_path, rng):
    s = rng.standard_normal((7, 3))
    save_signal(s, tmp_path / "u.csv")
    np.testing.assert_array_equal(load_signal(tmp_path / "u.csv"), s)


def test_signal_header_and_errors(tmp_path):
    p = tmp_path / "u.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    np.testing.assert_array_equal(load_signal(p, header=True), [[1, 2], [3, 4]])
    with pytest.raises(FormatError):
        load_signal(p)
    p.write_text("1,2\n3\n")
    with pytest.raises(FormatError):
        load_signal(p)
    p.write_text("1,nan\n")
    with pytest.raises(FormatError):
        load_signal(p)


def test_report(tmp_path):
    rep = ReductionReport(rows=[IterationRecord(0, 2.5, 1.0, 3, 0.125),
                                IterationRecord(1, 2.0, 0.5, 0, float("nan"))])
    assert report_csv(rep).splitlines()[0] == "iter,objective,grad_norm,backtracks,eta_scale"
    save_report(rep, tmp_path / "r.csv")
    cols = load_report(tmp_path / "r.csv")
    assert cols["iter"] == [0, 1] and cols["objective"] == [2.5, 2.0]
    assert cols["backtracks"] == [3, 0] and np.isnan(cols["eta_scale"][1])
