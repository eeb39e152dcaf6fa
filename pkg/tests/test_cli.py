import json
import subprocess
import sys

import numpy as np
import pytest

from ssmshrink.bound import measured_output_error
from ssmshrink.cli import main
from ssmshrink.dssm import DeepSsm, Layer
from ssmshrink.layernorm import LayerNormParams
from ssmshrink.modelio import dumps_model, load_model, load_report, save_model, save_signal


@pytest.fixture
def model_file(tmp_path):
    path = tmp_path / "m.json"
    assert main(["synth", "--layers", "2", "--state-dim", "8", "--width", "4",
                 "--quad-rank", "1", "--seed", "7", "-o", str(path)]) == 0
    return path


@pytest.fixture
def signal_file(tmp_path):
    path = tmp_path / "u.csv"
    save_signal(np.random.default_rng(0).standard_normal((32, 4)), path)
    return path


def test_synth_round_trip(model_file):
    assert dumps_model(load_model(model_file)) == model_file.read_text()


def test_synth_deterministic(model_file, tmp_path):
    other = tmp_path / "again.json"
    main(["synth", "--layers", "2", "--state-dim", "8", "--width", "4",
          "--quad-rank", "1", "--seed", "7", "-o", str(other)])
    assert other.read_bytes() == model_file.read_bytes()


@pytest.mark.parametrize("bad", [["--state-dim", "0"], ["--state-dim", "x"],
                                 ["--state-dim", "4", "--ln-eps", "-1"]])
def test_synth_validation(tmp_path, bad):
    argv = ["synth", "--layers", "2", "--width", "3", "-o", str(tmp_path / "x.json")] + bad
    assert main(argv) == 2


def test_reduce_full_rank(model_file, tmp_path, capsys):
    out, rep = tmp_path / "r.json", tmp_path / "r.csv"
    assert main(["reduce", "--model", str(model_file), "--ranks", "8,8", "--horizon", "16",
                 "-o", str(out), "--report", str(rep)]) == 0
    assert load_report(rep)["objective"][0] == 0.0


def test_reduce_run(model_file, tmp_path):
    out, rep = tmp_path / "r.json", tmp_path / "r.csv"
    code = main(["reduce", "--model", str(model_file), "--ranks", "3,2", "--horizon", "16",
                 "--max-iters", "6", "--eta", "1,1,1,1", "-o", str(out), "--report", str(rep)])
    assert code == 0
    red = load_model(out)
    assert [s.n for s in red.systems] == [3, 2]
    obj = load_report(rep)["objective"]
    assert len(obj) == 7 and all(b <= a for a, b in zip(obj, obj[1:]))


def test_reduce_random_init_deterministic(model_file, tmp_path):
    files = []
    for k in range(2):
        out, rep = tmp_path / f"r{k}.json", tmp_path / f"r{k}.csv"
        assert main(["reduce", "--model", str(model_file), "--ranks", "2,2", "--horizon", "8",
                     "--init", "random", "--seed", "3", "--max-iters", "3",
                     "-o", str(out), "--report", str(rep)]) == 0
        files.append((out.read_bytes(), rep.read_bytes()))
    assert files[0] == files[1]


def test_reduce_errors(model_file, tmp_path):
    base = ["reduce", "--model", str(model_file), "--horizon", "8",
            "-o", str(tmp_path / "r.json"), "--report", str(tmp_path / "r.csv")]
    assert main(base + ["--ranks", "2"]) == 2
    assert main(base + ["--ranks", "2,9"]) == 2
    assert main(base + ["--ranks", "2,2", "--rho", "1.5"]) == 2
    assert main(base + ["--ranks", "2,2", "--eta", "1,1"]) == 2
    assert main(["reduce", "--model", str(tmp_path / "missing.json"), "--ranks", "2,2",
                 "--horizon", "8", "-o", "x", "--report", "y"]) == 2


def test_reduce_unstable_model(model_file, tmp_path):
    d = json.loads(model_file.read_text())
    d["layers"][0]["lambda"][0] = [0.9999999, 0.0]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(d))
    assert main(["reduce", "--model", str(bad), "--ranks", "2,2", "--horizon", "8",
                 "-o", str(tmp_path / "r.json"), "--report", str(tmp_path / "r.csv")]) == 3


def test_reduce_stall_exit_code(model_file, tmp_path):
    out, rep = tmp_path / "r.json", tmp_path / "r.csv"
    code = main(["reduce", "--model", str(model_file), "--ranks", "2,2", "--horizon", "8",
                 "--eta", "1e300,1e300,1e300,1e300", "--rho", "0.999", "--max-iters", "2",
                 "-o", str(out), "--report", str(rep)])
    assert code == 3
    assert out.exists() and rep.exists()


def test_bound_json(model_file, signal_file, tmp_path, capsys):
    out, rep = tmp_path / "r.json", tmp_path / "r.csv"
    main(["reduce", "--model", str(model_file), "--ranks", "3,3", "--horizon", "32",
          "--max-iters", "3", "-o", str(out), "--report", str(rep)])
    capsys.readouterr()
    assert main(["bound", "--full", str(model_file), "--reduced", str(out),
                 "--input", str(signal_file), "--horizon", "32"]) == 0
    d = json.loads(capsys.readouterr().out)
    for key in ("per_layer", "omega", "b", "bound_value", "measured_error"):
        assert key in d
    assert len(d["per_layer"]) == 2
    assert d["bound_value"] >= d["measured_error"] and d["sound"]


def test_bound_identical(model_file, signal_file, capsys):
    assert main(["bound", "--full", str(model_file), "--reduced", str(model_file),
                 "--input", str(signal_file), "--horizon", "32"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["bound_value"] == 0.0 and d["measured_error"] == 0.0


def test_bound_small_b_warns(model_file, signal_file, tmp_path, capsys):
    red = tmp_path / "r.json"
    main(["reduce", "--model", str(model_file), "--ranks", "3,3", "--horizon", "32",
          "--max-iters", "0", "-o", str(red), "--report", str(tmp_path / "r.csv")])
    capsys.readouterr()
    assert main(["bound", "--full", str(model_file), "--reduced", str(red),
                 "--input", str(signal_file), "--horizon", "32", "--b", "0.01"]) == 0
    captured = capsys.readouterr()
    assert "not guaranteed" in captured.err
    assert json.loads(captured.out)["sound"] is False


def test_bound_incompatible(model_file, signal_file, tmp_path):
    other = tmp_path / "o.json"
    main(["synth", "--layers", "3", "--state-dim", "4", "--width", "4", "-o", str(other)])
    assert main(["bound", "--full", str(model_file), "--reduced", str(other),
                 "--input", str(signal_file), "--horizon", "32"]) == 2
    narrow = tmp_path / "n.json"
    main(["synth", "--layers", "2", "--state-dim", "4", "--width", "3", "-o", str(narrow)])
    assert main(["eval", "--full", str(model_file), "--reduced", str(narrow),
                 "--input", str(signal_file), "--horizon", "32"]) == 2


def test_bound_header_flag(model_file, tmp_path, capsys):
    p = tmp_path / "h.csv"
    p.write_text("a,b,c,d\n" + "\n".join("0.1,0.2,0.3,0.4" for _ in range(8)) + "\n")
    assert main(["eval", "--full", str(model_file), "--reduced", str(model_file),
                 "--input", str(p), "--horizon", "8"]) == 2
    assert main(["eval", "--full", str(model_file), "--reduced", str(model_file),
                 "--input", str(p), "--horizon", "8", "--header"]) == 0


def _eval_lines(capsys):
    return capsys.readouterr().out.strip().splitlines()


def test_eval_matches_bound_module(model_file, signal_file, tmp_path, capsys):
    red = tmp_path / "r.json"
    main(["reduce", "--model", str(model_file), "--ranks", "3,3", "--horizon", "32",
          "--max-iters", "0", "-o", str(red), "--report", str(tmp_path / "r.csv")])
    capsys.readouterr()
    assert main(["eval", "--full", str(model_file), "--reduced", str(red),
                 "--input", str(signal_file), "--horizon", "32"]) == 0
    lines = _eval_lines(capsys)
    e = float(lines[0].split(",")[1])
    s = np.loadtxt(signal_file, delimiter=",")
    assert e == measured_output_error(load_model(model_file), load_model(red), s, 32)
    assert lines[1] == "layer,u_norm,uhat_norm"
    assert len(lines) == 2 + 2 + 1


def test_eval_identical(model_file, signal_file, capsys):
    main(["eval", "--full", str(model_file), "--reduced", str(model_file),
          "--input", str(signal_file), "--horizon", "32"])
    assert _eval_lines(capsys)[0] == "e_xi,0.0"


def test_eval_zero_input_zero_scale(model_file, tmp_path, capsys):
    full = load_model(model_file)
    zeroed = DeepSsm(tuple(Layer(l.system, LayerNormParams(np.zeros(4), np.zeros(4), l.ln.eps))
                           for l in full.layers))
    f, r = tmp_path / "f.json", tmp_path / "g.json"
    save_model(zeroed, f)
    main(["reduce", "--model", str(f), "--ranks", "2,2", "--horizon", "8", "--max-iters", "0",
          "-o", str(r), "--report", str(tmp_path / "r.csv")])
    u = tmp_path / "z.csv"
    save_signal(np.zeros((8, 4)), u)
    capsys.readouterr()
    main(["eval", "--full", str(f), "--reduced", str(r), "--input", str(u), "--horizon", "8"])
    assert _eval_lines(capsys)[0] == "e_xi,0.0"


def test_gradcheck(model_file, capsys):
    base = ["gradcheck", "--model", str(model_file), "--ranks", "3,3", "--horizon", "16",
            "--seed", "2"]
    assert main(base) == 0
    table = capsys.readouterr().out.strip().splitlines()
    assert table[0] == "layer,block,max_rel_error" and len(table) == 1 + 2 * 4
    assert main(base + ["--inject-sign-flip"]) == 1
    assert main(base + ["--inject-sign-flip", "--threshold", "1.0"]) == 0
    assert main(base + ["--fd-step", "1e-2"]) == 2


def test_thread_env(model_file, monkeypatch):
    monkeypatch.setenv("SSMSHRINK_THREADS", "1")
    assert main(["gradcheck", "--model", str(model_file), "--ranks", "2,2",
                 "--horizon", "8"]) == 0
    monkeypatch.setenv("SSMSHRINK_THREADS", "zero")
    assert main(["gradcheck", "--model", str(model_file), "--ranks", "2,2",
                 "--horizon", "8"]) == 2


def test_usage_errors():
    assert main([]) == 2
    assert main(["nope"]) == 2
    assert main(["--help"]) == 0


def test_module_entry_point(tmp_path):
    out = tmp_path / "m.json"
    proc = subprocess.run([sys.executable, "-m", "ssmshrink", "synth", "--layers", "1",
                           "--state-dim", "3", "--width", "2", "-o", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert load_model(out).depth == 1


def test_reduce_synthetic_report(tmp_path):
    m, out, rep = tmp_path / "m.json", tmp_path / "r.json", tmp_path / "r.csv"
    main(["synth", "--layers", "3", "--state-dim", "16", "--width", "4", "--seed", "5",
          "-o", str(m)])
    assert main(["reduce", "--model", str(m), "--ranks", "4,4,4", "--horizon", "64",
                 "--max-iters", "50", "-o", str(out), "--report", str(rep)]) == 0
    obj = load_report(rep)["objective"]
    assert all(b <= a for a, b in zip(obj, obj[1:])) and obj[-1] < obj[0]


def test_init_comparison(tmp_path, capsys):
    wins = 0
    for seed in range(20):
        m = tmp_path / f"m{seed}.json"
        main(["synth", "--layers", "3", "--state-dim", "16", "--width", "4",
              "--seed", str(seed), "-o", str(m)])
        first = {}
        for init in ("mode-dominance", "random"):
            rep = tmp_path / f"{init}{seed}.csv"
            assert main(["reduce", "--model", str(m), "--ranks", "4,4,4", "--horizon", "64",
                         "--init", init, "--seed", str(seed), "--max-iters", "0",
                         "-o", str(tmp_path / "r.json"), "--report", str(rep)]) == 0
            first[init] = load_report(rep)["objective"][0]
        wins += first["mode-dominance"] <= first["random"]
    capsys.readouterr()
    assert wins >= 16
