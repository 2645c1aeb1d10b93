import csv
import io
import json

import numpy as np
import pytest

from kronmde.cli import InputError, main, parse_complex, parse_oracle, parse_range
from kronmde.model import load_model


def read_csv(path):
    lines = open(path).read().splitlines()
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    return meta, list(csv.DictReader(io.StringIO("\n".join(body)))), "\n".join(body)


def read_json(path):
    return json.load(open(path))


@pytest.mark.parametrize("text,value", [
    ("0.5+1e-3i", 0.5 + 1e-3j), ("2i", 2j), ("-i", -1j), ("1.5", 1.5), ("1 - 2 j", 1 - 2j), ("i", 1j),
])
def test_parse_complex(text, value):
    assert parse_complex(text) == value


def test_parse_errors():
    with pytest.raises(InputError):
        parse_complex("abc")
    with pytest.raises(InputError):
        parse_range("0:1")
    with pytest.raises(InputError):
        parse_oracle("square:1")
    np.testing.assert_allclose(parse_range("-1:1:3"), [-1, 0, 1])


def test_parse_oracle_disk():
    o = parse_oracle("disk:0.5")
    assert o.distance(np.array([0.4, 0.6]))[0] == 0
    assert o.distance(np.array([0.6]))[0] == pytest.approx(0.1, abs=5e-3)


def test_preset_round_trip(tmp_path):
    path = tmp_path / "w.json"
    assert main(["preset", "wigner", "--N", "20", "--out", str(path)]) == 0
    m = load_model(path)
    assert m.N == 20 and m.is_hermitian


def test_solve_wigner(tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve", "--preset", "wigner", "--N", "10", "--z", "i", "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["converged"]
    assert doc["meta"]["command"] == "solve" and "model_hash" in doc["meta"]
    assert doc["residual"] < 1e-9


def test_solve_small_eta(tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve", "--preset", "wigner", "--N", "10", "--z", "0.5+1e-4i", "--out", str(out)]) == 0
    assert read_json(out)["converged"]


def test_solve_requires_zeta_for_nonhermitian(tmp_path):
    out = tmp_path / "s.json"
    assert main(["solve", "--preset", "ginibre", "--N", "10", "--z", "i", "--out", str(out)]) == 2
    assert main(["solve", "--preset", "ginibre", "--N", "10", "--z", "i", "--zeta", "0.5",
                 "--out", str(out)]) == 0


def test_exit_codes_input(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"L": 1}')
    assert main(["solve", str(bad), "--z", "i"]) == 2
    assert "N" in capsys.readouterr().err
    assert main(["solve", str(tmp_path / "missing.json"), "--z", "i"]) == 2
    assert main(["solve", "--preset", "wigner", "--z", "-i"]) == 2
    assert main(["nonsense"]) == 2


def test_dos_wigner(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["dos", "--preset", "wigner", "--N", "10", "--E=-1.9:1.9:39", "--eta", "1e-4",
                 "--out", str(out)]) == 0
    meta, rows, _ = read_csv(out)
    assert any(l.startswith("# model_hash:") for l in meta)
    E = np.array([float(r["E"]) for r in rows])
    rho = np.array([float(r["rho"]) for r in rows])
    np.testing.assert_allclose(rho, np.sqrt(4 - E ** 2) / (2 * np.pi), atol=5e-3)


def test_dos_two_band_gap(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["dos", "--preset", "two-band", "--N", "10", "--E=-0.5:0.5:11", "--eta", "1e-4",
                 "--out", str(out)]) == 0
    _, rows, _ = read_csv(out)
    assert max(float(r["rho"]) for r in rows) < 1e-3


def test_support_semicircle(tmp_path):
    out, rep = tmp_path / "s.csv", tmp_path / "s.json"
    assert main(["support", "--preset", "wigner", "--N", "10", "--step", "0.05", "--out", str(out),
                 "--report", str(rep)]) == 0
    (lo, hi), = read_json(rep)["intervals"]
    assert abs(lo + 2) < 0.06 and abs(hi - 2) < 0.06


def _pseudo(tmp_path, name, threads, extra=()):
    out = tmp_path / name
    code = main(["--threads", str(threads), "pseudospectrum", "--preset", "ginibre", "--N", "10",
                 "--grid=-1.5:1.5:7,-1.5:1.5:5", "--out", str(out), *extra])
    return code, out


def test_pseudospectrum_monotone_and_layout(tmp_path):
    code, small = _pseudo(tmp_path, "a.csv", 1, ["--epsilon", "0.02"])
    assert code == 0
    _, big = _pseudo(tmp_path, "b.csv", 1, ["--epsilon", "0.1"])
    _, ra, _ = read_csv(small)
    _, rb, _ = read_csv(big)
    assert len(ra) == 35
    assert [float(r["re"]) for r in ra[:7]] == list(np.linspace(-1.5, 1.5, 7))
    for a, b in zip(ra, rb):
        assert int(a["member"]) <= int(b["member"])
        r = abs(complex(float(a["re"]), float(a["im"])))
        assert int(a["member"]) == (r <= 1.0) or abs(r - 1) < 0.15


def test_pseudospectrum_thread_invariance(tmp_path):
    _, one = _pseudo(tmp_path, "one.csv", 1)
    _, two = _pseudo(tmp_path, "two.csv", 2)
    assert read_csv(one)[2] == read_csv(two)[2]


def test_pseudospectrum_bad_grid(tmp_path):
    assert main(["pseudospectrum", "--preset", "ginibre", "--N", "10", "--grid", "0:1:3"]) == 2


def test_verify_containment(tmp_path):
    out = tmp_path / "v.json"
    args = ["verify", "--preset", "ginibre", "--N", "300", "--trials", "2", "--out", str(out)]
    assert main(args + ["--oracle", "disk:1"]) == 0
    assert read_json(out)["containment"]["total_outside"] == 0
    assert main(args + ["--oracle", "disk:0.5"]) == 5
    assert not read_json(out)["ok"]


def test_verify_global_law(tmp_path):
    out = tmp_path / "v.json"
    assert main(["verify", "--preset", "wigner", "--N", "1000", "--trials", "1", "--out", str(out)]) == 0
    assert read_json(out)["global_law"]["kolmogorov_distance"] < 0.03


def test_verify_needs_oracle():
    assert main(["verify", "--preset", "ginibre", "--N", "10"]) == 2


def test_diagnose(tmp_path):
    out = tmp_path / "d.json"
    assert main(["diagnose", "--preset", "fig1a", "--N", "10", "--z", "0.1+0.5i", "--zeta", "0.3",
                 "--out", str(out)]) == 0
    doc = read_json(out)
    assert doc["self_adjoint_ok"] and doc["decomposition_ok"]
    assert doc["gap_identity_residual"] < 1e-6


def test_verify_dumps(tmp_path):
    eigs, hist, out = tmp_path / "e.csv", tmp_path / "h.csv", tmp_path / "v.json"
    assert main(["verify", "--preset", "wigner", "--N", "100", "--trials", "2", "--eigs-out", str(eigs),
                 "--hist-out", str(hist), "--hist-bins", "40", "--out", str(out)]) == 0
    meta, rows, _ = read_csv(eigs)
    assert any(l.startswith("# seeds:") for l in meta)
    assert len(rows) == 200 and {r["trial"] for r in rows} == {"0", "1"}
    assert all(float(r["im"]) == 0 for r in rows)
    _, hrows, _ = read_csv(hist)
    assert len(hrows) == 40
    assert sum(float(r["weight"]) for r in hrows) == pytest.approx(1.0)


def test_verify_size_cap(tmp_path, capsys):
    assert main(["verify", "--preset", "ginibre", "--N", "2001", "--oracle", "disk:1"]) == 2
    assert "cap" in capsys.readouterr().err


@pytest.mark.slow
def test_pseudospectrum_five_point_topology(tmp_path):
    from scipy import ndimage

    from kronmde.presets import FIG1_POINTS
    from kronmde.spectrum import ZetaGrid, example_oracle

    out = tmp_path / "d.csv"
    grid = "-2.3:2.3:41,-1:2.2:41"
    assert main(["pseudospectrum", "--preset", "fig1d", "--grid=" + grid, "--epsilon", "0.02",
                 "--out", str(out)]) == 0
    _, rows, _ = read_csv(out)
    mask = np.array([int(r["member"]) for r in rows], bool).reshape(41, 41)
    oracle = example_oracle(FIG1_POINTS["fig1d"], None, ZetaGrid.parse(grid).points())
    assert ndimage.label(mask)[1] == ndimage.label(oracle)[1] == 1
    # every lobe centre is covered
    for z in FIG1_POINTS["fig1d"]:
        i = int(round((z.imag + 1) / 3.2 * 40))
        j = int(round((z.real + 2.3) / 4.6 * 40))
        assert mask[i, j]
