import json
import subprocess
import sys

import numpy as np
import pytest

from nrbc import cli
from nrbc.kernels import CompressedTable, serialize_table
from nrbc.zeros import find_zeros


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))


def test_zeros_l2(tmp_path):
    out = tmp_path / "z" / "zeros.csv"
    assert cli.main(["zeros", "--l", "2", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["j", "re", "im", "residual"]
    z = data[:, 1] + 1j * data[:, 2]
    assert len(z) == 2 and abs(z[0] - np.conj(z[1])) < 1e-15
    assert np.allclose(z, [-1.5 - 0.8660254037844386j, -1.5 + 0.8660254037844386j], atol=1e-15)
    m = json.loads((tmp_path / "z" / "manifest.json").read_text())
    assert m["poles"] == {"2": 2} and m["command"] == "zeros"


def test_outputs_are_deterministic(tmp_path):
    for d in ("a", "b"):
        cli.main(["kernel", "--l", "30", "--b", "3", "--c", "5", "--tmax", "2", "--samples", "50",
                  "--out", str(tmp_path / d / "k.csv")])
    assert (tmp_path / "a" / "k.csv").read_bytes() == (tmp_path / "b" / "k.csv").read_bytes()
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["k.csv", "manifest.json"]
    text = (tmp_path / "a" / "manifest.json").read_text()
    assert text == json.dumps(json.loads(text), sort_keys=True, indent=2) + "\n"


def test_kernel_from_compressed_table(tmp_path):
    table = CompressedTable({3: (find_zeros(3).zeros, find_zeros(3).zeros)}, {3: 1e-13})
    (tmp_path / "t.txt").write_text(serialize_table(table))
    cli.main(["kernel", "--l", "3", "--b", "1", "--c", "1", "--compressed", str(tmp_path / "t.txt"),
              "--tmax", "1", "--samples", "3", "--out", str(tmp_path / "c" / "k.csv")])
    cli.main(["kernel", "--l", "3", "--b", "1", "--c", "1", "--tmax", "1", "--samples", "3",
              "--out", str(tmp_path / "e" / "k.csv")])
    assert np.allclose(read_csv(tmp_path / "c" / "k.csv")[1], read_csv(tmp_path / "e" / "k.csv")[1],
                       rtol=1e-14, atol=0)
    m = json.loads((tmp_path / "c" / "manifest.json").read_text())
    assert m["provenance"]["kind"] == "compressed"


def test_convolve_with_oracle(tmp_path):
    t = np.arange(0, 101) * 0.01
    np.savetxt(tmp_path / "g.csv", np.c_[t, 2 * t - 0.5], delimiter=",", header="t,g", comments="")
    out = tmp_path / "c" / "conv.csv"
    assert cli.main(["convolve", "--kernel", "omega,l=4,b=1,c=2", "--signal", str(tmp_path / "g.csv"),
                     "--dt", "0.01", "--oracle", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["t", "value", "oracle"]
    assert np.max(np.abs(data[:, 1] - data[:, 2])) <= 1e-12 * np.max(np.abs(data[:, 2]))


def test_manufactured_writes_frames(tmp_path):
    spec = [{"l": 2, "m": 1, "polarization": "TM", "amplitude": [1, 0.5],
             "profile": {"kind": "sinpower", "p": 6, "q": 6.0}}]
    (tmp_path / "modes.json").write_text(json.dumps(spec))
    out = tmp_path / "frames"
    assert cli.main(["manufactured", "--spec", str(tmp_path / "modes.json"), "--b", "3", "--a", "2",
                     "--c", "5", "--t", "1", "--ntheta", "8", "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["E.csv", "grid.json", "lhs.csv", "manifest.json"]
    assert read_csv(out / "E.csv")[0] == ["theta_index", "phi_index", "Vr", "Vtheta", "Vphi"]


def test_etm_residual_default_family(tmp_path):
    out = tmp_path / "r" / "residuals.csv"
    assert cli.main(["etm-residual", "--a", "2", "--c", "5", "--b", "3", "--ntheta", "40",
                     "--tmax", "10", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["t", "e"] and len(data) == 20
    assert np.all(data[:, 1] <= 1e-10)
    m = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert m["provenance"]["mode"] == "exact" and m["poles"]["20"] == 20


def test_identities_exit_codes(monkeypatch, capsys):
    assert cli.main(["identities", "--lmax", "60"]) == 0
    monkeypatch.setitem(cli.IDENTITY_TOL, "rho_factorization", 0.0)
    assert cli.main(["identities", "--lmax", "3"]) == 4
    assert "rho_factorization" in capsys.readouterr().err


def test_usage_and_numerical_exit_codes(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["zeros"])
    assert e.value.code == 2
    assert cli.main(["zeros", "--l", "500"]) == 2
    assert cli.main(["etm-residual", "--b", "3", "--kernel", "bogus", "--out", str(tmp_path / "x.csv")]) == 2
    (tmp_path / "bad.txt").write_text("# nrbc-poles v1\nL 1 D 1\n-1 0 2 0\n")
    assert cli.main(["kernel", "--l", "1", "--b", "1", "--c", "1", "--compressed", str(tmp_path / "bad.txt"),
                     "--tmax", "1", "--out", str(tmp_path / "k.csv")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "nrbc.cli", "zeros", "--l", "3"],
                       capture_output=True, text=True, check=True)
    assert r.stdout.splitlines()[0] == "j,re,im,residual" and len(r.stdout.splitlines()) == 4
