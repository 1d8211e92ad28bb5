import json

import numpy as np
import pytest

from blenderlab.certificate import validate
from blenderlab.cli import EXIT_CAP, EXIT_FAIL, EXIT_IO, EXIT_PASS, EXIT_SEARCH, EXIT_USAGE, main
from blenderlab.gallery.render import read_ppm


@pytest.fixture
def run(capsys, caplog):
    """Invoke the CLI in-process; returns (exit code, stdout, log text)."""
    def go(*argv):
        caplog.clear()
        code = main([str(a) for a in argv])
        return code, capsys.readouterr().out, caplog.text
    return go


def test_periodic_w7(run, tmp_path):
    code, out, _ = run("periodic", "--q", "w^7", "--m", 1, "--out", tmp_path)
    assert code == EXIT_PASS
    assert "7 orbits" in out
    d = json.loads((tmp_path / "periodic.json").read_text())
    rep = [o for o in d["orbits"] if o["classification"] == "repelling"]
    assert len(d["orbits"]) == 7 and len(rep) == 6


def test_periodic_w2_classes(run, tmp_path):
    code, out, _ = run("periodic", "--q", "w^2", "--out", tmp_path)
    assert code == EXIT_PASS
    assert "attracting" in out and "repelling" in out


@pytest.mark.parametrize("q", ["w^2+", "w^^2", "z w", "(w"])
def test_malformed_polynomial_is_usage_error(run, tmp_path, q):
    assert run("periodic", "--q", q, "--out", tmp_path)[0] == EXIT_USAGE


def test_degree_cap(run, tmp_path):
    code, _, err = run("periodic", "--q", "w^2", "--m", 13, "--degree-cap", 4096, "--out", tmp_path)
    assert code == EXIT_CAP
    assert "DegreeCap" in err


def test_argparse_errors_are_usage(run):
    assert run("periodic")[0] == EXIT_USAGE
    assert run("nonsense")[0] == EXIT_USAGE
    assert run("blender", "--gallery", "moon")[0] == EXIT_USAGE
    assert run("--version")[0] == EXIT_PASS


def test_blender_needs_a_source(run, tmp_path):
    assert run("blender", "--out", tmp_path)[0] == EXIT_USAGE


def test_blender_model_self_test(run, tmp_path):
    code, out, _ = run("blender", "--model", "--out", tmp_path)
    assert code == EXIT_PASS
    assert "certified at l = 2" in out
    cert = json.loads((tmp_path / "certificate.json").read_text())
    validate(cert)
    assert cert["pass"] is True and cert["params"]["l"] == 2
    wit = json.loads((tmp_path / "witness.json").read_text())
    assert wit["verified"] is True
    assert (tmp_path / "graph.csv").read_text().startswith("w_re,w_im")


def test_blender_saddle_model(run, tmp_path):
    assert run("blender", "--model", "--regime", "saddle", "--out", tmp_path)[0] == EXIT_PASS
    assert not (tmp_path / "witness.json").exists()


def test_blender_wrong_regime(run, tmp_path):
    code, _, err = run("blender", "--model", "--regime", "saddle", "--rho", "1.2", "--out", tmp_path)
    assert code == EXIT_SEARCH
    assert "WrongRegime" in err


def test_blender_search_exhausted(run, tmp_path):
    code, _, err = run("blender", "--model", "--l-range", "1:1", "--out", tmp_path)
    assert code == EXIT_SEARCH
    assert "census" in err
    assert run("blender", "--model", "--l-range", "3:1", "--out", tmp_path)[0] == EXIT_USAGE


def test_theorem41_parabolic_parameter(run, tmp_path):
    lam = np.exp(2j * np.pi / 3)
    code, _, err = run("theorem41", f"--lambda={float(lam.real)!r}+{float(lam.imag)!r}i", "--out", tmp_path)
    assert code == EXIT_SEARCH
    assert "[perturbation_plan] WrongRegime" in err


def test_theorem41_unknown_family(run, tmp_path):
    assert run("theorem41", "--family", "cubic", "--out", tmp_path)[0] == EXIT_USAGE
    assert run("theorem41", "--lambda=abc", "--out", tmp_path)[0] != EXIT_PASS


def test_render_escape(run, tmp_path):
    p = tmp_path / "r.ppm"
    code, out, _ = run("render", "--resolution", 64, "--iterations", 16, "--out", p)
    assert code == EXIT_PASS and "64x64" in out
    rgb = read_ppm(p)
    assert rgb.shape == (64, 64, 3)
    # the filled unit disc escapes late, the corners escape at once
    assert rgb[32, 32].sum() > rgb[0, 0].sum()


def test_render_to_directory(run, tmp_path):
    assert run("render", "--resolution", 8, "--out", tmp_path)[0] == EXIT_PASS
    assert (tmp_path / "render.ppm").exists()


@pytest.mark.parametrize("res", [0, -3, 5000])
def test_render_resolution_usage(run, tmp_path, res):
    assert run("render", "--resolution", res, "--out", tmp_path / "x.ppm")[0] == EXIT_USAGE


def test_io_failure(run, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    code, _, err = run("periodic", "--q", "w^2", "--out", blocker / "sub")
    assert code == EXIT_IO
    assert "I/O" in err
    assert run("render", "--resolution", 8, "--out", blocker / "r.ppm")[0] == EXIT_IO


def test_exit_code_constants_are_distinct():
    assert len({EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_CAP, EXIT_SEARCH, EXIT_IO}) == 6
