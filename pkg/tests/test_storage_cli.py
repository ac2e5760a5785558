import json

import numpy as np
import pytest

from walkroll import storage
from walkroll.cli import EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_IO, EXIT_OK, main
from walkroll.control import ControllerConfig, GaitController
from walkroll.fixtures import reference_design
from walkroll.sim import EpisodeConfig, Terrain, run_episode
from walkroll.statics import build_moment_field, select_thresholds


def test_design_roundtrip_is_exact(ref, tmp_path):
    p = tmp_path / "d.json"
    storage.save_design(p, ref, manifest={"note": "x"})
    assert storage.load_design(p) == ref
    first = p.read_bytes()
    storage.save_design(p, storage.load_design(p), manifest={"note": "x"})
    assert p.read_bytes() == first


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(format="other"),
    lambda d: d.update(version=99),
    lambda d: d.update(units={"length": "mm"}),
    lambda d: d.pop("front_leg"),
])
def test_design_rejects_bad_documents(ref, mutate):
    doc = storage.design_to_dict(ref)
    mutate(doc)
    with pytest.raises(storage.FileFormatError):
        storage.design_from_dict(doc)


def test_controller_roundtrip(ref, tmp_path):
    cfg = ControllerConfig(thresholds=select_thresholds(build_moment_field(ref, 128, 16)),
                           dphi_range=ref.dphi_range)
    storage.save_controller(tmp_path / "c.json", cfg)
    assert storage.load_controller(tmp_path / "c.json") == cfg


def test_trace_csv_roundtrip(ref, tmp_path):
    cfg = ControllerConfig(thresholds=select_thresholds(build_moment_field(ref, 360, 28)),
                           dphi_range=ref.dphi_range)
    tr = run_episode(ref, GaitController(cfg), Terrain(), EpisodeConfig(duration=0.5))
    p = tmp_path / "t.csv"
    p.write_text(storage.trace_to_csv(tr))
    back = storage.read_trace(p)
    assert np.allclose(back["t[s]"], tr.column("t"))
    assert np.allclose(np.radians(back["theta_G[deg]"]), tr.column("theta_G"))
    assert list(back["state"]) == tr.state
    assert sum(1 for e in back["events"] if e) > 0


def test_read_table_rejects_wrong_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(storage.FileFormatError):
        storage.read_trace(p)


def test_cli_generate_contour_simulate_report(tmp_path, capsys):
    d = tmp_path / "design.json"
    assert main(["generate", "--seed", "3", "--out", str(d)]) == EXIT_OK
    assert storage.load_design(d).body.width == 0.06
    assert (tmp_path / "manifest.json").exists()

    storage.save_design(d, reference_design())
    cdir = tmp_path / "contour"
    assert main(["contour", str(d), "--n-theta", "128", "--n-dphi", "16", "--out-dir", str(cdir)]) == EXIT_OK
    for name in ("contour.csv", "contour.svg", "controller.json", "manifest.json"):
        assert (cdir / name).exists()
    assert len(storage.read_table(cdir / "contour.csv", storage.CONTOUR_HEADER)) == 128 * 16

    sdir = tmp_path / "sim"
    rc = main(["simulate", str(d), "--controller", str(cdir / "controller.json"), "--duration", "1",
               "--seeds", "0", "1", "--out-dir", str(sdir)])
    assert rc == EXIT_OK
    report = json.loads((sdir / "report.json").read_text())
    assert [r["seed"] for r in report] == [0, 1]
    man = json.loads((sdir / "manifest.json").read_text())
    assert man["seeds"] == [0, 1] and "trace_1.csv" in man["outputs"]

    out = tmp_path / "table.md"
    assert main(["report", str(sdir / "trace_0.csv"), "--out", str(out)]) == EXIT_OK
    text = out.read_text()
    assert text.startswith("| trace | mass[kg]") and "trace_0.csv" in text


def test_cli_search_small(tmp_path):
    rc = main(["search", "--samples", "4", "--n-theta", "64", "--n-dphi", "16", "--out-dir", str(tmp_path)])
    assert rc == EXIT_OK
    rows = storage.read_table(tmp_path / "results.csv", storage.SEARCH_HEADER)
    assert len(rows) == 4
    assert (tmp_path / "scatter.svg").read_text().startswith("<svg")


@pytest.mark.parametrize("argv,code", [
    (["simulate", "missing.json", "--out-dir", "{tmp}/o"], EXIT_IO),
    (["simulate", "{tmp}/bad.json", "--out-dir", "{tmp}/o"], EXIT_CONFIG),
    (["simulate", "{tmp}/d.json", "--script", "1:flying", "--out-dir", "{tmp}/o"], EXIT_CONFIG),
    (["generate", "--seed", "1", "--com-y", "0.5", "--out", "{tmp}/g.json"], EXIT_CONFIG),
    (["search", "--samples", "2", "--failure-limit", "0.0", "--n-theta", "64", "--n-dphi", "16",
      "--out-dir", "{tmp}/s"], None),
])
def test_cli_exit_codes(tmp_path, argv, code):
    (tmp_path / "bad.json").write_text("{not json")
    storage.save_design(tmp_path / "d.json", reference_design())
    argv = [a.replace("{tmp}", str(tmp_path)) for a in argv]
    rc = main(argv)
    if code is None:
        assert rc in (EXIT_OK, EXIT_INFEASIBLE)
    else:
        assert rc == code


def test_cli_report_needs_traces():
    assert main(["report"]) == EXIT_CONFIG


def test_design_svg_renders(ref):
    svg = storage.design_svg(ref)
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    assert "nan" not in svg
