import xml.etree.ElementTree as ET

import numpy as np
import pytest

from pif import MaskSpec, io
from pif.cli import main

TINY = "epochs = 2\nbatch_size = 64\nhidden_dim = 8\ndepth = 2\nn_steps = 5\n"


@pytest.fixture
def tiny_cfg(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return str(p)


def _run(*argv):
    return main([str(a) for a in argv])


def _bytes(path):
    with open(path, "rb") as fh:
        return fh.read()


def test_gen_data_layout(tmp_path):
    assert _run("gen-data", "--preset", "polygon5", "--count", 10, "--out", tmp_path) == 0
    lines = (tmp_path / "polygon5.csv").read_text().splitlines()
    assert len(lines) == 1 + 50
    assert {int(l.split(",")[0]) for l in lines[1:]} == set(range(10))
    assert _run("gen-data", "--preset", "swissroll", "--count", 1000, "--out", tmp_path) == 0
    assert len((tmp_path / "swissroll.csv").read_text().splitlines()) == 1001


def test_pipeline_is_deterministic(tmp_path, tiny_cfg):
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert _run("gen-data", "--preset", "polygon5", "--count", 200, "--seed", 3, "--out", out) == 0
        data = out / "polygon5.csv"
        assert _run("train", data, "--preset", "polygon5", "--config", tiny_cfg, "--out", out) == 0
        assert _run("sample", out / "checkpoint.json", "--count", 40, "--seed", 9, "--out", out) == 0
        assert _run("eval", out / "samples.csv", data, "--out", out) == 0
        assert _run("plot", out / "samples.csv", "--out", out) == 0
        outputs.append({name: _bytes(out / name) for name in (
            "polygon5.csv", "polygon5.norm.json", "checkpoint.json", "loss.csv",
            "samples.csv", "metrics.csv", "samples.svg")})
    for name in outputs[0]:
        assert outputs[0][name] == outputs[1][name], name


def test_sample_count_and_full_mask(tmp_path, tiny_cfg):
    assert _run("gen-data", "--preset", "polygon5", "--count", 100, "--out", tmp_path) == 0
    data = tmp_path / "polygon5.csv"
    assert _run("train", data, "--preset", "polygon5", "--config", tiny_cfg, "--out", tmp_path) == 0
    ckpt = tmp_path / "checkpoint.json"
    assert _run("sample", ckpt, "--count", 37, "--out", tmp_path / "s") == 0
    assert io.read_points_csv(tmp_path / "s" / "samples.csv").positions.shape == (37, 5, 2)

    ctx = io.read_points_csv(data, n_types=5)[:3]
    io.write_mask_csv(tmp_path / "full.csv", ctx, MaskSpec.fixing(np.ones((3, 5), bool)))
    assert _run("sample", ckpt, "--count", 3, "--mask", tmp_path / "full.csv", "--out", tmp_path / "m") == 0
    assert _bytes(tmp_path / "m" / "samples.csv") == _bytes(tmp_path / "m" / "samples.csv")
    out = io.read_points_csv(tmp_path / "m" / "samples.csv", n_types=5)
    assert out.positions.tobytes() == ctx.positions.tobytes()
    assert np.array_equal(out.types, ctx.types)


def test_eval_reference_against_itself(tmp_path):
    assert _run("gen-data", "--preset", "swissroll", "--count", 2000, "--out", tmp_path) == 0
    ref = tmp_path / "swissroll.csv"
    assert _run("eval", ref, ref, "--out", tmp_path) == 0
    rows = dict(line.split(",")[:2] for line in (tmp_path / "metrics.csv").read_text().splitlines()[1:])
    assert float(rows["hist_jsd"]) == 0.0 and float(rows["outlier_rate"]) == 0.0


def test_plot_is_valid_svg(tmp_path):
    assert _run("gen-data", "--preset", "typed-mixture", "--count", 300, "--out", tmp_path) == 0
    assert _run("plot", tmp_path / "typed_mixture.csv", "--output", tmp_path / "fig.svg") == 0
    root = ET.parse(tmp_path / "fig.svg").getroot()
    circles = root.findall(".//{http://www.w3.org/2000/svg}circle")
    assert len(circles) == 300


def test_plot_empty_csv(tmp_path, capsys):
    (tmp_path / "empty.csv").write_text("entity_id,point_id,x0,x1\n")
    assert _run("plot", tmp_path / "empty.csv", "--out", tmp_path) == 4
    assert not (tmp_path / "empty.svg").exists()
    assert capsys.readouterr().err.startswith("error: invalid-input:")


def test_error_categories(tmp_path, capsys):
    assert _run("sample", tmp_path / "missing.json") == 3
    assert "error: io:" in capsys.readouterr().err
    bad = tmp_path / "v.json"
    bad.write_text('{"format": "pif-checkpoint", "version": 42}')
    assert _run("sample", bad) == 5
    assert "error: version:" in capsys.readouterr().err
    assert _run("gen-data", "--seed", -1, "--out", tmp_path) == 4
    with pytest.raises(SystemExit) as exc:
        _run("nonsense")
    assert exc.value.code == 2


def test_eval_schema_mismatch(tmp_path):
    assert _run("gen-data", "--preset", "swissroll", "--count", 50, "--out", tmp_path) == 0
    assert _run("gen-data", "--preset", "polygon5", "--count", 50, "--out", tmp_path) == 0
    assert _run("eval", tmp_path / "swissroll.csv", tmp_path / "polygon5.csv", "--out", tmp_path) == 4
