import pytest

from qsdlab.config import RunConfig, load_config, parse_config
from qsdlab.errors import ConfigError
from qsdlab.io import read_csv, write_csv, write_text

GOOD = """
seed = 7
[model]
kind = "logistic"
mu = 0.3
[sim]
dt = 0.005
n_paths = 100
x0 = 0.5
[sweep]
eps = [0.2, 0.1, 0.05, 0.025]
"""


def test_parse_good_config():
    cfg = parse_config(GOOD)
    assert cfg.seed == 7 and cfg.sim.dt == 0.005 and cfg.sim.n_paths == 100 and cfg.x0 == 0.5
    assert cfg.sweep.eps == (0.2, 0.1, 0.05, 0.025)
    assert cfg.model().params["mu"] == 0.3


def test_defaults():
    cfg = load_config(None)
    assert cfg == RunConfig()
    assert cfg.model().kind == "logistic"


@pytest.mark.parametrize("text,needle", [
    ("[model]\nmuu = 1.0\n", "unknown key 'model.muu' (line 2)"),
    ("[modle]\nmu = 1.0\n", "unknown section"),
    ("sed = 3\n", "unknown key"),
    ("[sim]\ndt = \"fast\"\n", "sim.dt"),
    ("[model]\nkind = \"theta_logistic\"\ntheta = -1.0\n", "theta"),
    ("[sim]\ndt = 0.0\n", "[sim]"),
    ("[sim]\nx0 = -1.0\n", "x0"),
    ("[sweep]\neps = [0.1, -0.2]\n", "sweep.eps"),
    ("[scale]\nx_star = 0.6\nbeta = 0.5\n", "x_star"),
    ("[model\n", "syntax"),
])
def test_parse_errors_name_the_key(text, needle):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert needle in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.toml")


def test_config_hash_ignores_threads_and_output():
    cfg = parse_config(GOOD)
    assert cfg.config_hash() == cfg.with_overrides(threads=4, output_dir="elsewhere").config_hash()
    assert cfg.config_hash() != cfg.with_overrides(seed=8).config_hash()
    assert len(cfg.config_hash()) == 16


def test_csv_roundtrip_and_determinism(tmp_path):
    rows = [(0, 0.1, True), (1, 1 / 3, False)]
    a = write_csv(tmp_path / "a.csv", ["i", "x", "flag"], rows, config_hash="abc", seed=1, meta={"k": "v"})
    b = write_csv(tmp_path / "b.csv", ["i", "x", "flag"], rows, config_hash="abc", seed=1, meta={"k": "v"})
    assert a.read_bytes() == b.read_bytes()
    meta, cols, data = read_csv(a)
    assert meta["config_hash"] == "abc" and meta["seed"] == "1" and meta["k"] == "v"
    assert meta["tool"].startswith("qsdlab")
    assert cols == ["i", "x", "flag"]
    assert float(data[1][1]) == 1 / 3 and data[0][2] == "1"


def test_text_header(tmp_path):
    p = write_text(tmp_path / "r.txt", "body\n", config_hash="h", seed=2)
    lines = p.read_text().splitlines()
    assert lines[:3] == [lines[0], "# config_hash=h", "# seed=2"] and lines[-1] == "body"
