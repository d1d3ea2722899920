# Copyright 2024 The amvuq Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import csv
import json
import pathlib

import pytest

import amvuq as amv
from amvuq.cli import _chain_config, build_parser, main


BENCHMARK = (
    pathlib.Path(__file__).parents[1] / "benchmarks" / "synthetic_turbulence.cfg"
)


_CONFIG = """\
size=8
mask=blob
coverage=0.8
zeta=1e-4
step_size=1e-4
num_steps=10
num_leapfrog=2
band_radius=1
radius=1
"""


@pytest.fixture
def dataset(tmp_path):
    config = tmp_path / "bench.cfg"
    config.write_text(_CONFIG)
    data = tmp_path / "data"
    assert main(["synth", "--config", str(config), "--out", str(data)]) == 0
    return data


def _read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def test_synth(dataset):
    theta, y, config = amv.load_dataset(dataset)
    assert config.size == 8
    assert theta.values.shape == (3 * 64,)
    assert y.mask.observed.shape == (2, 8, 8)


def test_synth_seed(tmp_path):
    config = tmp_path / "bench.cfg"
    config.write_text(_CONFIG)
    for seed in ("1", "2"):
        argv = ["synth", "--config", str(config), "--out", str(tmp_path / seed)]
        assert main(argv + ["--seed", seed]) == 0
    first, _, config_1 = amv.load_dataset(tmp_path / "1")
    second, _, _ = amv.load_dataset(tmp_path / "2")
    assert config_1.seed == 1
    assert not (first.values == second.values).all()


def test_stages(dataset, tmp_path):
    map_file = tmp_path / "map.amvf"
    argv = ["map", "--data", str(dataset), "--out", str(map_file)]
    assert main(argv + ["--max-steps", "20"]) == 0
    assert amv.read_state(map_file).channels == 1

    laplace = tmp_path / "laplace"
    argv = ["laplace", "--data", str(dataset), "--map", str(map_file)]
    assert main(argv + ["--out", str(laplace)]) == 0
    error_map = amv.read_error_map(laplace / "displacement_error.amvf")
    assert error_map.values.shape == (8, 8)
    rows = _read_csv(laplace / "epe.csv")
    assert [row["method"] for row in rows] == ["map_laplace"]

    samples = tmp_path / "samples"
    argv = ["sample", "--data", str(dataset), "--map", str(map_file)]
    argv += ["--out", str(samples), "--sampler", "mala", "--zeta", "1e-4"]
    argv += ["--dt", "1e-8", "--steps", "10", "--chains", "2"]
    assert main(argv) == 0
    summary = json.loads((samples / "summary.json").read_text())
    assert summary["config"]["sampler"] == "mala"
    assert summary["num_samples"] == 20
    assert summary["estimator"] == "two-pass"
    assert 0 <= summary["acceptance_rate"] <= 1
    report = amv.read_epe_csv(samples / "epe.csv")["mala"]
    assert summary["epe"] == report.as_dict()
    assert amv.read_state(samples / "mala_mean.amvf").channels == 1

    out = tmp_path / "evaluate.csv"
    argv = ["evaluate", "--data", str(dataset), "--estimate", str(map_file)]
    argv += ["--error-map", str(laplace / "displacement_error.amvf")]
    argv += ["--out", str(out), "--label", "map"]
    assert main(argv) == 0
    report = amv.read_epe_csv(out)["map"]
    assert report == amv.read_epe_csv(laplace / "epe.csv")["map_laplace"]


def test_unconverged_map_warns(dataset, tmp_path, caplog):
    map_file = tmp_path / "map.amvf"
    argv = ["map", "--data", str(dataset), "--out", str(map_file)]
    with caplog.at_level("WARNING", logger="amvuq.cli"):
        assert main(argv + ["--max-steps", "1"]) == 0
    warnings = [r.getMessage() for r in caplog.records if r.levelname == "WARNING"]
    assert any("not converged" in message for message in warnings)
    assert any("maximum number of steps" in message for message in warnings)
    assert map_file.exists()


def test_map_steps_from_config():
    config = amv.read_config(BENCHMARK)
    assert config.map_max_steps == 5000
    assert amv.BenchmarkConfig().map_max_steps == 500
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(map_max_steps=0)


def test_failures(tmp_path):
    assert main(["map", "--data", str(tmp_path / "missing"), "--out", "x"]) == 1
    config = tmp_path / "bad.cfg"
    config.write_text("size=12\n")
    assert main(["synth", "--config", str(config), "--out", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        main(["sample", "--data", "d", "--map", "m", "--out", "o", "--sampler", "x"])
    with pytest.raises(SystemExit):
        main([])


def test_tuned_chain_config():
    parser = build_parser()
    argv = ["sample", "--data", "d", "--map", "m", "--out", "o", "--zeta", "0.01"]
    args = parser.parse_args(argv + ["--sampler", "mala", "--dt", "0.5", "--tune"])
    config = _chain_config(args)
    assert config.zeta == 0.01
    assert config.step_size == pytest.approx(0.005)
    args = parser.parse_args(argv + ["--sampler", "hmc", "--dt", "0.5"])
    assert _chain_config(args).step_size == 0.5


@pytest.mark.slow
def test_pipeline(tmp_path):
    config = tmp_path / "bench.cfg"
    config.write_text(_CONFIG.replace("size=8", "size=16"))
    out = tmp_path / "run"
    argv = ["pipeline", "--config", str(config), "--out", str(out)]
    assert main(argv + ["--steps", "50", "--max-steps", "200"]) == 0
    methods = [row["method"] for row in _read_csv(out / "epe.csv")]
    assert methods == ["map_laplace", "hmc_tempered", "hmc_untempered"]
    summary = json.loads((out / "summary.json").read_text())
    assert summary["benchmark"]["size"] == "16"
    assert summary["chains"]["hmc_tempered"]["config"]["zeta"] == 1e-4
    assert summary["chains"]["hmc_untempered"]["config"]["zeta"] == 1.0
    for name in ("hmc_tempered", "hmc_untempered"):
        assert 0 <= summary["chains"][name]["acceptance_rate"] <= 1
        assert (out / f"{name}_displacement_error.amvf").exists()
    assert (out / "laplace_image_error.amvf").exists()
    assert amv.load_dataset(out / "data")[2].num_steps == 50
