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

"""Command-line interface: `amvuq {synth,map,laplace,sample,evaluate,pipeline}`."""

import argparse
import dataclasses
import logging
import os
import sys
import time
from collections.abc import Sequence
from typing import Optional

import jax

from ._bench import BenchmarkConfig, generate_synthetic
from ._chain import (
    ChainConfig,
    run_chains,
    SAMPLER_KINDS,
    SampleSummary,
    tune_step_size,
)
from ._evaluate import criteria_suite
from ._grid import ObservationSet
from ._io import (
    load_dataset,
    read_config,
    read_error_map,
    read_state,
    save_dataset,
    write_epe_csv,
    write_error_map,
    write_state,
    write_summary,
)
from ._laplace import assemble_hessian, laplace_error_map
from ._map import estimate_map, OptimConfig
from ._solution import RESULTS


logger = logging.getLogger(__name__)

_CLI_SAMPLERS = tuple(kind for kind in SAMPLER_KINDS if kind != "precond_rw")


def _configure_runtime(verbose: bool) -> None:
    threads = os.environ.get("AMV_THREADS")
    if threads:
        os.environ["XLA_FLAGS"] = (
            os.environ.get("XLA_FLAGS", "")
            + " --xla_cpu_multi_thread_eigen=false"
            + f" intra_op_parallelism_threads={int(threads)}"
        ).strip()
    jax.config.update("jax_enable_x64", True)
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )


class _Stage:
    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        logger.info("%s: started", self.name)
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc_info):
        if exc_info[0] is None:
            elapsed = time.perf_counter() - self.start
            logger.info("%s: done in %.2fs", self.name, elapsed)


def _with_overrides(config: BenchmarkConfig, **overrides) -> BenchmarkConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return dataclasses.replace(config, **overrides)


def _run_map(
    y: ObservationSet, config: BenchmarkConfig, max_steps: Optional[int] = None
):
    if max_steps is None:
        max_steps = config.map_max_steps
    with _Stage("map"):
        theta_hat, diagnostics = estimate_map(
            y, config.params, OptimConfig(max_steps=max_steps)
        )
        logger.info(
            "map: %d steps, energy %.6g, gradient norm %.3g",
            int(diagnostics.num_steps),
            float(diagnostics.energy.total),
            float(diagnostics.grad_norm),
        )
        if diagnostics.result != RESULTS.successful:
            logger.warning(
                "map: not converged, later stages use the last iterate. %s",
                RESULTS[diagnostics.result],
            )
    return theta_hat


def _run_laplace(theta_hat, y, config, band_radius, radius):
    with _Stage("laplace"):
        hessian = assemble_hessian(theta_hat, y, config.params, band_radius)
        displacement = laplace_error_map(hessian, "displacement", radius)
        image = laplace_error_map(hessian, "image", radius, channel=None)
        num_indefinite = int(displacement.indefinite.sum())
        if num_indefinite:
            logger.warning("laplace: %d indefinite pixels", num_indefinite)
    return displacement, image


def _run_sampler(y, config, chain_config, theta_init, num_chains) -> SampleSummary:
    with _Stage(f"sample {chain_config.sampler} at zeta={chain_config.zeta:g}"):
        summary = run_chains(y, config.params, chain_config, theta_init, num_chains)
        logger.info(
            "sample: acceptance %.3f, %d divergences, %d numerical rejections",
            float(summary.acceptance_rate),
            int(summary.num_divergences),
            int(summary.num_numerical_rejections),
        )
    return summary


def _tuned(y, config, chain_config, theta_init) -> ChainConfig:
    with _Stage("tune"):
        step_size = tune_step_size(y, config.params, chain_config, theta_init)
        logger.info("tune: step size %.6g", step_size)
    return chain_config.replace(step_size=step_size)


def _summary_record(chain_config: ChainConfig, summary: SampleSummary, files, report):
    return {
        "config": {
            "sampler": chain_config.sampler,
            "zeta": chain_config.zeta,
            "step_size": chain_config.step_size,
            "num_steps": chain_config.num_steps,
            "num_leapfrog": chain_config.num_leapfrog,
            "hurst_precond": chain_config.hurst_precond,
            "burn_in": chain_config.num_burn_in,
            "thin": chain_config.thin,
            "seed": chain_config.seed,
        },
        "acceptance_rate": summary.acceptance_rate,
        "num_samples": summary.num_samples,
        "num_divergences": summary.num_divergences,
        "num_numerical_rejections": summary.num_numerical_rejections,
        "estimator": summary.estimator,
        "files": files,
        "epe": report.as_dict(),
    }


def _write_sample_outputs(out, name, theta_true, y, chain_config, summary):
    os.makedirs(out, exist_ok=True)
    files = {
        "mean": os.path.join(out, f"{name}_mean.amvf"),
        "displacement_error": os.path.join(out, f"{name}_displacement_error.amvf"),
        "image_error": os.path.join(out, f"{name}_image_error.amvf"),
    }
    write_state(files["mean"], summary.mean)
    write_error_map(files["displacement_error"], summary.displacement_error)
    write_error_map(files["image_error"], summary.image_error)
    report = criteria_suite(
        theta_true, summary.mean, summary.displacement_error, y.mask
    )
    return report, _summary_record(chain_config, summary, files, report)


def cmd_synth(args) -> None:
    config = _with_overrides(read_config(args.config), seed=args.seed)
    with _Stage("synth"):
        theta_true, y = generate_synthetic(config)
        save_dataset(args.out, theta_true, y, config)


def cmd_map(args) -> None:
    _, y, config = load_dataset(args.data)
    theta_hat = _run_map(y, config, args.max_steps)
    write_state(args.out, theta_hat)


def cmd_laplace(args) -> None:
    theta_true, y, config = load_dataset(args.data)
    theta_hat = read_state(args.map)
    band_radius = config.band_radius if args.band_radius is None else args.band_radius
    radius = config.radius if args.radius is None else args.radius
    displacement, image = _run_laplace(theta_hat, y, config, band_radius, radius)
    os.makedirs(args.out, exist_ok=True)
    write_error_map(os.path.join(args.out, "displacement_error.amvf"), displacement)
    write_error_map(os.path.join(args.out, "image_error.amvf"), image)
    report = criteria_suite(theta_true, theta_hat, displacement, y.mask)
    write_epe_csv(os.path.join(args.out, "epe.csv"), [("map_laplace", report)])


def _chain_config(args) -> ChainConfig:
    chain_config = ChainConfig(
        sampler=args.sampler,
        step_size=args.dt,
        num_leapfrog=args.leapfrog,
        num_steps=args.steps,
        zeta=args.zeta,
        hurst_precond=args.hurst_precond,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
    )
    if args.tune:
        chain_config = chain_config.replace(zeta=1.0).at_temperature(args.zeta)
    return chain_config


def cmd_sample(args) -> None:
    theta_true, y, config = load_dataset(args.data)
    theta_init = read_state(args.map)
    chain_config = _chain_config(args)
    if args.tune:
        chain_config = _tuned(y, config, chain_config, theta_init)
    summary = _run_sampler(y, config, chain_config, theta_init, args.chains)
    report, record = _write_sample_outputs(
        args.out, args.sampler, theta_true, y, chain_config, summary
    )
    write_epe_csv(os.path.join(args.out, "epe.csv"), [(args.sampler, report)])
    write_summary(os.path.join(args.out, "summary.json"), record)


def cmd_evaluate(args) -> None:
    theta_true, y, _ = load_dataset(args.data)
    theta_hat = read_state(args.estimate)
    error_map = read_error_map(args.error_map)
    report = criteria_suite(theta_true, theta_hat, error_map, y.mask)
    write_epe_csv(args.out, [(args.label, report)])


def cmd_pipeline(args) -> None:
    config = _with_overrides(
        read_config(args.config),
        seed=args.seed,
        num_steps=args.steps,
        num_leapfrog=args.leapfrog,
    )
    data_dir = os.path.join(args.out, "data")
    with _Stage("synth"):
        theta_true, y = generate_synthetic(config)
        save_dataset(data_dir, theta_true, y, config)
    theta_hat = _run_map(y, config, args.max_steps)
    write_state(os.path.join(args.out, "map.amvf"), theta_hat)
    displacement, image = _run_laplace(
        theta_hat, y, config, config.band_radius, config.radius
    )
    write_error_map(
        os.path.join(args.out, "laplace_displacement_error.amvf"), displacement
    )
    write_error_map(os.path.join(args.out, "laplace_image_error.amvf"), image)
    report = criteria_suite(theta_true, theta_hat, displacement, y.mask)
    rows = [("map_laplace", report)]
    tempered = ChainConfig(
        sampler="hmc",
        step_size=config.step_size,
        num_leapfrog=config.num_leapfrog,
        num_steps=config.num_steps,
        zeta=config.zeta,
        hurst_precond=config.hurst_precond,
        seed=config.seed,
    )
    records = {}
    for name, chain_config in (
        ("hmc_tempered", tempered),
        ("hmc_untempered", tempered.at_temperature(1.0)),
    ):
        if config.tune:
            chain_config = _tuned(y, config, chain_config, theta_hat)
        summary = _run_sampler(y, config, chain_config, theta_hat, 1)
        report, records[name] = _write_sample_outputs(
            args.out, name, theta_true, y, chain_config, summary
        )
        rows.append((name, report))
    write_epe_csv(os.path.join(args.out, "epe.csv"), rows)
    write_summary(
        os.path.join(args.out, "summary.json"),
        {"benchmark": config.to_mapping(), "chains": records},
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amvuq",
        description="Motion vectors with uncertainty from partially observed images.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    commands = parser.add_subparsers(dest="command", required=True)

    synth = commands.add_parser("synth", help="generate a synthetic dataset")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", required=True)
    synth.add_argument("--seed", type=int)
    synth.set_defaults(run=cmd_synth)

    map_ = commands.add_parser("map", help="compute the MAP estimate")
    map_.add_argument("--data", required=True)
    map_.add_argument("--out", required=True)
    map_.add_argument("--max-steps", type=int)
    map_.set_defaults(run=cmd_map)

    laplace = commands.add_parser("laplace", help="Laplace error maps and EPE report")
    laplace.add_argument("--data", required=True)
    laplace.add_argument("--map", required=True)
    laplace.add_argument("--out", required=True)
    laplace.add_argument("--radius", type=int)
    laplace.add_argument("--band-radius", type=int)
    laplace.set_defaults(run=cmd_laplace)

    sample = commands.add_parser("sample", help="run Markov chains")
    sample.add_argument("--data", required=True)
    sample.add_argument("--map", required=True)
    sample.add_argument("--out", required=True)
    sample.add_argument("--sampler", choices=_CLI_SAMPLERS, default="hmc")
    sample.add_argument("--zeta", type=float, default=1.0)
    sample.add_argument(
        "--dt",
        type=float,
        default=1e-2,
        help="step size; with --tune, the untempered starting guess",
    )
    sample.add_argument("--steps", type=int, default=100)
    sample.add_argument("--leapfrog", type=int, default=10)
    sample.add_argument("--hurst-precond", type=float)
    sample.add_argument("--seed", type=int, default=0)
    sample.add_argument("--chains", type=int, default=1)
    sample.add_argument("--burn-in", type=int)
    sample.add_argument("--thin", type=int, default=1)
    sample.add_argument("--tune", action="store_true")
    sample.set_defaults(run=cmd_sample)

    evaluate = commands.add_parser("evaluate", help="EPE report of an estimate")
    evaluate.add_argument("--data", required=True)
    evaluate.add_argument("--estimate", required=True)
    evaluate.add_argument("--error-map", required=True)
    evaluate.add_argument("--out", required=True)
    evaluate.add_argument("--label", default="estimate")
    evaluate.set_defaults(run=cmd_evaluate)

    pipeline = commands.add_parser("pipeline", help="run every stage")
    pipeline.add_argument("--config", required=True)
    pipeline.add_argument("--out", required=True)
    pipeline.add_argument("--seed", type=int)
    pipeline.add_argument("--steps", type=int)
    pipeline.add_argument("--leapfrog", type=int)
    pipeline.add_argument("--max-steps", type=int)
    pipeline.set_defaults(run=cmd_pipeline)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_runtime(args.verbose)
    try:
        args.run(args)
    except (ValueError, OSError, RuntimeError) as e:
        logger.error("%s failed: %s", args.command, e)
        return 1
    return 0
