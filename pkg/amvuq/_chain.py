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

"""Running Markov chains on the tempered posterior and summarising their samples.

Chains target `exp(-U / zeta)`. Their samples are mapped back to the untempered
scale around the sample mean `theta_hat`, so the expected error of an observable is

    E(psi) = (1 / (N sqrt(zeta))) sum_i ||psi(theta_i) - psi(theta_hat)||

over the `N` samples kept after burn-in and thinning.
"""

import math
import warnings
from collections.abc import Callable, Sequence
from typing import Optional

import equinox as eqx
import jax.lax as lax
import jax.numpy as jnp
import jax.random as jr
from jaxtyping import Array, Float, Int, PRNGKeyArray, Scalar, ScalarLike

from ._evaluate import criteria_suite, EpeReport, ExpectedErrorMap
from ._grid import ObservationMask, ObservationSet, StateVector
from ._mcmc import AbstractSampler, ChainState
from ._posterior import default_init, GibbsPosterior, ModelParams
from ._potential import AbstractPotential, check_temperature
from ._preconditioner import (
    AbstractPreconditioner,
    FbmPreconditioner,
    IdentityPreconditioner,
)
from ._sampler import HMC, MALA, RandomWalk
from ._solution import RESULTS


SAMPLER_KINDS = ("rw", "prw", "precond_rw", "mala", "hmc")


class ChainConfig(eqx.Module):
    """Settings of a Markov chain.

    **Attributes:**

    - `sampler`: `"rw"` (random walk), `"prw"` or `"precond_rw"` (fBm-preconditioned
        random walk), `"mala"` or `"hmc"`.
    - `step_size`: The proposal variance `dt` for the random walks and MALA; the
        leapfrog step for HMC.
    - `num_leapfrog`: Leapfrog steps per HMC proposal.
    - `num_steps`: Steps after burn-in.
    - `zeta`: Temperature in `(0, 1]`.
    - `hurst_precond`: Hurst exponent of the preconditioner. Defaults to half the
        Hurst exponent of the prior.
    - `burn_in`: Discarded initial steps. Defaults to `num_steps // 10`.
    - `thin`: Keep one sample every `thin` steps.
    - `seed`: Seed of the chain's random stream.
    - `store_samples`: Whether to keep the samples. Without them the expected error
        is replaced by its Jensen upper bound.
    """

    sampler: str = eqx.field(static=True, default="hmc")
    step_size: float = 1e-2
    num_leapfrog: int = eqx.field(static=True, default=10)
    num_steps: int = eqx.field(static=True, default=100)
    zeta: float = 1.0
    hurst_precond: Optional[float] = None
    burn_in: Optional[int] = eqx.field(static=True, default=None)
    thin: int = eqx.field(static=True, default=1)
    seed: int = eqx.field(static=True, default=0)
    store_samples: bool = eqx.field(static=True, default=True)

    def __check_init__(self):
        if self.sampler not in SAMPLER_KINDS:
            raise ValueError(
                f"Unknown sampler {self.sampler!r}; expected one of {SAMPLER_KINDS}."
            )
        if not self.step_size > 0:
            raise ValueError(f"`step_size` must be positive, got {self.step_size}.")
        if self.num_leapfrog < 1:
            raise ValueError("`num_leapfrog` must be at least 1.")
        if self.num_steps < 1:
            raise ValueError("`num_steps` must be at least 1.")
        check_temperature(self.zeta)
        if self.hurst_precond is not None and not self.hurst_precond > 0:
            raise ValueError("`hurst_precond` must be positive.")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("`burn_in` must be nonnegative.")
        if not 1 <= self.thin <= self.num_steps:
            raise ValueError("`thin` must lie in [1, num_steps].")

    @property
    def num_burn_in(self) -> int:
        return self.num_steps // 10 if self.burn_in is None else self.burn_in

    @property
    def num_samples(self) -> int:
        return self.num_steps // self.thin

    def replace(self, **changes) -> "ChainConfig":
        fields = {
            name: getattr(self, name)
            for name in (
                "sampler",
                "step_size",
                "num_leapfrog",
                "num_steps",
                "zeta",
                "hurst_precond",
                "burn_in",
                "thin",
                "seed",
                "store_samples",
            )
        }
        fields.update(changes)
        return ChainConfig(**fields)

    def at_temperature(self, zeta: float) -> "ChainConfig":
        """The same chain at temperature `zeta`, with the step size rescaled so that
        acceptance is unchanged on Gaussian targets: `dt` scales like `zeta` and the
        HMC leapfrog step like `sqrt(zeta)`.
        """
        check_temperature(zeta)
        ratio = zeta / self.zeta
        if self.sampler == "hmc":
            ratio = math.sqrt(ratio)
        return self.replace(zeta=zeta, step_size=self.step_size * ratio)


def make_sampler(config: ChainConfig) -> AbstractSampler:
    if config.sampler == "mala":
        return MALA(config.step_size)
    if config.sampler == "hmc":
        return HMC(config.step_size, config.num_leapfrog)
    return RandomWalk(config.step_size)


def make_preconditioner(
    config: ChainConfig, params: ModelParams, rows: int, cols: int, channels: int
) -> AbstractPreconditioner:
    if config.sampler == "rw":
        return IdentityPreconditioner()
    if config.hurst_precond is None:
        hurst = params.hurst / 2
    else:
        hurst = config.hurst_precond
    return FbmPreconditioner(hurst, rows, cols, channels)


class ChainRun(eqx.Module):
    """The raw output of [`amvuq.sample_chain`][].

    **Attributes:**

    - `samples`: The kept states, or `None` if they were not stored.
    - `energies`: The potential at every kept state.
    - `shift`: The initial state. The streaming sums are taken about it.
    - `total`, `total_squares`: Sums of `y - shift` and `(y - shift)^2` over the kept
        states.
    - `state`: The final chain state, including the acceptance counters.
    - `result`: `RESULTS.nonfinite_energy` if the chain started at a state of
        non-finite energy.
    - `num_samples`: Number of kept states.
    - `num_steps`: Number of proposals, burn-in included.
    """

    samples: Optional[Float[Array, "samples n"]]
    energies: Float[Array, " samples"]
    shift: Float[Array, " n"]
    total: Float[Array, " n"]
    total_squares: Float[Array, " n"]
    state: ChainState
    result: RESULTS
    num_samples: int = eqx.field(static=True)
    num_steps: int = eqx.field(static=True)

    @property
    def mean(self) -> Float[Array, " n"]:
        return self.shift + self.total / self.num_samples

    @property
    def variance(self) -> Float[Array, " n"]:
        mean_shifted = self.total / self.num_samples
        return jnp.maximum(self.total_squares / self.num_samples - mean_shifted**2, 0)

    @property
    def acceptance_rate(self) -> Scalar:
        return self.state.num_accepted / self.num_steps


def _advance(sampler, potential, preconditioner, key, state, start, num_steps):
    def body(i, state):
        step_key = jr.fold_in(key, start + i)
        return sampler.step(potential, preconditioner, state, step_key)

    return lax.fori_loop(0, num_steps, body, state)


@eqx.filter_jit
def sample_chain(
    potential: AbstractPotential,
    sampler: AbstractSampler,
    preconditioner: AbstractPreconditioner,
    y0: Float[Array, " n"],
    key: PRNGKeyArray,
    *,
    num_samples: int,
    burn_in: int = 0,
    thin: int = 1,
    store_samples: bool = True,
    throw: bool = True,
) -> ChainRun:
    """Run one Markov chain on `potential`.

    The `i`-th proposal uses the key `jax.random.fold_in(key, i)`, so a chain is
    reproducible given its key whatever the thinning.

    **Arguments:**

    - `potential`: The target energy.
    - `sampler`: The Metropolis-Hastings kernel.
    - `preconditioner`: The proposal covariance.
    - `y0`: The initial state.
    - `key`: The chain's random key.
    - `num_samples`: Number of states kept after burn-in.
    - `burn_in`: Number of initial steps discarded.
    - `thin`: Steps between kept states.
    - `store_samples`: Whether to return the kept states.
    - `throw`: Whether to raise if the energy at `y0` is not finite.

    **Returns:**

    An [`amvuq.ChainRun`][].
    """
    if num_samples < 1:
        raise ValueError("`num_samples` must be at least 1.")
    if burn_in < 0 or thin < 1:
        raise ValueError("`burn_in` must be nonnegative and `thin` positive.")
    state = sampler.init(potential, y0)
    result = RESULTS.where(
        jnp.isfinite(state.energy), RESULTS.successful, RESULTS.nonfinite_energy
    )
    if throw:
        state = result.error_if(state, result != RESULTS.successful)
    state = _advance(sampler, potential, preconditioner, key, state, 0, burn_in)

    def collect(carry, index):
        state, total, total_squares = carry
        start = burn_in + index * thin
        state = _advance(sampler, potential, preconditioner, key, state, start, thin)
        delta = state.y - y0
        sample = state.y if store_samples else None
        return (state, total + delta, total_squares + delta**2), (sample, state.energy)

    zeros = jnp.zeros_like(y0)
    (state, total, total_squares), (samples, energies) = lax.scan(
        collect, (state, zeros, zeros), jnp.arange(num_samples)
    )
    return ChainRun(
        samples=samples,
        energies=energies,
        shift=y0,
        total=total,
        total_squares=total_squares,
        state=state,
        result=result,
        num_samples=num_samples,
        num_steps=burn_in + num_samples * thin,
    )


class SampleSummary(eqx.Module):
    """Posterior summaries from the samples of one or more chains.

    **Attributes:**

    - `mean`: The posterior-mean estimate `theta_hat`.
    - `displacement_error`: Expected error of the displacement at every pixel.
    - `image_error`: Expected error of every image channel at every pixel.
    - `acceptance_rate`: Fraction of accepted proposals, burn-in included.
    - `num_samples`: Number of samples summarised.
    - `num_divergences`, `num_numerical_rejections`: Rejection counters.
    - `zeta`: The temperature the samples were drawn at.
    - `samples`: The tempered samples, or `None`.
    """

    mean: StateVector
    displacement_error: ExpectedErrorMap
    image_error: ExpectedErrorMap
    acceptance_rate: Scalar
    num_samples: int = eqx.field(static=True)
    num_divergences: Int[Array, ""]
    num_numerical_rejections: Int[Array, ""]
    zeta: ScalarLike
    samples: Optional[Float[Array, "samples n"]] = None

    @property
    def estimator(self) -> str:
        return self.displacement_error.estimator


def _jensen_maps(variance, zeta, shape):
    blocks = variance.reshape(shape)
    scale = jnp.sqrt(zeta)
    displacement = jnp.sqrt(blocks[0] + blocks[1]) / scale
    image = jnp.sqrt(blocks[2:]) / scale
    return displacement, image


def _two_pass_maps(samples, mean, zeta, shape):
    diffs = (samples - mean).reshape((samples.shape[0],) + shape)
    scale = jnp.sqrt(zeta)
    displacement = jnp.mean(jnp.hypot(diffs[:, 0], diffs[:, 1]), axis=0) / scale
    image = jnp.mean(jnp.abs(diffs[:, 2:]), axis=0) / scale
    return displacement, image


def _summary(
    mean,
    variance,
    samples,
    zeta,
    rows,
    cols,
    channels,
    *,
    acceptance_rate,
    num_samples,
    num_divergences,
    num_numerical_rejections,
) -> SampleSummary:
    shape = (2 + channels, rows, cols)
    jensen_d, jensen_x = _jensen_maps(variance, zeta, shape)
    if samples is None:
        values_d, values_x, estimator = jensen_d, jensen_x, "jensen"
    else:
        values_d, values_x = _two_pass_maps(samples, mean, zeta, shape)
        estimator = "two-pass"
    return SampleSummary(
        mean=StateVector(mean, rows, cols, channels),
        displacement_error=ExpectedErrorMap(
            values=values_d, upper=jensen_d, kind="displacement", estimator=estimator
        ),
        image_error=ExpectedErrorMap(
            values=values_x, upper=jensen_x, kind="image", estimator=estimator
        ),
        acceptance_rate=acceptance_rate,
        num_samples=num_samples,
        num_divergences=num_divergences,
        num_numerical_rejections=num_numerical_rejections,
        zeta=zeta,
        samples=samples,
    )


def summarise_samples(
    samples: Float[Array, "samples n"],
    zeta: ScalarLike,
    rows: int,
    cols: int,
    channels: int,
) -> SampleSummary:
    """Summarise stored tempered samples: their mean, and the two-pass expected-error
    maps about it together with the Jensen bound. Acceptance diagnostics are unknown
    and reported as `nan` and zero.
    """
    check_temperature(zeta)
    num_samples = samples.shape[0]
    if num_samples < 1:
        raise ValueError("No samples to summarise.")
    mean = jnp.mean(samples, axis=0)
    variance = jnp.mean((samples - mean) ** 2, axis=0)
    zero = jnp.array(0, dtype=jnp.int32)
    return _summary(
        mean,
        variance,
        samples,
        zeta,
        rows,
        cols,
        channels,
        acceptance_rate=jnp.array(jnp.nan),
        num_samples=num_samples,
        num_divergences=zero,
        num_numerical_rejections=zero,
    )


def _chain_setup(y, params, config, theta_init):
    if theta_init is None:
        theta_init = default_init(y)
    posterior = GibbsPosterior(y, params.at_temperature(config.zeta))
    grid = y.grid
    sampler = make_sampler(config)
    preconditioner = make_preconditioner(
        config, params, grid.rows, grid.cols, y.channels
    )
    return theta_init, posterior, sampler, preconditioner


def run_chain(
    y: ObservationSet,
    params: ModelParams,
    config: ChainConfig,
    theta_init: Optional[StateVector] = None,
) -> SampleSummary:
    """Sample the tempered posterior of `(d, x_t1)` with one chain and summarise it.

    **Arguments:**

    - `y`: The observations.
    - `params`: Posterior hyper-parameters. The temperature is taken from `config`.
    - `config`: A [`amvuq.ChainConfig`][].
    - `theta_init`: The initial state, typically the MAP estimate. Defaults to
        [`amvuq.default_init`][].

    **Returns:**

    A [`amvuq.SampleSummary`][] on the untempered scale.
    """
    theta_init, posterior, sampler, preconditioner = _chain_setup(
        y, params, config, theta_init
    )
    run = sample_chain(
        posterior,
        sampler,
        preconditioner,
        theta_init.values,
        jr.PRNGKey(config.seed),
        num_samples=config.num_samples,
        burn_in=config.num_burn_in,
        thin=config.thin,
        store_samples=config.store_samples,
    )
    return _summary(
        run.mean,
        run.variance,
        run.samples,
        config.zeta,
        theta_init.rows,
        theta_init.cols,
        theta_init.channels,
        acceptance_rate=run.acceptance_rate,
        num_samples=run.num_samples,
        num_divergences=run.state.num_divergences,
        num_numerical_rejections=run.state.num_numerical_rejections,
    )


def run_chains(
    y: ObservationSet,
    params: ModelParams,
    config: ChainConfig,
    theta_init: Optional[StateVector] = None,
    num_chains: int = 1,
) -> SampleSummary:
    """As [`amvuq.run_chain`][], with `num_chains` independent chains run in
    parallel from the same initial state. Their samples are pooled.
    """
    if num_chains < 1:
        raise ValueError("`num_chains` must be at least 1.")
    theta_init, posterior, sampler, preconditioner = _chain_setup(
        y, params, config, theta_init
    )
    keys = jr.split(jr.PRNGKey(config.seed), num_chains)

    @eqx.filter_vmap
    def run_one(key):
        return sample_chain(
            posterior,
            sampler,
            preconditioner,
            theta_init.values,
            key,
            num_samples=config.num_samples,
            burn_in=config.num_burn_in,
            thin=config.thin,
            store_samples=config.store_samples,
        )

    runs = run_one(keys)
    num_samples = num_chains * config.num_samples
    shift = theta_init.values
    mean_shifted = jnp.sum(runs.total, axis=0) / num_samples
    variance = jnp.maximum(
        jnp.sum(runs.total_squares, axis=0) / num_samples - mean_shifted**2, 0
    )
    samples = None if runs.samples is None else runs.samples.reshape(num_samples, -1)
    num_steps = num_chains * runs.num_steps
    return _summary(
        shift + mean_shifted,
        variance,
        samples,
        config.zeta,
        theta_init.rows,
        theta_init.cols,
        theta_init.channels,
        acceptance_rate=jnp.sum(runs.state.num_accepted) / num_steps,
        num_samples=num_samples,
        num_divergences=jnp.sum(runs.state.num_divergences),
        num_numerical_rejections=jnp.sum(runs.state.num_numerical_rejections),
    )


def bracket_step_size(
    acceptance: Callable[[float], float],
    initial: float,
    band: tuple[float, float] = (0.85, 0.95),
    max_pilots: int = 20,
) -> float:
    """Search for a step size whose acceptance rate lies in `band`, expanding by
    factors of 4 until the band is bracketed and then bisecting geometrically.

    If no pilot lands in the band, the step size whose acceptance was closest to it
    is returned with a warning.
    """
    low, high = band
    if not 0 < low < high < 1:
        raise ValueError(f"Invalid acceptance band {band}.")
    too_small = too_large = None
    best_step, best_distance = initial, math.inf
    step_size = initial
    for _ in range(max_pilots):
        rate = acceptance(step_size)
        distance = max(low - rate, rate - high, 0.0)
        if distance < best_distance:
            best_step, best_distance = step_size, distance
        if distance == 0.0:
            return step_size
        if rate > high:
            too_small = step_size
        else:
            too_large = step_size
        if too_large is None:
            step_size = 4 * step_size
        elif too_small is None:
            step_size = step_size / 4
        else:
            step_size = math.sqrt(too_small * too_large)
    warnings.warn(
        f"No step size with acceptance in {band} after {max_pilots} pilot runs; "
        f"using {best_step:.6g}.",
        stacklevel=2,
    )
    return best_step


def tune_step_size(
    y: ObservationSet,
    params: ModelParams,
    config: ChainConfig,
    theta_init: Optional[StateVector] = None,
    *,
    pilot_steps: int = 200,
    band: tuple[float, float] = (0.85, 0.95),
    max_pilots: int = 20,
) -> float:
    """Tune the step size of `config` so that pilot chains of `pilot_steps` steps from
    `theta_init` accept a fraction of proposals in `band`. Every pilot uses the seed
    of `config`, so the result is deterministic. The search starts at
    `config.step_size`.
    """
    theta_init, posterior, _, preconditioner = _chain_setup(
        y, params, config, theta_init
    )
    key = jr.PRNGKey(config.seed)

    def acceptance(step_size):
        sampler = make_sampler(config.replace(step_size=step_size))
        run = sample_chain(
            posterior,
            sampler,
            preconditioner,
            theta_init.values,
            key,
            num_samples=pilot_steps,
            store_samples=False,
        )
        return float(run.acceptance_rate)

    return bracket_step_size(acceptance, config.step_size, band, max_pilots)


def epe_trace(
    samples: Float[Array, "samples n"],
    zeta: ScalarLike,
    theta_true: StateVector,
    mask: ObservationMask,
    checkpoints: Optional[Sequence[int]] = None,
) -> list[tuple[int, EpeReport]]:
    """The endpoint-error criteria of the posterior-mean estimate built from the first
    `n` samples, for every `n` in `checkpoints` (default: powers of two from 2, and
    the total). A single sample has a zero expected-error map, which the weighted
    criteria reject.
    """
    num_samples = samples.shape[0]
    if checkpoints is None:
        checkpoints = [2**i for i in range(1, num_samples.bit_length())]
        checkpoints = [n for n in checkpoints if n < num_samples] + [num_samples]
    trace = []
    for n in checkpoints:
        if not 1 <= n <= num_samples:
            raise ValueError(f"Checkpoint {n} out of range for {num_samples} samples.")
        summary = summarise_samples(
            samples[:n], zeta, theta_true.rows, theta_true.cols, theta_true.channels
        )
        report = criteria_suite(
            theta_true, summary.mean, summary.displacement_error, mask
        )
        trace.append((n, report))
    return trace
