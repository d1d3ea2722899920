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

import math

import equinox as eqx
import jax
import jax.flatten_util as jfu
import jax.numpy as jnp
import jax.random as jr
import jax.tree_util as jtu
from jaxtyping import Array

import amvuq as amv


def tree_allclose(x, y, *, rtol=1e-5, atol=1e-8):
    return eqx.tree_equal(x, y, typematch=True, rtol=rtol, atol=atol)


def dense_matrix(fn, n: int) -> Array:
    """The matrix of a linear map on vectors of length `n`, one column per basis
    vector.
    """
    return jax.vmap(fn, out_axes=1)(jnp.eye(n))


#
# MINIMISATION PROBLEMS
#
def bowl(tree, matrix):
    flat, _ = jfu.ravel_pytree(tree)
    return flat @ matrix @ flat


def rosenbrock(y, scale):
    return jnp.sum(scale * (y[1:] - y[:-1] ** 2) ** 2 + (1 - y[:-1]) ** 2)


def log_cosh(tree, centres):
    # Linear growth far from the minimum.
    total = 0.0
    for leaf, centre in zip(jtu.tree_leaves(tree), jtu.tree_leaves(centres)):
        r = leaf - centre
        total += jnp.sum(jnp.logaddexp(r, -r) - math.log(2))
    return total


minimisers = (
    amv.LBFGS(1e-8),
    amv.LBFGS(1e-8, history_length=3),
    amv.LBFGS(1e-8, search=amv.StrongWolfe(c1=1e-3, c2=0.5)),
)

_bowl_init = ({"a": 0.05 * jnp.ones((2, 3, 3))}, 0.05 * jnp.ones(2))
_bowl_factor = jr.normal(jr.PRNGKey(17), (20, 20))

minimisation_fn_minima_init_args = (
    (bowl, jnp.array(0.0), _bowl_init, _bowl_factor.T @ _bowl_factor),
    (rosenbrock, jnp.array(0.0), jnp.array([-1.2, 1.0, 1.0]), 100.0),
    (
        log_cosh,
        jnp.array(0.0),
        (jnp.zeros(3), {"b": jnp.array(4.0)}),
        (jnp.array([1.0, -2.0, 0.5]), {"b": jnp.array(-1.0)}),
    ),
)


# MOTION INSTANCES
#
def synthetic_instance(
    size: int = 8,
    channels: int = 1,
    mask: str = "full",
    coverage: float = 0.7,
    seed: int = 0,
    alpha: float = 2.0,
    gamma: float = 0.1,
    hurst: float = 1.0,
    noise_std: float = 0.0,
) -> tuple[amv.StateVector, amv.ObservationSet, amv.ModelParams]:
    config = amv.BenchmarkConfig(
        size=size,
        channels=channels,
        mask=mask,
        coverage=coverage,
        seed=seed,
        alpha=alpha,
        gamma=gamma,
        hurst_prior=hurst,
        noise_std=noise_std,
    )
    theta, y = amv.generate_synthetic(config)
    return theta, y, config.params


def random_mask(key, size: int, fraction: float = 0.7) -> amv.ObservationMask:
    return amv.ObservationMask(jr.uniform(key, (2, size, size)) < fraction)


def random_state(key, size: int = 8, channels: int = 1, scale: float = 0.3):
    d_key, x_key = jr.split(key)
    d = scale * jr.normal(d_key, (2, size, size))
    x = jr.normal(x_key, (channels, size, size))
    return amv.StateVector.from_blocks(jnp.concatenate([d, x]))


def gaussian_target(key, n: int, *, condition: float = 10.0):
    """A correlated Gaussian potential with eigenvalues of its covariance spread over
    `[1 / condition, 1]`.
    """
    q_key, m_key = jr.split(key)
    q, _ = jnp.linalg.qr(jr.normal(q_key, (n, n)))
    variances = jnp.geomspace(1 / condition, 1.0, n)
    cov = (q * variances) @ q.T
    mean = jr.normal(m_key, (n,))
    precision = jnp.linalg.inv(cov)
    precision = 0.5 * (precision + precision.T)
    return amv.GaussianPotential(mean, precision), mean, cov
