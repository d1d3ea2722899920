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

import jax
import jax.numpy as jnp
import jax.random as jr
import pytest

import amvuq as amv
from amvuq.internal import fractional_apply

from .helpers import dense_matrix, tree_allclose


def _zero_mean(x):
    return x - jnp.mean(x, axis=(-2, -1), keepdims=True)


def _dense(fn, n=8):
    return dense_matrix(lambda v: fn(v.reshape(n, n)).reshape(-1), n * n)


def test_frequency_grid():
    norm = amv.frequency_grid(8, 8)
    assert norm[0, 0] == 0
    assert tree_allclose(norm[0, 4], jnp.pi)
    assert tree_allclose(norm[1, 0], norm[-1, 0])
    assert tree_allclose(norm[2, 3], norm[3, 2])


def test_apply_zero_exponent(getkey):
    x = jr.normal(getkey(), (8, 8))
    assert tree_allclose(fractional_apply(x, 0.0), _zero_mean(x), atol=1e-12)


@pytest.mark.parametrize("s", [0.5, 1.3, 2.0])
def test_apply_inverse(getkey, s):
    x = _zero_mean(jr.normal(getkey(), (2, 8, 16)))
    out = fractional_apply(fractional_apply(x, s), -s)
    assert tree_allclose(out, x, rtol=1e-10, atol=1e-10)
    assert tree_allclose(jnp.mean(fractional_apply(x, s)), jnp.array(0.0), atol=1e-12)


def test_apply_dense_symmetric(getkey):
    matrix = _dense(lambda v: fractional_apply(v, 1.5))
    x = jr.normal(getkey(), (8, 8))
    assert tree_allclose(matrix, matrix.T, atol=1e-12)
    assert tree_allclose(
        (matrix @ x.reshape(-1)).reshape(8, 8), fractional_apply(x, 1.5), atol=1e-12
    )


@pytest.mark.parametrize("hurst", [0.5, 1.0])
def test_precision_covariance(getkey, hurst):
    zero = amv.DisplacementField(jnp.zeros((2, 8, 8)))
    assert jnp.all(amv.fbm_prec_apply(zero, hurst).values == 0)
    assert jnp.all(amv.fbm_cov_apply(zero, hurst).values == 0)

    keys = jr.split(getkey(), 100)

    def quadratic_forms(key):
        d = amv.DisplacementField(jr.normal(key, (2, 8, 8)))
        return (
            jnp.vdot(d.values, amv.fbm_prec_apply(d, hurst).values),
            jnp.vdot(d.values, amv.fbm_cov_apply(d, hurst).values),
        )

    prec_forms, cov_forms = jax.vmap(quadratic_forms)(keys)
    assert jnp.all(prec_forms >= 0)
    assert jnp.all(cov_forms >= 0)

    d = amv.DisplacementField(_zero_mean(jr.normal(getkey(), (2, 8, 8))))
    out = amv.fbm_cov_apply(amv.fbm_prec_apply(d, hurst), hurst)
    assert tree_allclose(out, d, rtol=1e-10, atol=1e-10)
    out = amv.fbm_prec_apply(amv.fbm_cov_apply(d, hurst), hurst)
    assert tree_allclose(out, d, rtol=1e-10, atol=1e-10)


def test_inverse_gram():
    hurst = 0.8
    prec = _dense(lambda v: amv.FbmOperator(hurst, 8, 8).prec(v))
    cov = _dense(lambda v: amv.FbmOperator(hurst, 8, 8).cov(v))
    projection = jnp.eye(64) - jnp.full((64, 64), 1 / 64)
    assert tree_allclose(prec @ cov, projection, atol=1e-8)


def test_sqrt(getkey):
    hurst = 1.2
    x = _zero_mean(jr.normal(getkey(), (8, 8)))
    up = amv.fbm_sqrt_apply(amv.fbm_sqrt_apply(x, hurst, 1), hurst, 1)
    assert tree_allclose(up, amv.FbmOperator(hurst, 8, 8).cov(x), atol=1e-10)
    both = amv.fbm_sqrt_apply(amv.fbm_sqrt_apply(x, hurst, 1), hurst, -1)
    assert tree_allclose(both, x, atol=1e-10)
    down = _dense(lambda v: amv.fbm_sqrt_apply(v, hurst, -1))
    prec = _dense(lambda v: amv.FbmOperator(hurst, 8, 8).prec(v))
    assert tree_allclose(down @ down, prec, rtol=1e-8, atol=1e-8)
    with pytest.raises(ValueError):
        amv.fbm_sqrt_apply(x, hurst, 0)


def test_operator_checks():
    with pytest.raises(ValueError):
        amv.FbmOperator(0.0, 8, 8)
    with pytest.raises(ValueError):
        amv.FbmOperator(1.0, 8, 6)
    operator = amv.FbmOperator(1.0, 8, 8)
    assert operator.multiplier[0, 0] == 0
    assert jnp.all(operator.multiplier >= 0)


def test_sample_deterministic():
    grid = amv.PixelGrid(8, 8)
    key = jr.PRNGKey(3)
    first = amv.fbm_sample(key, 1.0, grid)
    second = amv.fbm_sample(key, 1.0, grid)
    assert jnp.array_equal(first, second)
    assert tree_allclose(jnp.mean(first), jnp.array(0.0), atol=1e-12)


def test_sample_statistics(getkey):
    grid = amv.PixelGrid(8, 8)
    hurst = 0.7
    num_draws = 20_000
    keys = jr.split(getkey(), num_draws)
    samples = jax.vmap(lambda k: amv.fbm_sample(k, hurst, grid))(keys)
    samples = samples.reshape(num_draws, -1)
    cov = _dense(lambda v: amv.FbmOperator(hurst, 8, 8).cov(v))

    std = jnp.sqrt(jnp.diag(cov))
    mean = jnp.mean(samples, axis=0)
    assert jnp.all(jnp.abs(mean) <= 4 * std / jnp.sqrt(num_draws))

    empirical = samples.T @ samples / num_draws
    mc_error = jnp.sqrt((jnp.outer(jnp.diag(cov), jnp.diag(cov)) + cov**2) / num_draws)
    assert jnp.all(jnp.abs(empirical - cov) < 5 * mc_error)


def test_sample_uses_wavelet(getkey):
    grid = amv.PixelGrid(16, 16)
    key = getkey()
    haar = amv.fbm_sample(key, 1.0, grid, amv.WaveletBasis("haar"))
    coif = amv.fbm_sample(key, 1.0, grid, amv.WaveletBasis("coif5"))
    assert not jnp.allclose(haar, coif)
