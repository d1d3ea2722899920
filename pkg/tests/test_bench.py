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

import jax.numpy as jnp
import jax.random as jr
import pytest

import amvuq as amv

from .helpers import tree_allclose


def test_config_checks():
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(size=24)
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(channels=0)
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(mask="stripes")
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(coverage=0.0)
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(noise_std=-1.0)
    with pytest.raises(ValueError):
        amv.BenchmarkConfig(alpha=0.0)


def test_config_mapping():
    config = amv.BenchmarkConfig(size=16, hurst_precond=0.5, tune=True)
    mapping = config.to_mapping()
    assert mapping["size"] == "16"
    assert mapping["hurst_precond"] == "0.5"
    assert mapping["tune"] == "true"
    assert amv.BenchmarkConfig().to_mapping()["hurst_precond"] == "none"
    assert amv.BenchmarkConfig.from_mapping(mapping) == config
    with pytest.raises(ValueError):
        amv.BenchmarkConfig.from_mapping({"tune": "maybe"})
    with pytest.raises(ValueError):
        amv.BenchmarkConfig.from_mapping({"size": "large"})


def test_params():
    params = amv.BenchmarkConfig(alpha=3.0, gamma=0.5, hurst_prior=0.7).params
    assert params.alpha == 3.0
    assert params.gamma == 0.5
    assert params.hurst == 0.7


def test_reproducible():
    config = amv.BenchmarkConfig(size=16, mask="blob")
    theta, y = amv.generate_synthetic(config)
    theta_again, y_again = amv.generate_synthetic(config)
    assert jnp.array_equal(theta.values, theta_again.values)
    assert jnp.array_equal(y.mask.observed, y_again.mask.observed)
    other, _ = amv.generate_synthetic(config, jr.PRNGKey(1))
    assert not jnp.array_equal(theta.values, other.values)


def test_noise_free_observations():
    config = amv.BenchmarkConfig(size=16, channels=2, mask="blob")
    theta, y = amv.generate_synthetic(config)
    assert theta.channels == 2
    x_t1 = theta.image
    x_t0 = amv.warp_image(x_t1, theta.displacement)
    mask = y.mask
    assert tree_allclose(
        jnp.where(mask.t0, y.y_t0.values, 0), jnp.where(mask.t0, x_t0.values, 0)
    )
    assert tree_allclose(
        jnp.where(mask.t1, y.y_t1.values, 0), jnp.where(mask.t1, x_t1.values, 0)
    )
    assert jnp.all(jnp.where(mask.t0, 0, y.y_t0.values) == 0)
    assert jnp.all(jnp.where(mask.t1, 0, y.y_t1.values) == 0)
    # Normalised textures.
    assert tree_allclose(jnp.mean(x_t1.values, axis=(1, 2)), jnp.zeros(2), atol=1e-12)
    assert tree_allclose(jnp.std(x_t1.values, axis=(1, 2)), jnp.ones(2))


@pytest.mark.parametrize("coverage", [0.5, 0.7, 0.9])
def test_blob_coverage(coverage):
    config = amv.BenchmarkConfig(size=32, mask="blob", coverage=coverage)
    _, y = amv.generate_synthetic(config)
    observed = jnp.mean(y.mask.observed, axis=(1, 2))
    assert jnp.all(observed <= coverage)
    # A disk removes at most a quarter of the width in radius.
    assert jnp.all(observed > coverage - math.pi / 16)
    assert not jnp.array_equal(y.mask.t0, y.mask.t1)


def test_full_mask_and_noise():
    config = amv.BenchmarkConfig(size=16, mask="full", noise_std=0.1)
    theta, y = amv.generate_synthetic(config)
    assert jnp.all(y.mask.observed)
    noise = y.y_t1.values - theta.image.values
    assert 0.07 < float(jnp.std(noise)) < 0.13


def test_displacement_scale():
    # The prior draw has variance `1 / (2 alpha)` per Fourier mode; a larger alpha
    # gives a proportionally smaller field.
    small, _ = amv.generate_synthetic(amv.BenchmarkConfig(size=16, alpha=8.0))
    large, _ = amv.generate_synthetic(amv.BenchmarkConfig(size=16, alpha=2.0))
    assert tree_allclose(
        small.displacement.values, 0.5 * large.displacement.values
    )
