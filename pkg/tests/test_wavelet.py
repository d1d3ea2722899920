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

import jax.numpy as jnp
import jax.random as jr
import pytest

import amvuq as amv

from .helpers import dense_matrix, tree_allclose


@pytest.mark.parametrize("family", ["haar", "db4", "coif5"])
@pytest.mark.parametrize("shape", [(8, 8), (16, 32)])
def test_perfect_reconstruction(getkey, family, shape):
    basis = amv.WaveletBasis(family)
    x = jr.normal(getkey(), (2,) + shape)
    coeffs = basis.forward(x)
    assert tree_allclose(basis.inverse(coeffs), x, rtol=1e-10, atol=1e-10)
    assert tree_allclose(jnp.sum(coeffs**2), jnp.sum(x**2), rtol=1e-10)


def test_orthonormal():
    basis = amv.WaveletBasis()
    matrix = dense_matrix(lambda v: basis.forward(v.reshape(8, 8)).reshape(-1), 64)
    assert tree_allclose(matrix @ matrix.T, jnp.eye(64), atol=1e-10)


def test_depth():
    basis = amv.WaveletBasis()
    assert basis.depth(32, 32) == 3
    assert basis.depth(4, 64) == 0
    assert amv.WaveletBasis(level=10).depth(32, 16) == 3
    assert amv.WaveletBasis(level=0).depth(32, 32) == 0


def test_level_zero_is_identity(getkey):
    x = jr.normal(getkey(), (8, 8))
    assert jnp.array_equal(amv.WaveletBasis(level=0).forward(x), x)


def test_pyramid_layout():
    basis = amv.WaveletBasis("haar", level=1)
    coeffs = basis.forward(jnp.ones((8, 8)))
    # A constant image only has approximation coefficients.
    assert tree_allclose(coeffs[:4, :4], jnp.full((4, 4), 2.0))
    assert tree_allclose(coeffs.at[:4, :4].set(0.0), jnp.zeros((8, 8)), atol=1e-12)


def test_invalid():
    with pytest.raises(ValueError):
        amv.WaveletBasis("not-a-wavelet")
    with pytest.raises(ValueError):
        amv.WaveletBasis("bior2.2")
    with pytest.raises(ValueError):
        amv.WaveletBasis(periodic=False)
    with pytest.raises(ValueError):
        amv.WaveletBasis(level=-1)
