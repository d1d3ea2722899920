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

import abc

import equinox as eqx
import jax.numpy as jnp
from jaxtyping import Array, ArrayLike, Float, ScalarLike

from ._fbm import FbmOperator


class AbstractPreconditioner(eqx.Module):
    """A covariance `Sigma` over flat state vectors, used to shape MCMC proposals.

    Singular covariances are allowed: `precision` then applies the pseudo-inverse, and
    proposals never leave the range of `Sigma`.
    """

    @abc.abstractmethod
    def cov(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        """`Sigma v`."""

    @abc.abstractmethod
    def precision(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        """`Sigma^{-1} v`."""

    @abc.abstractmethod
    def cov_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        """`Sigma^{1/2} v`."""

    @abc.abstractmethod
    def precision_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        """`Sigma^{-1/2} v`."""


class IdentityPreconditioner(AbstractPreconditioner):
    def cov(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return v

    def precision(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return v

    def cov_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return v

    def precision_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return v


class DensePreconditioner(AbstractPreconditioner):
    """A symmetric positive definite covariance given as a dense matrix."""

    matrix: Float[Array, "n n"]
    eigenvalues: Float[Array, " n"]
    eigenvectors: Float[Array, "n n"]

    def __init__(self, matrix: Float[ArrayLike, "n n"]):
        matrix = jnp.asarray(matrix)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Expected a square matrix, got shape {matrix.shape}.")
        eigenvalues, eigenvectors = jnp.linalg.eigh(matrix)
        self.eigenvalues = eqx.error_if(
            eigenvalues,
            eigenvalues <= 0,
            "The preconditioner covariance must be positive definite.",
        )
        self.matrix = matrix
        self.eigenvectors = eigenvectors

    def _spectral(self, v, power):
        vecs = self.eigenvectors
        return vecs @ (self.eigenvalues**power * (vecs.T @ v))

    def cov(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self.matrix @ v

    def precision(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._spectral(v, -1.0)

    def cov_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._spectral(v, 0.5)

    def precision_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._spectral(v, -0.5)


class FbmPreconditioner(AbstractPreconditioner):
    """The fBm covariance of Hurst exponent `hurst` on both displacement blocks of a
    state vector, and the identity on its image blocks.
    """

    hurst: ScalarLike
    rows: int = eqx.field(static=True)
    cols: int = eqx.field(static=True)
    channels: int = eqx.field(static=True)

    @property
    def operator(self) -> FbmOperator:
        return FbmOperator(self.hurst, self.rows, self.cols)

    def _blockwise(self, v, fn):
        blocks = v.reshape(2 + self.channels, self.rows, self.cols)
        displacement = fn(self.operator, blocks[:2])
        return jnp.concatenate([displacement, blocks[2:]]).reshape(-1)

    def cov(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._blockwise(v, lambda op, d: op.cov(d))

    def precision(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._blockwise(v, lambda op, d: op.prec(d))

    def cov_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._blockwise(v, lambda op, d: op.sqrt(d, sign=1))

    def precision_sqrt(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        return self._blockwise(v, lambda op, d: op.sqrt(d, sign=-1))


FbmPreconditioner.__init__.__doc__ = """**Arguments:**

- `hurst`: Hurst exponent of the fBm covariance. Using half the Hurst exponent of the
    prior is a good default.
- `rows`, `cols`: The grid.
- `channels`: The number of image channels in the state vector.
"""
