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
from collections.abc import Callable

import equinox as eqx
import jax
import jax.numpy as jnp
from jaxtyping import Array, Float, Scalar, ScalarLike


def check_temperature(zeta: ScalarLike) -> None:
    """Raise if a concrete temperature lies outside `(0, 1]`."""
    if isinstance(zeta, jax.core.Tracer):
        return
    if not 0 < float(zeta) <= 1:
        raise ValueError(f"The temperature must lie in (0, 1], got {zeta}.")


class AbstractPotential(eqx.Module):
    """An energy `U(y)` over flat vectors, the negative log-density of a target
    distribution up to a constant.
    """

    @abc.abstractmethod
    def value_and_grad(
        self, y: Float[Array, " n"]
    ) -> tuple[Scalar, Float[Array, " n"]]:
        """Returns `U(y)` and its gradient."""

    def value(self, y: Float[Array, " n"]) -> Scalar:
        return self.value_and_grad(y)[0]

    def __call__(self, y: Float[Array, " n"]) -> Scalar:
        return self.value(y)


class FunctionPotential(AbstractPotential):
    """A potential given by a scalar function, differentiated with autodiff."""

    fn: Callable[[Array], Scalar]

    def value(self, y: Float[Array, " n"]) -> Scalar:
        return self.fn(y)

    def value_and_grad(
        self, y: Float[Array, " n"]
    ) -> tuple[Scalar, Float[Array, " n"]]:
        return jax.value_and_grad(self.fn)(y)


class GaussianPotential(AbstractPotential):
    """`U(y) = (y - mean)^T precision (y - mean) / 2`."""

    mean: Float[Array, " n"]
    precision: Float[Array, "n n"]

    def value_and_grad(
        self, y: Float[Array, " n"]
    ) -> tuple[Scalar, Float[Array, " n"]]:
        diff = y - self.mean
        grad = self.precision @ diff
        return 0.5 * jnp.dot(diff, grad), grad


class TemperedPotential(AbstractPotential):
    """The tempered energy `U / zeta`."""

    potential: AbstractPotential
    zeta: ScalarLike

    def __check_init__(self):
        check_temperature(self.zeta)

    def value(self, y: Float[Array, " n"]) -> Scalar:
        return self.potential.value(y) / self.zeta

    def value_and_grad(
        self, y: Float[Array, " n"]
    ) -> tuple[Scalar, Float[Array, " n"]]:
        value, grad = self.potential.value_and_grad(y)
        return value / self.zeta, grad / self.zeta
