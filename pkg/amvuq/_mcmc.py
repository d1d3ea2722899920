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
from typing import Union

import equinox as eqx
import jax.numpy as jnp
import jax.random as jr
from equinox import AbstractVar
from jaxtyping import (
    Array,
    ArrayLike,
    Bool,
    Float,
    Int,
    PRNGKeyArray,
    Scalar,
    ScalarLike,
)

from ._misc import tree_where
from ._potential import AbstractPotential
from ._preconditioner import AbstractPreconditioner


class ChainState(eqx.Module):
    """The state of a Markov chain.

    **Attributes:**

    - `y`: The current state.
    - `energy`: The potential at `y`.
    - `grad`: The gradient of the potential at `y`.
    - `accepted`: Whether the last proposal was accepted.
    - `num_accepted`: Number of accepted proposals so far.
    - `num_numerical_rejections`: Proposals rejected because their log acceptance
        ratio was `nan`.
    - `num_divergences`: Proposals rejected because the energy error of their
        trajectory exceeded the divergence threshold.
    """

    y: Float[Array, " n"]
    energy: Scalar
    grad: Float[Array, " n"]
    accepted: Bool[Array, ""]
    num_accepted: Int[Array, ""]
    num_numerical_rejections: Int[Array, ""]
    num_divergences: Int[Array, ""]


class Proposal(eqx.Module):
    """A candidate state with its energy, gradient and log acceptance ratio."""

    y: Float[Array, " n"]
    energy: Scalar
    grad: Float[Array, " n"]
    log_ratio: Scalar
    diverged: Bool[Array, ""]


def finite_energy(energy: Scalar) -> Scalar:
    """Map a `nan` energy to `+inf`, so that the proposal is rejected."""
    return jnp.where(jnp.isnan(energy), jnp.inf, energy)


def mh_accept(
    key: PRNGKeyArray, log_ratio: Union[ScalarLike, Float[Array, ""]]
) -> tuple[Bool[Array, ""], Bool[Array, ""]]:
    """Metropolis-Hastings decision: accept with probability `min(1, exp(log_ratio))`.

    **Returns:**

    A 2-tuple of the decision and whether the ratio was `nan` (a numerical rejection).
    A ratio of `0` is always accepted and a ratio of `-inf` never is.
    """
    log_ratio = jnp.asarray(log_ratio)
    numerical = jnp.isnan(log_ratio)
    u = jr.uniform(key, dtype=jnp.result_type(log_ratio, float))
    accept = (jnp.log(u) < log_ratio) & jnp.invert(numerical)
    return accept, numerical


class AbstractSampler(eqx.Module):
    """Abstract base class for Metropolis-Hastings kernels over flat state vectors.

    Subclasses implement `propose`; `step` draws the proposal and the acceptance
    decision from independent halves of `key`.
    """

    step_size: AbstractVar[ScalarLike]

    def init(self, potential: AbstractPotential, y0: Float[Array, " n"]) -> ChainState:
        energy, grad = potential.value_and_grad(y0)
        zero = jnp.array(0, dtype=jnp.int32)
        return ChainState(
            y=y0,
            energy=energy,
            grad=grad,
            accepted=jnp.array(True),
            num_accepted=zero,
            num_numerical_rejections=zero,
            num_divergences=zero,
        )

    @abc.abstractmethod
    def propose(
        self,
        potential: AbstractPotential,
        preconditioner: AbstractPreconditioner,
        state: ChainState,
        key: PRNGKeyArray,
    ) -> Proposal:
        """Draw a candidate state and compute its log acceptance ratio."""

    def step(
        self,
        potential: AbstractPotential,
        preconditioner: AbstractPreconditioner,
        state: ChainState,
        key: PRNGKeyArray,
    ) -> ChainState:
        k_propose, k_accept = jr.split(key)
        proposal = self.propose(potential, preconditioner, state, k_propose)
        accept, numerical = mh_accept(k_accept, proposal.log_ratio)
        accept = accept & jnp.invert(proposal.diverged)
        y, energy, grad = tree_where(
            accept,
            (proposal.y, proposal.energy, proposal.grad),
            (state.y, state.energy, state.grad),
        )
        return ChainState(
            y=y,
            energy=energy,
            grad=grad,
            accepted=accept,
            num_accepted=state.num_accepted + accept,
            num_numerical_rejections=state.num_numerical_rejections + numerical,
            num_divergences=state.num_divergences + proposal.diverged,
        )


def check_step_size(step_size: ArrayLike) -> None:
    if isinstance(step_size, (int, float)) and not step_size > 0:
        raise ValueError(f"The step size must be strictly positive, got {step_size}.")
