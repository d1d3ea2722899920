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
from jaxtyping import Array, Float, PRNGKeyArray, ScalarLike

from .._mcmc import (
    AbstractSampler,
    ChainState,
    check_step_size,
    finite_energy,
    Proposal,
)
from .._potential import AbstractPotential
from .._preconditioner import AbstractPreconditioner


def rw_propose(
    key: PRNGKeyArray,
    y: Float[Array, " n"],
    step_size: ScalarLike,
    preconditioner: AbstractPreconditioner,
) -> Float[Array, " n"]:
    """The symmetric Gaussian proposal `y + sqrt(step_size) Sigma^{1/2} xi`, with
    `xi ~ N(0, I)`.
    """
    noise = jr.normal(key, y.shape, y.dtype)
    return y + jnp.sqrt(step_size) * preconditioner.cov_sqrt(noise)


class RandomWalk(AbstractSampler):
    """Random-walk Metropolis with proposal covariance `step_size * Sigma`.

    Pass an [`amvuq.IdentityPreconditioner`][] for the plain random walk, or an
    [`amvuq.FbmPreconditioner`][] for the preconditioned one.
    """

    step_size: ScalarLike

    def __check_init__(self):
        check_step_size(self.step_size)

    def propose(
        self,
        potential: AbstractPotential,
        preconditioner: AbstractPreconditioner,
        state: ChainState,
        key: PRNGKeyArray,
    ) -> Proposal:
        y = rw_propose(key, state.y, self.step_size, preconditioner)
        energy, grad = potential.value_and_grad(y)
        energy = finite_energy(energy)
        return Proposal(
            y=y,
            energy=energy,
            grad=grad,
            log_ratio=state.energy - energy,
            diverged=jnp.array(False),
        )


RandomWalk.__init__.__doc__ = """**Arguments:**

- `step_size`: The proposal variance scale `dt`.
"""
