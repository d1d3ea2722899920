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
from jaxtyping import Array, Float, PRNGKeyArray, Scalar, ScalarLike

from .._mcmc import (
    AbstractSampler,
    ChainState,
    check_step_size,
    finite_energy,
    Proposal,
)
from .._potential import AbstractPotential
from .._preconditioner import AbstractPreconditioner


def mala_log_ratio(
    preconditioner: AbstractPreconditioner,
    step_size: ScalarLike,
    y: Float[Array, " n"],
    energy: Scalar,
    grad: Float[Array, " n"],
    y_new: Float[Array, " n"],
    energy_new: Scalar,
    grad_new: Float[Array, " n"],
) -> Scalar:
    """The log Metropolis-Hastings ratio of the preconditioned Langevin move from
    `y` to `y_new`.

    With `w = y_new - y + (dt/2) Sigma grad` the forward innovation and
    `w_rev = y - y_new + (dt/2) Sigma grad_new` the backward one, this is

        U(y) - U(y_new) + (|w|^2 - |w_rev|^2) / (2 dt)

    with norms in the metric `Sigma^{-1}`. Swapping the two states negates it.
    """
    half_step = 0.5 * step_size
    forward = y_new - y + half_step * preconditioner.cov(grad)
    backward = y - y_new + half_step * preconditioner.cov(grad_new)
    forward_sq = jnp.vdot(forward, preconditioner.precision(forward))
    backward_sq = jnp.vdot(backward, preconditioner.precision(backward))
    return energy - energy_new + (forward_sq - backward_sq) / (2 * step_size)


class MALA(AbstractSampler):
    """The preconditioned Metropolis-adjusted Langevin algorithm. Proposals are drawn
    from `N(y - (dt/2) Sigma grad U(y), dt Sigma)`.
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
        noise = jr.normal(key, state.y.shape, state.y.dtype)
        drift = 0.5 * self.step_size * preconditioner.cov(state.grad)
        diffusion = jnp.sqrt(self.step_size) * preconditioner.cov_sqrt(noise)
        y = state.y + diffusion - drift
        energy, grad = potential.value_and_grad(y)
        energy = finite_energy(energy)
        log_ratio = mala_log_ratio(
            preconditioner,
            self.step_size,
            state.y,
            state.energy,
            state.grad,
            y,
            energy,
            grad,
        )
        log_ratio = jnp.where(jnp.isfinite(energy), log_ratio, -jnp.inf)
        return Proposal(
            y=y,
            energy=energy,
            grad=grad,
            log_ratio=log_ratio,
            diverged=jnp.array(False),
        )


MALA.__init__.__doc__ = """**Arguments:**

- `step_size`: The time step `dt` of the discretised Langevin diffusion.
"""
