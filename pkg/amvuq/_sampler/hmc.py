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

import equinox as eqx
import jax.lax as lax
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


def kinetic_energy(
    preconditioner: AbstractPreconditioner, momentum: Float[Array, " n"]
) -> Scalar:
    """`K(p) = p^T Sigma p / 2`."""
    return 0.5 * jnp.vdot(momentum, preconditioner.cov(momentum))


def leapfrog(
    potential: AbstractPotential,
    preconditioner: AbstractPreconditioner,
    y: Float[Array, " n"],
    momentum: Float[Array, " n"],
    grad: Float[Array, " n"],
    step_size: ScalarLike,
    num_steps: int,
) -> tuple[Float[Array, " n"], Float[Array, " n"], Scalar, Float[Array, " n"]]:
    """Integrate Hamilton's equations for `H(y, p) = U(y) + p^T Sigma p / 2`.

    Each step is

        y' = y + eps Sigma p - (eps^2 / 2) Sigma grad U(y)
        p' = p - (eps / 2) (grad U(y) + grad U(y'))

    **Returns:**

    The final position, momentum, energy and gradient.
    """

    def body(carry, _):
        y, momentum, _, grad = carry
        half_step = 0.5 * step_size
        y = y + step_size * preconditioner.cov(momentum - half_step * grad)
        energy, grad_new = potential.value_and_grad(y)
        momentum = momentum - half_step * (grad + grad_new)
        return (y, momentum, energy, grad_new), None

    energy = jnp.zeros((), y.dtype)
    (y, momentum, energy, grad), _ = lax.scan(
        body, (y, momentum, energy, grad), None, length=num_steps
    )
    return y, momentum, energy, grad


class HMC(AbstractSampler):
    """Hamiltonian Monte Carlo with momentum `p ~ N(0, Sigma^{-1})`, kinetic energy
    `p^T Sigma p / 2`, and a leapfrog integrator.

    With `num_leapfrog=1` and a step size of `sqrt(dt)`, the proposals and acceptance
    decisions coincide with those of [`amvuq.MALA`][] with step size `dt` under the
    same key.
    """

    step_size: ScalarLike
    num_leapfrog: int = eqx.field(static=True, default=10)
    divergence_threshold: ScalarLike = 1000.0

    def __check_init__(self):
        check_step_size(self.step_size)
        if self.num_leapfrog < 1:
            raise ValueError(
                f"`num_leapfrog` must be at least 1, got {self.num_leapfrog}."
            )

    def propose(
        self,
        potential: AbstractPotential,
        preconditioner: AbstractPreconditioner,
        state: ChainState,
        key: PRNGKeyArray,
    ) -> Proposal:
        noise = jr.normal(key, state.y.shape, state.y.dtype)
        momentum = preconditioner.precision_sqrt(noise)
        y, momentum_new, energy, grad = leapfrog(
            potential,
            preconditioner,
            state.y,
            momentum,
            state.grad,
            self.step_size,
            self.num_leapfrog,
        )
        energy = finite_energy(energy)
        log_ratio = (
            state.energy
            - energy
            + kinetic_energy(preconditioner, momentum)
            - kinetic_energy(preconditioner, momentum_new)
        )
        # A trajectory that left the finite numbers is a numerical rejection, not a
        # divergence.
        finite = jnp.isfinite(energy) & jnp.all(jnp.isfinite(y))
        log_ratio = jnp.where(finite, log_ratio, jnp.nan)
        diverged = jnp.abs(log_ratio) > self.divergence_threshold
        return Proposal(
            y=y, energy=energy, grad=grad, log_ratio=log_ratio, diverged=diverged
        )


HMC.__init__.__doc__ = """**Arguments:**

- `step_size`: The leapfrog step `eps`.
- `num_leapfrog`: The number of leapfrog steps per proposal.
- `divergence_threshold`: Proposals whose Hamiltonian changes by more than this are
    rejected and counted as divergent. Trajectories that reach a non-finite
    position or energy are counted as numerical rejections instead.
"""
