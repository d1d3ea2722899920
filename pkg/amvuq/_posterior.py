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

"""The Gibbs energy of the joint displacement/image posterior.

    U(d, x) = beta ||delta(d, x)||^2 + alpha (d_1^T P d_1 + d_2^T P d_2) + gamma ||x||^2

with `delta` the masked residual of the warped image at `t0` and of `x` at `t1`, and
`P` the fBm precision of Hurst exponent `hurst`. Prior weights are the ratios
`alpha = alpha_raw / beta` and `gamma = gamma_raw / beta`. The tempered energy is
`U / zeta`.
"""

from typing import Optional, TypeVar

import equinox as eqx
import jax
import jax.lax as lax
import jax.numpy as jnp
from jaxtyping import Array, Float, Scalar, ScalarLike

from ._fbm import fractional_apply
from ._grid import ImageStack, ObservationSet, residual, StateVector
from ._potential import AbstractPotential, check_temperature
from ._spline import bspline_analysis, warp, warp_adjoint_image, warp_spatial_derivs


def _check_positive(name: str, value: ScalarLike) -> None:
    if not isinstance(value, jax.core.Tracer) and not float(value) > 0:
        raise ValueError(f"`{name}` must be strictly positive, got {value}.")


class ModelParams(eqx.Module):
    """Posterior hyper-parameters.

    **Attributes:**

    - `alpha`: Weight of the displacement prior.
    - `gamma`: Weight of the image prior.
    - `hurst`: Hurst exponent of the fBm displacement prior.
    - `beta`: Noise precision. Usually 1, with the prior weights given as ratios.
    - `zeta`: Temperature in `(0, 1]`.
    """

    alpha: ScalarLike = 1.0
    gamma: ScalarLike = 0.1
    hurst: ScalarLike = 1.0
    beta: ScalarLike = 1.0
    zeta: ScalarLike = 1.0

    def __check_init__(self):
        _check_positive("alpha", self.alpha)
        _check_positive("gamma", self.gamma)
        _check_positive("hurst", self.hurst)
        _check_positive("beta", self.beta)
        check_temperature(self.zeta)

    def at_temperature(self, zeta: ScalarLike) -> "ModelParams":
        return ModelParams(self.alpha, self.gamma, self.hurst, self.beta, zeta)


class EnergyValue(eqx.Module):
    total: Scalar
    likelihood: Scalar
    prior: Scalar


def _warped(theta: StateVector):
    coeffs = bspline_analysis(theta.image)
    return coeffs, warp(coeffs, theta.displacement)


def likelihood_energy(
    theta: StateVector, y: ObservationSet, params: Optional[ModelParams] = None
) -> Scalar:
    """`beta ||delta||^2`."""
    beta = 1.0 if params is None else params.beta
    _, warped = _warped(theta)
    return beta * residual(theta, y, warped).sum_squares()


def prior_energy(theta: StateVector, params: ModelParams) -> Scalar:
    """`alpha (d_1^T P d_1 + d_2^T P d_2) + gamma ||x||^2`."""
    d = theta.displacement.values
    precision_d = fractional_apply(d, params.hurst + 1)
    return params.alpha * jnp.sum(d * precision_d) + params.gamma * jnp.sum(
        theta.image.values**2
    )


def gibbs_energy(
    theta: StateVector, y: ObservationSet, params: ModelParams
) -> EnergyValue:
    likelihood = likelihood_energy(theta, y, params)
    prior = prior_energy(theta, params)
    return EnergyValue(total=likelihood + prior, likelihood=likelihood, prior=prior)


def _likelihood_gradient_blocks(
    theta: StateVector, y: ObservationSet, beta: ScalarLike
) -> Float[Array, "c rows cols"]:
    d = theta.displacement
    coeffs, warped = _warped(theta)
    delta = residual(theta, y, warped)
    horizontal, vertical = warp_spatial_derivs(coeffs, d)
    grad_d = jnp.stack(
        [
            jnp.sum(horizontal.values * delta.t0, axis=0),
            jnp.sum(vertical.values * delta.t0, axis=0),
        ]
    )
    grad_x = warp_adjoint_image(d, ImageStack(delta.t0)).values + delta.t1
    return 2 * beta * jnp.concatenate([grad_d, grad_x])


def likelihood_gradient(
    theta: StateVector, y: ObservationSet, params: Optional[ModelParams] = None
) -> StateVector:
    """The gradient of `beta ||delta||^2`, with the spatial derivatives of the warp
    taken by central differences.
    """
    beta = 1.0 if params is None else params.beta
    return StateVector.from_blocks(_likelihood_gradient_blocks(theta, y, beta))


def gradient(theta: StateVector, y: ObservationSet, params: ModelParams) -> StateVector:
    """The gradient of the Gibbs energy."""
    blocks = theta.blocks
    prior = jnp.concatenate(
        [
            2 * params.alpha * fractional_apply(blocks[:2], params.hurst + 1),
            2 * params.gamma * blocks[2:],
        ]
    )
    data = _likelihood_gradient_blocks(theta, y, params.beta)
    return StateVector.from_blocks(prior + data)


def tempered_energy(
    theta_tilde: StateVector, y: ObservationSet, params: ModelParams
) -> Scalar:
    check_temperature(params.zeta)
    return gibbs_energy(theta_tilde, y, params).total / params.zeta


def tempered_gradient(
    theta_tilde: StateVector, y: ObservationSet, params: ModelParams
) -> StateVector:
    check_temperature(params.zeta)
    grad = gradient(theta_tilde, y, params)
    return grad.with_values(grad.values / params.zeta)


_Sample = TypeVar("_Sample", StateVector, Array)


def rescale_sample(
    theta_tilde: _Sample, theta_hat: _Sample, zeta: ScalarLike
) -> _Sample:
    """Map a sample of the tempered posterior back to the scale of the untempered
    one: `theta_hat + (theta_tilde - theta_hat) / sqrt(zeta)`.
    """
    if not isinstance(zeta, jax.core.Tracer) and not float(zeta) > 0:
        raise ValueError(f"The temperature must be strictly positive, got {zeta}.")
    if isinstance(theta_tilde, StateVector):
        assert isinstance(theta_hat, StateVector)
        return theta_tilde.with_values(
            rescale_sample(theta_tilde.values, theta_hat.values, zeta)
        )
    return theta_hat + (theta_tilde - theta_hat) / jnp.sqrt(zeta)


def default_init(y: ObservationSet) -> StateVector:
    """Zero displacement, and the image at `t1` with unobserved pixels filled by the
    mean of the observed ones (zero if none are observed).
    """
    observed = y.mask.t1
    values = jnp.where(observed, y.y_t1.values, 0.0)
    count = jnp.sum(observed)
    mean = jnp.sum(values, axis=(1, 2)) / jnp.maximum(count, 1)
    image = jnp.where(observed, values, mean[:, None, None])
    displacement = jnp.zeros((2,) + image.shape[1:], image.dtype)
    return StateVector.from_blocks(jnp.concatenate([displacement, image]))


class GibbsPosterior(AbstractPotential):
    """The tempered Gibbs energy `U / zeta` as a potential over flat state vectors.

    Calling the potential is differentiable in the state, and `jax.grad` returns the
    analytic gradient of [`amvuq.gradient`][]. The observations and the
    hyper-parameters are constants: derivatives with respect to them are zero.
    """

    observations: ObservationSet
    params: ModelParams

    @property
    def rows(self) -> int:
        return self.observations.grid.rows

    @property
    def cols(self) -> int:
        return self.observations.grid.cols

    @property
    def channels(self) -> int:
        return self.observations.channels

    @property
    def size(self) -> int:
        return (2 + self.channels) * self.rows * self.cols

    def state(self, values: Float[Array, " n"]) -> StateVector:
        return StateVector(values, self.rows, self.cols, self.channels)

    def energy(self, values: Float[Array, " n"]) -> EnergyValue:
        """The untempered energy and its two parts."""
        return gibbs_energy(self.state(values), self.observations, self.params)

    def value(self, values: Float[Array, " n"]) -> Scalar:
        return _posterior_value(values, lax.stop_gradient(self))

    def value_and_grad(
        self, values: Float[Array, " n"]
    ) -> tuple[Scalar, Float[Array, " n"]]:
        theta = self.state(values)
        energy = gibbs_energy(theta, self.observations, self.params).total
        grad = gradient(theta, self.observations, self.params).values
        return energy / self.params.zeta, grad / self.params.zeta

    def likelihood_gradient(self, values: Float[Array, " n"]) -> Float[Array, " n"]:
        """The untempered gradient of the data term alone."""
        theta = self.state(values)
        return _likelihood_gradient_blocks(
            theta, self.observations, self.params.beta
        ).reshape(-1)


@jax.custom_jvp
def _posterior_value(values, posterior):
    return posterior.energy(values).total / posterior.params.zeta


@_posterior_value.defjvp
def _posterior_value_jvp(primals, tangents):
    values, posterior = primals
    t_values, _ = tangents
    value, grad = posterior.value_and_grad(values)
    return value, jnp.vdot(grad, t_values)
