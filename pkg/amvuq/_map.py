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
from typing import Optional

import equinox as eqx
from jaxtyping import Array, Float, Int, Scalar

from ._grid import ObservationSet, StateVector
from ._minimise import minimise
from ._misc import two_norm
from ._posterior import (
    default_init,
    EnergyValue,
    gibbs_energy,
    GibbsPosterior,
    gradient,
    ModelParams,
)
from ._solution import RESULTS
from ._solver import LBFGS, StrongWolfe
from ._wavelet import WaveletBasis


class OptimConfig(eqx.Module):
    """Settings of the MAP estimator.

    **Attributes:**

    - `history_length`: Number of L-BFGS curvature pairs.
    - `max_steps`: Iteration cap.
    - `gtol`: Gradient-norm tolerance. Defaults to `1e-6 * sqrt(n)`.
    - `wavelet`: The basis whose coefficients are optimised. `None` optimises the
        pixel values directly.
    - `c1`, `c2`: Strong Wolfe constants.
    - `max_rejections`: Consecutive rejected line-search steps before giving up.
    - `verbose`: Quantities printed on every accepted step.
    """

    history_length: int = eqx.field(static=True, default=10)
    max_steps: int = eqx.field(static=True, default=500)
    gtol: Optional[float] = None
    wavelet: Optional[WaveletBasis] = WaveletBasis()
    c1: float = 1e-4
    c2: float = 0.9
    max_rejections: int = eqx.field(static=True, default=30)
    verbose: frozenset[str] = eqx.field(static=True, default=frozenset())

    def __check_init__(self):
        if self.history_length < 1:
            raise ValueError("`history_length` must be at least 1.")
        if self.max_steps < 1:
            raise ValueError("`max_steps` must be at least 1.")
        if self.gtol is not None and self.gtol <= 0:
            raise ValueError("`gtol` must be strictly positive.")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("The line-search constants must satisfy 0 < c1 < c2 < 1.")


class MapDiagnostics(eqx.Module):
    """What the MAP estimator did.

    `energy_trace[i]` is the energy of the `i`-th accepted iterate (the initial state
    is the 0-th); entries past `num_accepted_steps` are `nan`.
    """

    result: RESULTS
    num_steps: Int[Array, ""]
    num_accepted_steps: Int[Array, ""]
    energy_trace: Float[Array, " trace"]
    energy: EnergyValue
    grad_norm: Scalar

    @property
    def accepted_energies(self) -> Float[Array, " accepted"]:
        return self.energy_trace[: int(self.num_accepted_steps)]


class _Reparametrisation(eqx.Module):
    wavelet: Optional[WaveletBasis]
    shape: tuple[int, int, int] = eqx.field(static=True)

    def to_coeffs(self, values: Float[Array, " n"]) -> Float[Array, " n"]:
        if self.wavelet is None:
            return values
        return self.wavelet.forward(values.reshape(self.shape)).reshape(-1)

    def from_coeffs(self, coeffs: Float[Array, " n"]) -> Float[Array, " n"]:
        if self.wavelet is None:
            return coeffs
        return self.wavelet.inverse(coeffs.reshape(self.shape)).reshape(-1)


def _objective(coeffs, args):
    posterior, reparam = args
    return posterior(reparam.from_coeffs(coeffs))


def estimate_map(
    y: ObservationSet,
    params: ModelParams,
    config: OptimConfig = OptimConfig(),
    init: Optional[StateVector] = None,
) -> tuple[StateVector, MapDiagnostics]:
    """The maximum a posteriori estimate of `(d, x_t1)`.

    The energy is minimised by L-BFGS over the orthonormal wavelet coefficients of
    every block of the state. Line-search failure is not an error: the last accepted
    iterate is returned with `RESULTS.search_failed`.

    **Arguments:**

    - `y`: The observations.
    - `params`: Posterior hyper-parameters. The temperature is ignored.
    - `config`: An [`amvuq.OptimConfig`][].
    - `init`: The initial state. Defaults to [`amvuq.default_init`][].

    **Returns:**

    The estimate and its [`amvuq.MapDiagnostics`][].
    """
    if init is None:
        init = default_init(y)
    params = params.at_temperature(1.0)
    posterior = GibbsPosterior(y, params)
    n = init.values.size
    gtol = 1e-6 * math.sqrt(n) if config.gtol is None else config.gtol
    reparam = _Reparametrisation(config.wavelet, init.blocks.shape)
    solver = LBFGS(
        gtol,
        history_length=config.history_length,
        search=StrongWolfe(
            c1=config.c1, c2=config.c2, max_rejections=config.max_rejections
        ),
        trace_length=config.max_steps + 1,
        verbose=config.verbose,
    )
    sol = minimise(
        _objective,
        solver,
        reparam.to_coeffs(init.values),
        (posterior, reparam),
        max_steps=config.max_steps,
        throw=False,
    )
    theta = init.with_values(reparam.from_coeffs(sol.value))
    diagnostics = MapDiagnostics(
        result=sol.result,
        num_steps=sol.stats["num_steps"],
        num_accepted_steps=sol.state.num_accepted_steps,
        energy_trace=sol.state.energy_trace,
        energy=gibbs_energy(theta, y, params),
        grad_norm=two_norm(gradient(theta, y, params).values),
    )
    return theta, diagnostics
