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

"""Endpoint-error criteria and the weightings that make them optimal with respect to
a posterior expected-error map.

These helpers run eagerly on concrete arrays: they select pixels with boolean masks
and report degenerate inputs with warnings.
"""

import warnings
from typing import Optional, Union

import equinox as eqx
import jax.numpy as jnp
from jaxtyping import Array, ArrayLike, Bool, Float, ScalarLike

from ._grid import ObservationMask, StateVector


class ExpectedErrorMap(eqx.Module):
    """Per-pixel expected error `E[||psi(theta) - psi(theta_hat)||]` of an observable.

    **Attributes:**

    - `values`: The estimate. For a Laplace approximation this is the upper bound
        `F`; for a chain, the Monte-Carlo estimate.
    - `lower`: A lower companion, `F / sqrt(ell)` for a Laplace approximation.
    - `upper`: An upper companion, the streaming Jensen bound for a chain.
    - `indefinite`: Pixels whose estimate could not be computed (e.g. an indefinite
        local Hessian). Their values are `nan`.
    - `kind`: `"displacement"` (`ell = 2`) or `"image"` (`ell = 1`).
    - `estimator`: `"laplace"`, `"two-pass"` or `"jensen"`.
    """

    values: Float[Array, "*channels rows cols"]
    lower: Optional[Float[Array, "*channels rows cols"]] = None
    upper: Optional[Float[Array, "*channels rows cols"]] = None
    indefinite: Optional[Bool[Array, "*channels rows cols"]] = None
    kind: str = eqx.field(static=True, default="displacement")
    estimator: str = eqx.field(static=True, default="two-pass")

    def __check_init__(self):
        if self.kind not in ("displacement", "image"):
            raise ValueError(f"Unknown observable kind {self.kind!r}.")

    @property
    def ell(self) -> int:
        return 2 if self.kind == "displacement" else 1


class ObservableSet(eqx.Module):
    """The per-pixel linear observables `psi` over a pixel domain: the displacement
    pair (`ell = 2`) or one image channel (`ell = 1`).
    """

    domain: Bool[Array, "rows cols"]
    kind: str = eqx.field(static=True, default="displacement")
    channel: int = eqx.field(static=True, default=0)

    def __check_init__(self):
        if self.kind not in ("displacement", "image"):
            raise ValueError(f"Unknown observable kind {self.kind!r}.")

    @property
    def ell(self) -> int:
        return 2 if self.kind == "displacement" else 1

    @property
    def size(self) -> int:
        return int(jnp.sum(self.domain))

    def select(self, theta: StateVector) -> Float[Array, "p ell"]:
        """`psi(theta)` for every observable, in row-major pixel order."""
        blocks = theta.blocks
        if self.kind == "displacement":
            fields = blocks[:2]
        else:
            fields = blocks[2 + self.channel][None]
        return fields[:, self.domain].T

    def restrict(self, field: Float[Array, "rows cols"]) -> Float[Array, " p"]:
        return field[self.domain]


class WeightMap(eqx.Module):
    """Weights over the observables of a domain, in row-major pixel order.

    **Attributes:**

    - `weights`: Nonnegative weights.
    - `family`: `"uniform"`, `"p1"`, `"p2"` or `"sparse"`.
    - `active`: Observables entering the family constraint. Observables excluded for
        a zero expected error have weight zero and are inactive.
    - `scale`: The constant `c_p` (or `c_0` for the sparse family).
    - `threshold`: For the sparse family, the largest selected expected error.
    - `tau`: For the sparse family, the number of selected observables.
    """

    weights: Float[Array, " p"]
    family: str = eqx.field(static=True)
    active: Bool[Array, " p"]
    scale: ScalarLike = 1.0
    threshold: Optional[ScalarLike] = None
    tau: Optional[int] = eqx.field(static=True, default=None)

    def constraint_residual(self) -> float:
        return constraint_residual(self)


def weights_uniform(size: int) -> WeightMap:
    return WeightMap(
        weights=jnp.ones(size), family="uniform", active=jnp.ones(size, dtype=bool)
    )


def _valid_errors(expected_error: Float[Array, " p"]) -> Bool[Array, " p"]:
    valid = jnp.isfinite(expected_error) & (expected_error > 0)
    num_invalid = int(jnp.sum(~valid))
    if num_invalid == expected_error.size:
        raise ValueError("Every expected error is zero or non-finite.")
    if num_invalid > 0:
        warnings.warn(
            f"{num_invalid} observables with a zero or non-finite expected error are "
            "excluded from the weighting.",
            stacklevel=3,
        )
    return valid


def weights_power(expected_error: Float[Array, " p"], p: int) -> WeightMap:
    """The weights minimising `sum_psi w(psi) E(psi)` under the constraint
    `sum -log w = 0` (`p = 1`) or `sum sqrt(w) = #P` (`p = 2`).

    - `p = 1`: `w = geomean(E) / E`.
    - `p = 2`: `w = (#P / (E sum(1 / E)))^2`.
    """
    if p not in (1, 2):
        raise ValueError(f"`p` must be 1 or 2, got {p}.")
    valid = _valid_errors(expected_error)
    safe = jnp.where(valid, expected_error, 1.0)
    num_valid = jnp.sum(valid)
    if p == 1:
        scale = jnp.exp(jnp.sum(jnp.where(valid, jnp.log(safe), 0.0)) / num_valid)
        weights = scale / safe
    else:
        scale = num_valid / jnp.sum(jnp.where(valid, 1 / safe, 0.0))
        weights = (scale / safe) ** 2
    return WeightMap(
        weights=jnp.where(valid, weights, 0.0),
        family=f"p{p}",
        active=valid,
        scale=scale,
    )


def weights_sparse(expected_error: Float[Array, " p"], tau: int) -> WeightMap:
    """Binary weights selecting the `tau` observables of smallest expected error,
    each with weight `#P / tau`.
    """
    size = expected_error.size
    if not 0 < tau <= size:
        raise ValueError(f"`tau` must lie in [1, {size}], got {tau}.")
    order = jnp.argsort(expected_error, stable=True)
    scale = size / tau
    weights = jnp.zeros(size).at[order[:tau]].set(scale)
    return WeightMap(
        weights=weights,
        family="sparse",
        active=jnp.ones(size, dtype=bool),
        scale=scale,
        threshold=expected_error[order[tau - 1]],
        tau=tau,
    )


def constraint_residual(w: WeightMap) -> float:
    """The family constraint `h(w)`, zero for weights produced by this module."""
    weights = w.weights[w.active]
    if w.family == "uniform":
        return float(jnp.sum(weights - 1))
    if w.family == "p1":
        return float(jnp.sum(-jnp.log(weights)))
    if w.family == "p2":
        return float(weights.size - jnp.sum(jnp.sqrt(weights)))
    if w.family == "sparse":
        return float(w.tau - jnp.sum(weights > 0))
    raise ValueError(f"Unknown weight family {w.family!r}.")


def epe(
    domain: Bool[ArrayLike, "rows cols"],
    weights: Optional[WeightMap],
    error_field: Float[Array, "2 rows cols"],
) -> float:
    """The weighted average endpoint error `(1 / #P) sum_psi w(psi) ||e(psi)||` over
    the pixels of `domain`. `weights=None` is the uniform weighting.
    """
    domain = jnp.asarray(domain, dtype=bool)
    size = int(jnp.sum(domain))
    if size == 0:
        raise ValueError("The pixel domain is empty.")
    norms = jnp.linalg.norm(error_field[:, domain], axis=0)
    if weights is None:
        return float(jnp.mean(norms))
    if weights.weights.shape != (size,):
        raise ValueError(
            f"{weights.weights.shape[0]} weights given for a domain of {size} pixels."
        )
    return float(jnp.sum(weights.weights * norms) / size)


def chebyshev_bound(
    expected_error: Union[ScalarLike, Float[Array, "*shape"]], a: ScalarLike
) -> Array:
    """Markov/Chebyshev bound `P(||psi(theta) - psi(theta_hat)|| >= a) <= E / a`."""
    expected_error = jnp.asarray(expected_error)
    a = jnp.asarray(a)
    safe_a = jnp.where(a > 0, a, 1.0)
    return jnp.where(a > 0, jnp.clip(expected_error / safe_a, 0.0, 1.0), 1.0)


CRITERIA = (
    "standard",
    "weighted_1",
    "weighted_2",
    "masked",
    "sparse",
    "sparse_masked",
)


class EpeReport(eqx.Module):
    """The endpoint-error criteria of an estimate, in pixels."""

    standard: float
    weighted_1: float
    weighted_2: float
    masked: float
    sparse: float
    sparse_masked: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in CRITERIA}


def criteria_suite(
    theta_true: StateVector,
    theta_hat: StateVector,
    displacement_error: Union[ExpectedErrorMap, Float[Array, "rows cols"]],
    mask: ObservationMask,
) -> EpeReport:
    """Evaluate `theta_hat` against `theta_true` with the six endpoint-error criteria:

    - standard: uniform weights over every pixel;
    - weighted_1, weighted_2: the `p = 1, 2` optimal weights over every pixel;
    - masked: uniform weights over the pixels observed at both times;
    - sparse: the sparse weights over every pixel, selecting as many pixels as are
        observed at both times;
    - sparse_masked: the sparse weights over the jointly observed pixels, selecting
        half of them (rounded down, at least one).
    """
    if isinstance(displacement_error, ExpectedErrorMap):
        if displacement_error.kind != "displacement":
            raise ValueError("The criteria need a displacement expected-error map.")
        displacement_error = displacement_error.values
    error = theta_true.displacement.values - theta_hat.displacement.values
    if displacement_error.shape != error.shape[1:]:
        raise ValueError(
            f"Expected-error map {displacement_error.shape} does not match the grid "
            f"{error.shape[1:]}."
        )
    everywhere = jnp.ones(error.shape[1:], dtype=bool)
    joint = mask.joint
    num_joint = int(jnp.sum(joint))
    if num_joint == 0:
        raise ValueError("No pixel is observed at both times.")
    all_errors = displacement_error.reshape(-1)
    joint_errors = displacement_error[joint]
    return EpeReport(
        standard=epe(everywhere, None, error),
        weighted_1=epe(everywhere, weights_power(all_errors, 1), error),
        weighted_2=epe(everywhere, weights_power(all_errors, 2), error),
        masked=epe(joint, None, error),
        sparse=epe(everywhere, weights_sparse(all_errors, num_joint), error),
        sparse_masked=epe(
            joint, weights_sparse(joint_errors, max(num_joint // 2, 1)), error
        ),
    )
