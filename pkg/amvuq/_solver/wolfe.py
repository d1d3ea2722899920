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

from typing import cast

import equinox as eqx
import jax.numpy as jnp
from equinox.internal import ω
from jaxtyping import Array, Bool, Int, Scalar, ScalarLike

from .._misc import tree_dot
from .._search import AbstractSearch, Evaluation
from .._solution import RESULTS, Y


class _StrongWolfeState(eqx.Module):
    step_size: Scalar
    lower: Scalar
    upper: Scalar
    num_rejections: Int[Array, ""]


class StrongWolfe(AbstractSearch[Y, _StrongWolfeState]):
    """Bracketing line search for the strong Wolfe conditions.

    A step `y_eval = y + t p` is accepted when

    - `f(y_eval) <= f(y) + c1 * grad(y)•(y_eval - y)` (sufficient decrease), and
    - `|grad(y_eval)•(y_eval - y)| <= c2 |grad(y)•(y_eval - y)|` (curvature).

    Steps that are too short expand the trial step until the minimum is bracketed,
    after which the bracket is bisected.
    """

    c1: ScalarLike = 1e-4
    c2: ScalarLike = 0.9
    step_init: ScalarLike = 1.0
    expand: ScalarLike = 2.0
    max_rejections: int = eqx.field(static=True, default=30)

    def __post_init__(self):
        self.c1 = eqx.error_if(
            self.c1,
            (self.c1 <= 0) | (self.c1 >= self.c2),  # pyright: ignore
            "`StrongWolfe(c1=...)` must satisfy `0 < c1 < c2`.",
        )
        self.c2 = eqx.error_if(
            self.c2,
            self.c2 >= 1,  # pyright: ignore
            "`StrongWolfe(c2=...)` must be less than 1.",
        )
        self.step_init = eqx.error_if(
            self.step_init,
            self.step_init <= 0,  # pyright: ignore
            "`StrongWolfe(step_init=...)` must be strictly greater than 0.",
        )
        self.expand = eqx.error_if(
            self.expand,
            self.expand <= 1,  # pyright: ignore
            "`StrongWolfe(expand=...)` must be strictly greater than 1.",
        )

    def init(self, y: Y) -> _StrongWolfeState:
        del y
        return _StrongWolfeState(
            step_size=jnp.array(self.step_init),
            lower=jnp.array(0.0),
            upper=jnp.array(jnp.inf),
            num_rejections=jnp.array(0),
        )

    def step(
        self,
        first_step: Bool[Array, ""],
        y: Y,
        y_eval: Y,
        current: Evaluation,
        trial: Evaluation,
        state: _StrongWolfeState,
    ) -> tuple[Scalar, Bool[Array, ""], RESULTS, _StrongWolfeState]:
        y_diff = (y_eval**ω - y**ω).ω
        slope = tree_dot(current.grad, y_diff)
        slope_eval = tree_dot(trial.grad, y_diff)
        f_diff = trial.f - current.f
        finite = jnp.isfinite(trial.f) & jnp.isfinite(slope_eval)
        sufficient_decrease = finite & (slope < 0) & (f_diff <= self.c1 * slope)
        curvature = jnp.abs(slope_eval) <= self.c2 * jnp.abs(slope)
        accept = first_step | (sufficient_decrease & curvature)

        # Either the step overshot the minimum along the line, or it is too short.
        too_long = jnp.invert(sufficient_decrease) | (slope_eval > 0)
        lower = jnp.where(too_long, state.lower, state.step_size)
        upper = jnp.where(too_long, state.step_size, state.upper)
        retry = jnp.where(
            jnp.isfinite(upper), 0.5 * (lower + upper), self.expand * state.step_size
        )
        step_size = jnp.where(accept, self.step_init, retry)
        step_size = cast(Scalar, step_size)
        num_rejections = jnp.where(accept, 0, state.num_rejections + 1)
        result = RESULTS.where(
            num_rejections >= self.max_rejections,
            RESULTS.search_failed,
            RESULTS.successful,
        )
        state = _StrongWolfeState(
            step_size=step_size,
            lower=jnp.where(accept, 0.0, lower),
            upper=jnp.where(accept, jnp.inf, upper),
            num_rejections=num_rejections,
        )
        return step_size, accept, result, state


StrongWolfe.__init__.__doc__ = """**Arguments:**

- `c1`: The sufficient-decrease constant. Must satisfy `0 < c1 < c2`.
- `c2`: The curvature constant. Must be less than 1.
- `step_init`: The first step size tried along each new direction. Must be greater
    than 0.
- `expand`: The factor by which a too-short step is lengthened before the minimum has
    been bracketed. Must be greater than 1.
- `max_rejections`: The number of consecutive rejected steps after which the search
    reports `RESULTS.search_failed`.
"""
