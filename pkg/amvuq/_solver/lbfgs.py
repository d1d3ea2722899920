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

from collections.abc import Callable
from typing import Any, Generic

import equinox as eqx
import jax
import jax.flatten_util as jfu
import jax.lax as lax
import jax.numpy as jnp
from equinox.internal import ω
from jaxtyping import Array, Bool, Float, Int, PyTree, Scalar

from .._minimise import AbstractMinimiser, Objective
from .._misc import debug_print, tree_full_like, tree_where, two_norm
from .._search import AbstractDescent, Evaluation
from .._solution import Aux, RESULTS, Y
from .wolfe import StrongWolfe


class _LimitedMemoryState(eqx.Module, Generic[Y]):
    first_step: Bool[Array, ""]
    y_prev: Float[Array, " n"]
    grad_prev: Float[Array, " n"]
    y_diffs: Float[Array, "m n"]
    grad_diffs: Float[Array, "m n"]
    inv_inner: Float[Array, " m"]
    index: Int[Array, ""]
    count: Int[Array, ""]
    direction: Y


def _two_loop(grad, y_diffs, grad_diffs, inv_inner, index, gamma):
    history_length = inv_inner.shape[0]

    def slot(k):
        return (index - 1 - k) % history_length

    def first_loop(k, carry):
        q, alphas = carry
        i = slot(k)
        alpha = inv_inner[i] * jnp.dot(y_diffs[i], q)
        return q - alpha * grad_diffs[i], alphas.at[k].set(alpha)

    q, alphas = lax.fori_loop(
        0, history_length, first_loop, (grad, jnp.zeros_like(inv_inner))
    )

    def second_loop(j, r):
        k = history_length - 1 - j
        i = slot(k)
        beta = inv_inner[i] * jnp.dot(grad_diffs[i], r)
        return r + (alphas[k] - beta) * y_diffs[i]

    return lax.fori_loop(0, history_length, second_loop, gamma * q)


class LimitedMemoryDescent(AbstractDescent[Y, _LimitedMemoryState]):
    """The L-BFGS direction: the inverse-Hessian approximation built from the last
    `history_length` curvature pairs, applied to the gradient by the two-loop
    recursion.
    """

    history_length: int = eqx.field(static=True, default=10)

    def __check_init__(self):
        if self.history_length < 1:
            raise ValueError("`history_length` must be at least 1.")

    def init(self, y: Y) -> _LimitedMemoryState:
        y_flat, _ = jfu.ravel_pytree(y)
        (n,) = y_flat.shape
        return _LimitedMemoryState(
            first_step=jnp.array(True),
            y_prev=jnp.zeros_like(y_flat),
            grad_prev=jnp.zeros_like(y_flat),
            y_diffs=jnp.zeros((self.history_length, n), y_flat.dtype),
            grad_diffs=jnp.zeros((self.history_length, n), y_flat.dtype),
            inv_inner=jnp.zeros(self.history_length, y_flat.dtype),
            index=jnp.array(0),
            count=jnp.array(0),
            direction=tree_full_like(y, 0),
        )

    def query(
        self, y: Y, evaluation: Evaluation, state: _LimitedMemoryState
    ) -> _LimitedMemoryState:
        y_flat, unravel = jfu.ravel_pytree(y)
        grad, _ = jfu.ravel_pytree(evaluation.grad)
        y_diff = y_flat - state.y_prev
        grad_diff = grad - state.grad_prev
        inner = jnp.dot(y_diff, grad_diff)
        # Skip pairs violating the curvature condition, so the approximation stays
        # positive definite.
        store = jnp.invert(state.first_step) & (inner > jnp.finfo(inner.dtype).eps)
        safe_inner = jnp.where(store, inner, 1.0)
        y_diffs = jnp.where(
            store, state.y_diffs.at[state.index].set(y_diff), state.y_diffs
        )
        grad_diffs = jnp.where(
            store, state.grad_diffs.at[state.index].set(grad_diff), state.grad_diffs
        )
        inv_inner = jnp.where(
            store, state.inv_inner.at[state.index].set(1 / safe_inner), state.inv_inner
        )
        index = jnp.where(store, (state.index + 1) % self.history_length, state.index)
        count = jnp.where(
            store, jnp.minimum(state.count + 1, self.history_length), state.count
        )

        newest = (index - 1) % self.history_length
        newest_norm = jnp.dot(grad_diffs[newest], grad_diffs[newest])
        safe_newest_norm = jnp.where(count > 0, newest_norm, 1.0)
        grad_scale = 1 / jnp.maximum(1.0, jnp.linalg.norm(grad))
        gamma = jnp.where(
            count > 0,
            jnp.dot(y_diffs[newest], grad_diffs[newest]) / safe_newest_norm,
            grad_scale,
        )
        direction = -_two_loop(grad, y_diffs, grad_diffs, inv_inner, index, gamma)
        # Fall back to steepest descent if the recursion lost the descent property.
        is_descent = jnp.dot(direction, grad) < 0
        direction = jnp.where(is_descent, direction, -grad_scale * grad)
        return _LimitedMemoryState(
            first_step=jnp.array(False),
            y_prev=y_flat,
            grad_prev=grad,
            y_diffs=y_diffs,
            grad_diffs=grad_diffs,
            inv_inner=inv_inner,
            index=index,
            count=count,
            direction=unravel(direction),
        )

    def step(self, step_size: Scalar, state: _LimitedMemoryState) -> tuple[Y, RESULTS]:
        return (step_size * state.direction**ω).ω, RESULTS.successful


_LABELS = {"step": "Step", "energy": "Energy", "grad_norm": "Gradient norm"}


class _LBFGSState(eqx.Module, Generic[Y, Aux]):
    first_step: Bool[Array, ""]
    y_eval: Y
    search_state: Any
    # At the last accepted iterate.
    current: Evaluation
    aux: Aux
    descent_state: _LimitedMemoryState
    terminate: Bool[Array, ""]
    result: RESULTS
    num_accepted_steps: Int[Array, ""]
    energy_trace: Float[Array, " trace"]


class LBFGS(AbstractMinimiser[Y, Aux, _LBFGSState]):
    """Limited-memory BFGS minimisation algorithm with a strong Wolfe line search.

    Terminates once the norm of the gradient at an accepted iterate falls below
    `gtol`. The objective value at every accepted iterate is recorded in
    `state.energy_trace` (unused entries are `nan`).
    """

    gtol: float
    norm: Callable[[PyTree], Scalar]
    descent: LimitedMemoryDescent
    search: StrongWolfe
    trace_length: int = eqx.field(static=True)
    verbose: frozenset[str] = eqx.field(static=True)

    def __init__(
        self,
        gtol: float,
        history_length: int = 10,
        search: StrongWolfe = StrongWolfe(),
        norm: Callable[[PyTree], Scalar] = two_norm,
        trace_length: int = 501,
        verbose: frozenset[str] = frozenset(),
    ):
        if gtol <= 0:
            raise ValueError("`gtol` must be strictly positive.")
        unknown = set(verbose) - set(_LABELS)
        if unknown:
            raise ValueError(f"Unknown `verbose` entries {sorted(unknown)}.")
        self.gtol = gtol
        self.norm = norm
        self.descent = LimitedMemoryDescent(history_length)
        self.search = search
        self.trace_length = trace_length
        self.verbose = frozenset(verbose)

    def init(
        self,
        fn: Objective,
        y: Y,
        args: PyTree,
        f_struct: jax.ShapeDtypeStruct,
        aux_struct: PyTree[jax.ShapeDtypeStruct],
    ) -> _LBFGSState:
        del fn, args
        return _LBFGSState(
            first_step=jnp.array(True),
            y_eval=y,
            search_state=self.search.init(y),
            current=Evaluation(tree_full_like(f_struct, 0), tree_full_like(y, 0)),
            aux=tree_full_like(aux_struct, 0),
            descent_state=self.descent.init(y),
            terminate=jnp.array(False),
            result=RESULTS.successful,
            num_accepted_steps=jnp.array(0),
            energy_trace=jnp.full(self.trace_length, jnp.nan, f_struct.dtype),
        )

    def _report(self, accept, values):
        shown = {_LABELS[k]: v for k, v in values.items() if k in self.verbose}
        if shown:
            lax.cond(accept, lambda: debug_print(shown), lambda: None)

    def step(
        self, fn: Objective, y: Y, args: PyTree, state: _LBFGSState
    ) -> tuple[Y, _LBFGSState, Aux]:
        (f_eval, aux_eval), grad_eval = jax.value_and_grad(fn, has_aux=True)(
            state.y_eval, args
        )
        trial = Evaluation(f_eval, grad_eval)
        step_size, accept, search_result, search_state = self.search.step(
            state.first_step,
            y,
            state.y_eval,
            state.current,
            trial,
            state.search_state,
        )
        grad_norm = self.norm(grad_eval)
        self._report(
            accept,
            {
                "step": state.num_accepted_steps,
                "energy": f_eval,
                "grad_norm": grad_norm,
            },
        )
        queried = self.descent.query(state.y_eval, trial, state.descent_state)
        y, current, aux, descent_state = tree_where(
            accept,
            (state.y_eval, trial, aux_eval, queried),
            (y, state.current, state.aux, state.descent_state),
        )
        y_descent, descent_result = self.descent.step(step_size, descent_state)
        result = RESULTS.where(
            search_result == RESULTS.successful, descent_result, search_result
        )
        energy_trace = jnp.where(
            accept,
            state.energy_trace.at[state.num_accepted_steps].set(f_eval, mode="drop"),
            state.energy_trace,
        )
        converged = accept & (grad_norm <= self.gtol)
        state = _LBFGSState(
            first_step=jnp.array(False),
            y_eval=(y**ω + y_descent**ω).ω,
            search_state=search_state,
            current=current,
            aux=aux,
            descent_state=descent_state,
            terminate=converged | (result != RESULTS.successful),
            result=result,
            num_accepted_steps=state.num_accepted_steps + accept,
            energy_trace=energy_trace,
        )
        return y, state, aux

    def terminate(self, state: _LBFGSState) -> tuple[Bool[Array, ""], RESULTS]:
        return state.terminate, state.result

    def postprocess(
        self, y: Y, aux: Aux, state: _LBFGSState, result: RESULTS
    ) -> tuple[Y, Aux, dict[str, Any]]:
        del result
        return y, aux, {"num_accepted_steps": state.num_accepted_steps}


LBFGS.__init__.__doc__ = """**Arguments:**

- `gtol`: Terminate once the norm of the gradient at an accepted iterate is at most
    this value. Must be positive.
- `history_length`: The number of curvature pairs kept for the inverse-Hessian
    approximation.
- `search`: The line search. Defaults to [`amvuq.StrongWolfe`][] with constants
    `(1e-4, 0.9)`.
- `norm`: The norm of the gradient used in the termination criterion.
- `trace_length`: The number of accepted energies recorded in `state.energy_trace`.
    Later energies are dropped.
- `verbose`: Which quantities to print on every accepted step, any subset of
    `{"step", "energy", "grad_norm"}`.
"""
