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
from typing import Any, Generic, Optional, TypeVar
from typing_extensions import TypeAlias

import equinox as eqx
import equinox.internal as eqxi
import jax
import jax.numpy as jnp
import jax.tree_util as jtu
from jaxtyping import Array, Bool, PyTree, Scalar

from ._misc import tree_full_like
from ._solution import Aux, RESULTS, Solution, Y


SolverState = TypeVar("SolverState")
Objective: TypeAlias = Callable[[Y, Any], tuple[Scalar, Aux]]


class AbstractMinimiser(eqx.Module, Generic[Y, Aux, SolverState]):
    """A minimiser is a state machine that [`amvuq.minimise`][] drives: `init` once,
    then `step` until `terminate` says stop (or `max_steps` run out), then
    `postprocess`.

    Every method receives the objective as `fn(y, args) -> (energy, aux)`.
    """

    @abc.abstractmethod
    def init(
        self,
        fn: Objective,
        y: Y,
        args: PyTree,
        f_struct: jax.ShapeDtypeStruct,
        aux_struct: PyTree[jax.ShapeDtypeStruct],
    ) -> SolverState:
        """The state before the first step. `f_struct` and `aux_struct` give the
        shapes and dtypes of the energy and of the auxiliary output.
        """

    @abc.abstractmethod
    def step(
        self, fn: Objective, y: Y, args: PyTree, state: SolverState
    ) -> tuple[Y, SolverState, Aux]:
        """Returns `(y, state, aux)`: the latest accepted iterate, the next state and
        the auxiliary output at that iterate.
        """

    @abc.abstractmethod
    def terminate(self, state: SolverState) -> tuple[Bool[Array, ""], RESULTS]:
        """Returns whether to stop, and why."""

    def postprocess(
        self, y: Y, aux: Aux, state: SolverState, result: RESULTS
    ) -> tuple[Y, Aux, dict[str, Any]]:
        """Final `(y, aux, extra_stats)`. By default returns `y` and `aux` unchanged."""
        del state, result
        return y, aux, {}


class _Objective(eqx.Module):
    fn: Callable
    has_aux: bool = eqx.field(static=True)

    def __call__(self, y, args):
        if self.has_aux:
            energy, aux = self.fn(y, args)
        else:
            energy, aux = self.fn(y, args), None
        return jnp.asarray(energy), jtu.tree_map(jnp.asarray, aux)


def _as_floating(x):
    return jnp.asarray(x, dtype=jnp.result_type(x, float))


def _drive(fn, solver, y0, args, max_steps, f_struct, aux_struct):
    state = solver.init(fn, y0, args, f_struct, aux_struct)
    dynamic, static = eqx.partition(state, eqx.is_array)

    def cond_fun(carry):
        _, _, dynamic, _ = carry
        done, _ = solver.terminate(eqx.combine(dynamic, static))
        return jnp.invert(done)

    def body_fun(carry):
        y, num_steps, dynamic, _ = carry
        y, state, aux = solver.step(fn, y, args, eqx.combine(dynamic, static))
        return y, num_steps + 1, eqx.filter(state, eqx.is_array), aux

    carry = (y0, jnp.array(0), dynamic, tree_full_like(aux_struct, 0))
    y, num_steps, dynamic, aux = eqxi.while_loop(
        cond_fun, body_fun, carry, max_steps=max_steps, kind="lax"
    )
    state = eqx.combine(dynamic, static)
    done, result = solver.terminate(state)
    out_of_steps = (result == RESULTS.successful) & jnp.invert(done)
    result = RESULTS.where(out_of_steps, RESULTS.nonlinear_max_steps_reached, result)
    return y, aux, state, result, num_steps


@eqx.filter_jit
def minimise(
    fn: Callable,
    # no type parameters, see https://github.com/microsoft/pyright/discussions/5599
    solver: AbstractMinimiser,
    y0: Y,
    args: PyTree[Any] = None,
    *,
    has_aux: bool = False,
    max_steps: Optional[int] = 500,
    throw: bool = True,
) -> Solution[Y, Any]:
    """Minimise a scalar energy `fn(y, args)`.

    **Arguments:**

    - `fn`: The energy. Called as `fn(y, args)`; returns a floating-point scalar, or a
        pair `(energy, aux)` if `has_aux=True`.
    - `solver`: The minimiser, e.g. [`amvuq.LBFGS`][].
    - `y0`: The starting point. Any pytree of arrays; integer leaves are cast to
        floating point.
    - `args`: Passed through to `fn`.
    - `has_aux`: Whether `fn` returns `(energy, aux)`. Keyword only argument.
    - `max_steps`: Cap on the number of minimiser steps (`None` for no cap). Keyword
        only argument.
    - `throw`: If `True`, an unsuccessful solve raises a runtime error. Otherwise the
        failure is only reported in `sol.result`. Keyword only argument.

    **Returns:**

    An [`amvuq.Solution`][].
    """
    y0 = jtu.tree_map(_as_floating, y0)
    objective = eqx.filter_closure_convert(_Objective(fn, has_aux), y0, args)
    f_struct, aux_struct = objective.out_struct
    if not (
        isinstance(f_struct, jax.ShapeDtypeStruct)
        and f_struct.shape == ()
        and jnp.issubdtype(f_struct.dtype, jnp.floating)
    ):
        raise ValueError(
            "minimisation function must output a single floating-point scalar."
        )

    y, aux, state, result, num_steps = _drive(
        objective, solver, y0, args, max_steps, f_struct, aux_struct
    )
    y, aux, extra = solver.postprocess(y, aux, state, result)
    stats = {"num_steps": num_steps, "max_steps": max_steps, **extra}
    sol = Solution(value=y, result=result, aux=aux, stats=stats, state=state)
    if throw:
        sol = result.error_if(sol, result != RESULTS.successful)
    return sol
