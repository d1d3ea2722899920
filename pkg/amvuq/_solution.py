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

from typing import Any, Generic, TypeVar

import equinox as eqx
import lineax as lx
from jaxtyping import ArrayLike, PyTree


Y = TypeVar("Y")
Aux = TypeVar("Aux")


class RESULTS(lx.RESULTS):  # pyright: ignore
    successful = ""
    nonlinear_max_steps_reached = (
        "The maximum number of steps was reached in the minimiser. Increase "
        "`max_steps`, or loosen the gradient tolerance."
    )
    nonlinear_divergence = "The minimiser diverged."
    search_failed = (
        "The line search could not find a step satisfying the strong Wolfe "
        "conditions. The last accepted iterate has been returned."
    )
    nonfinite_energy = "The energy at the initial state of the chain is not finite."
    asymmetric_hessian = (
        "The assembled Hessian is not symmetric to within the requested tolerance."
    )


class Solution(eqx.Module, Generic[Y, Aux]):
    """What [`amvuq.minimise`][] hands back.

    `value` is the last accepted iterate and `aux` whatever the objective returned
    alongside its energy there (`None` for plain objectives). `result` is an
    [`amvuq.RESULTS`][]; `RESULTS[result]` gives the message. `stats` always holds
    `num_steps` and `max_steps`, plus anything the minimiser adds. `state` is the
    minimiser's own final state, e.g. the energy trace of [`amvuq.LBFGS`][].
    """

    value: Y
    result: RESULTS
    aux: Aux
    stats: dict[str, PyTree[ArrayLike]]
    state: Any
