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

"""Building blocks of a line-search minimiser.

A descent owns the search direction: once an iterate is accepted it prepares a
direction, and afterwards maps any step size to an update. A search owns the step
size: it judges each trial point and proposes the next step size. [`amvuq.LBFGS`][]
pairs [`amvuq.LimitedMemoryDescent`][] with [`amvuq.StrongWolfe`][].
"""

import abc
from typing import Generic, TypeVar

import equinox as eqx
from jaxtyping import Array, Bool, Scalar

from ._solution import RESULTS, Y


DescentState = TypeVar("DescentState")
SearchState = TypeVar("SearchState")


class Evaluation(eqx.Module, Generic[Y]):
    """The energy `f` and its gradient `grad` at one point."""

    f: Scalar
    grad: Y


class AbstractDescent(eqx.Module, Generic[Y, DescentState]):
    @abc.abstractmethod
    def init(self, y: Y) -> DescentState:
        """Initial descent state for iterates shaped like `y`."""

    @abc.abstractmethod
    def query(self, y: Y, evaluation: Evaluation, state: DescentState) -> DescentState:
        """Called on every accepted iterate; fixes the next direction."""

    @abc.abstractmethod
    def step(self, step_size: Scalar, state: DescentState) -> tuple[Y, RESULTS]:
        """The update `y_next - y` for a step of length `step_size`."""


class AbstractSearch(eqx.Module, Generic[Y, SearchState]):
    @abc.abstractmethod
    def init(self, y: Y) -> SearchState:
        """Initial search state for iterates shaped like `y`."""

    @abc.abstractmethod
    def step(
        self,
        first_step: Bool[Array, ""],
        y: Y,
        y_eval: Y,
        current: Evaluation,
        trial: Evaluation,
        state: SearchState,
    ) -> tuple[Scalar, Bool[Array, ""], RESULTS, SearchState]:
        """Judges the trial point `y_eval` against the accepted point `y`.

        `current` and `trial` are the evaluations at `y` and `y_eval`. When
        `first_step` is set there is no accepted point yet and the trial must be
        accepted.

        Returns `(step_size, accept, result, state)`, where `step_size` is measured
        from whichever of `y` and `y_eval` is the accepted point afterwards.
        """
