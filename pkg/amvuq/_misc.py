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

from typing import Any

import jax
import jax.numpy as jnp
import jax.tree_util as jtu
from jaxtyping import ArrayLike, Bool, PyTree
from lineax.internal import (
    max_norm as max_norm,
    tree_dot as tree_dot,
    two_norm as two_norm,
)


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def tree_full_like(struct: PyTree, fill_value: ArrayLike) -> PyTree:
    """Like `jnp.full_like`, over a pytree whose leaves are arrays or
    `jax.ShapeDtypeStruct`s.
    """
    return jtu.tree_map(lambda x: jnp.full(x.shape, fill_value, x.dtype), struct)


def tree_where(
    pred: Bool[ArrayLike, ""], true: PyTree[ArrayLike], false: PyTree[ArrayLike]
) -> PyTree:
    return jtu.tree_map(lambda a, b: jnp.where(pred, a, b), true, false)


def debug_print(fields: dict[str, Any]) -> None:
    """Prints `name: value` pairs from inside traced code. Nothing if empty."""
    if fields:
        template = ", ".join(f"{name}: {{}}" for name in fields)
        jax.debug.print(template, *fields.values())
