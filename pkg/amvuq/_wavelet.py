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

import functools as ft
import math
from typing import Optional

import equinox as eqx
import jax.numpy as jnp
import numpy as np
import pywt
from jaxtyping import Array, Float


@ft.lru_cache(maxsize=None)
def _analysis_matrix(family: str, n: int) -> np.ndarray:
    """One level of the periodized orthonormal wavelet transform on `n` samples: the
    first `n // 2` rows are the low-pass (approximation) filters, the rest high-pass.
    """
    low = np.asarray(pywt.Wavelet(family).rec_lo)
    length = len(low)
    high = np.array([(-1) ** k * low[length - 1 - k] for k in range(length)])
    half = n // 2
    matrix = np.zeros((n, n))
    for i in range(half):
        for k in range(length):
            matrix[i, (2 * i + k) % n] += low[k]
            matrix[half + i, (2 * i + k) % n] += high[k]
    return matrix


class WaveletBasis(eqx.Module):
    """A separable, periodized, orthonormal 2-D wavelet transform.

    Coefficients are stored in the usual pyramid layout: after each level the
    approximation occupies the top-left quarter of the current block.
    """

    family: str = eqx.field(static=True, default="coif5")
    level: Optional[int] = eqx.field(static=True, default=None)
    periodic: bool = eqx.field(static=True, default=True)

    def __check_init__(self):
        if not self.periodic:
            raise ValueError("Only periodic wavelet transforms are supported.")
        if self.family not in pywt.wavelist(kind="discrete"):
            raise ValueError(f"Unknown wavelet family {self.family!r}.")
        if not pywt.Wavelet(self.family).orthogonal:
            raise ValueError(f"Wavelet family {self.family!r} is not orthogonal.")
        if self.level is not None and self.level < 0:
            raise ValueError("`level` must be nonnegative.")

    def depth(self, rows: int, cols: int) -> int:
        """The number of decomposition levels used on a `rows x cols` grid. Defaults
        to `log2(min(rows, cols)) - 2`, clipped at zero.
        """
        max_depth = max(int(math.log2(min(rows, cols))) - 1, 0)
        if self.level is None:
            return max(int(math.log2(min(rows, cols))) - 2, 0)
        return min(self.level, max_depth)

    def _sizes(self, rows: int, cols: int) -> list[tuple[int, int]]:
        return [(rows >> j, cols >> j) for j in range(self.depth(rows, cols))]

    def forward(
        self, values: Float[Array, "*batch rows cols"]
    ) -> Float[Array, "*batch rows cols"]:
        rows, cols = values.shape[-2:]
        out = values
        for r, c in self._sizes(rows, cols):
            a_r = _analysis_matrix(self.family, r)
            a_c = _analysis_matrix(self.family, c)
            block = jnp.einsum("ij,...jk,lk->...il", a_r, out[..., :r, :c], a_c)
            out = out.at[..., :r, :c].set(block)
        return out

    def inverse(
        self, coeffs: Float[Array, "*batch rows cols"]
    ) -> Float[Array, "*batch rows cols"]:
        rows, cols = coeffs.shape[-2:]
        out = coeffs
        for r, c in reversed(self._sizes(rows, cols)):
            a_r = _analysis_matrix(self.family, r)
            a_c = _analysis_matrix(self.family, c)
            block = jnp.einsum("ji,...jk,kl->...il", a_r, out[..., :r, :c], a_c)
            out = out.at[..., :r, :c].set(block)
        return out


WaveletBasis.__init__.__doc__ = """**Arguments:**

- `family`: A PyWavelets name of an orthogonal wavelet. Defaults to `"coif5"`, the
    Coiflet with 10 vanishing moments.
- `level`: The number of decomposition levels. Defaults to
    `log2(min(rows, cols)) - 2`; larger values are clipped so that the coarsest block
    keeps at least two samples per axis.
- `periodic`: Must be `True`.
"""
