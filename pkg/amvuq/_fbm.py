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

"""Isotropic 2-D fractional Brownian motion on a periodic grid.

Every operator here is the Fourier multiplier `|omega|^(2 s)` for some exponent `s`,
with `omega_j = 2 pi k_j / N`, `k_j` in `[-N/2, N/2)`, and the zero frequency set to
zero. The fBm covariance of Hurst exponent `H` is `s = -(H + 1)` and its precision
`s = H + 1`. At `s = 0` the multiplier projects onto zero-mean fields.
"""

from typing import Optional

import equinox as eqx
import jax.numpy as jnp
import jax.random as jr
import numpy as np
from jaxtyping import Array, Float, PRNGKeyArray, ScalarLike

from ._grid import DisplacementField, PixelGrid
from ._wavelet import WaveletBasis


def frequency_grid(rows: int, cols: int) -> Float[Array, "rows cols"]:
    """`|omega|` for every Fourier mode of a `rows x cols` grid, in FFT order."""
    omega_r = 2 * np.pi * np.fft.fftfreq(rows)
    omega_c = 2 * np.pi * np.fft.fftfreq(cols)
    return jnp.asarray(np.hypot(omega_r[:, None], omega_c[None, :]))


def fractional_multiplier(
    rows: int, cols: int, s: ScalarLike
) -> Float[Array, "rows cols"]:
    norm = frequency_grid(rows, cols)
    nonzero = norm > 0
    safe_norm = jnp.where(nonzero, norm, 1.0)
    return jnp.where(nonzero, safe_norm ** (2 * s), 0.0)


def fractional_apply(
    field: Float[Array, "*batch rows cols"], s: ScalarLike
) -> Float[Array, "*batch rows cols"]:
    """Apply the fractional operator `|omega|^(2 s)` to the last two axes."""
    rows, cols = field.shape[-2:]
    multiplier = fractional_multiplier(rows, cols, s)
    spectrum = jnp.fft.fft2(field, axes=(-2, -1))
    return jnp.fft.ifft2(spectrum * multiplier, axes=(-2, -1)).real


def fbm_kernel(rows: int, cols: int, s: ScalarLike) -> Float[Array, "rows cols"]:
    """The periodic convolution kernel of `|omega|^(2 s)`: entry `[i, j]` is the
    coupling between pixels offset by `(i, j)` (modulo the grid).
    """
    return jnp.fft.ifft2(fractional_multiplier(rows, cols, s)).real


class FbmOperator(eqx.Module):
    """Covariance, precision and square-root applies of the fBm of Hurst exponent
    `hurst` on a `rows x cols` grid.
    """

    hurst: ScalarLike
    rows: int = eqx.field(static=True)
    cols: int = eqx.field(static=True)

    def __check_init__(self):
        PixelGrid(self.rows, self.cols)
        if isinstance(self.hurst, (int, float)) and self.hurst <= 0:
            raise ValueError("The Hurst exponent must be positive.")

    @property
    def multiplier(self) -> Float[Array, "rows cols"]:
        return fractional_multiplier(self.rows, self.cols, -(self.hurst + 1))

    def cov(self, field: Float[Array, "*batch rows cols"]):
        return fractional_apply(field, -(self.hurst + 1))

    def prec(self, field: Float[Array, "*batch rows cols"]):
        return fractional_apply(field, self.hurst + 1)

    def sqrt(self, field: Float[Array, "*batch rows cols"], sign: int = 1):
        """`sign=1` gives the covariance square root, `sign=-1` its inverse."""
        if sign not in (1, -1):
            raise ValueError("`sign` must be 1 or -1.")
        return fractional_apply(field, -sign * (self.hurst + 1) / 2)

    def sample(
        self, key: PRNGKeyArray, wavelet: Optional[WaveletBasis] = None
    ) -> Float[Array, "rows cols"]:
        """Draw white noise in the wavelet domain, map it to pixels and colour it with
        the covariance square root.
        """
        if wavelet is None:
            wavelet = WaveletBasis()
        coeffs = jr.normal(key, (self.rows, self.cols))
        return self.sqrt(wavelet.inverse(coeffs), sign=1)


def fbm_prec_apply(d: DisplacementField, hurst: ScalarLike) -> DisplacementField:
    return DisplacementField(fractional_apply(d.values, hurst + 1))


def fbm_cov_apply(d: DisplacementField, hurst: ScalarLike) -> DisplacementField:
    return DisplacementField(fractional_apply(d.values, -(hurst + 1)))


def fbm_sqrt_apply(
    field: Float[Array, "*batch rows cols"], hurst: ScalarLike, sign: int
) -> Float[Array, "*batch rows cols"]:
    rows, cols = field.shape[-2:]
    return FbmOperator(hurst, rows, cols).sqrt(field, sign)


def fbm_sample(
    key: PRNGKeyArray,
    hurst: ScalarLike,
    grid: PixelGrid,
    wavelet: Optional[WaveletBasis] = None,
) -> Float[Array, "rows cols"]:
    return FbmOperator(hurst, grid.rows, grid.cols).sample(key, wavelet)
