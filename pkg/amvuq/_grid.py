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

"""Pixel grids, the joint state variable, masked observations and residuals.

Pixels are ordered row-major with 0-based flat indices. The flat state vector of
length `(2 + k) * m` holds the horizontal displacement block, then the vertical
displacement block, then one block per image channel.
"""

import equinox as eqx
import jax.numpy as jnp
from jaxtyping import Array, Bool, Float

from ._misc import is_power_of_two


class PixelGrid(eqx.Module):
    """A periodic rectangular grid of `rows x cols` pixels. Both sizes must be powers
    of two.
    """

    rows: int = eqx.field(static=True)
    cols: int = eqx.field(static=True)

    def __check_init__(self):
        if not (is_power_of_two(self.rows) and is_power_of_two(self.cols)):
            raise ValueError(
                f"Grid sizes must be powers of two, got {self.rows}x{self.cols}."
            )

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def size(self) -> int:
        return self.rows * self.cols

    def position(self, index: int) -> tuple[int, int]:
        """The `(row, col)` of the pixel with flat index `index`."""
        if not 0 <= index < self.size:
            raise ValueError(f"Pixel index {index} out of range for {self.size}.")
        return divmod(index, self.cols)

    def flat_index(self, row: int, col: int) -> int:
        return (row % self.rows) * self.cols + (col % self.cols)


def _grid_of(values) -> PixelGrid:
    return PixelGrid(values.shape[-2], values.shape[-1])


class ImageStack(eqx.Module):
    """A stack of `k` images (channels) on a pixel grid."""

    values: Float[Array, "k rows cols"]

    @property
    def grid(self) -> PixelGrid:
        return _grid_of(self.values)

    @property
    def channels(self) -> int:
        return self.values.shape[0]


class DisplacementField(eqx.Module):
    """A per-pixel displacement in pixels. `values[0]` is the horizontal (column)
    component and `values[1]` the vertical (row) component.
    """

    values: Float[Array, "2 rows cols"]

    @property
    def grid(self) -> PixelGrid:
        return _grid_of(self.values)


class StateVector(eqx.Module):
    """The joint unknown `(d, x_t1)` as a single flat vector."""

    values: Float[Array, " n"]
    rows: int = eqx.field(static=True)
    cols: int = eqx.field(static=True)
    channels: int = eqx.field(static=True)

    def __check_init__(self):
        expected = (2 + self.channels) * self.rows * self.cols
        if self.values.shape != (expected,):
            raise ValueError(
                f"State vector of shape {self.values.shape} does not match a "
                f"{self.rows}x{self.cols} grid with {self.channels} channels."
            )

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.rows, self.cols)

    @property
    def blocks(self) -> Float[Array, "c rows cols"]:
        return self.values.reshape(2 + self.channels, self.rows, self.cols)

    @property
    def displacement(self) -> DisplacementField:
        return DisplacementField(self.blocks[:2])

    @property
    def image(self) -> ImageStack:
        return ImageStack(self.blocks[2:])

    def with_values(self, values: Float[Array, " n"]) -> "StateVector":
        return StateVector(values, self.rows, self.cols, self.channels)

    @classmethod
    def from_blocks(cls, blocks: Float[Array, "c rows cols"]) -> "StateVector":
        c, rows, cols = blocks.shape
        return cls(blocks.reshape(-1), rows, cols, c - 2)


def pack_state(d: DisplacementField, x: ImageStack) -> StateVector:
    """Lay out `(d, x)` as a flat state vector: `d_1`, `d_2`, then each channel of
    `x`, every block row-major.
    """
    if d.values.shape[1:] != x.values.shape[1:]:
        raise ValueError(
            f"Displacement grid {d.values.shape[1:]} does not match image grid "
            f"{x.values.shape[1:]}."
        )
    return StateVector.from_blocks(jnp.concatenate([d.values, x.values]))


def unpack_state(theta: StateVector) -> tuple[DisplacementField, ImageStack]:
    return theta.displacement, theta.image


class ObservationMask(eqx.Module):
    """Which pixels are observed at each of the two times. `observed[0]` is the mask
    at `t0` and `observed[1]` the mask at `t1`.
    """

    observed: Bool[Array, "2 rows cols"]

    @property
    def grid(self) -> PixelGrid:
        return _grid_of(self.observed)

    @property
    def t0(self) -> Bool[Array, "rows cols"]:
        return self.observed[0]

    @property
    def t1(self) -> Bool[Array, "rows cols"]:
        return self.observed[1]

    @property
    def joint(self) -> Bool[Array, "rows cols"]:
        """Pixels observed at both times."""
        return self.observed[0] & self.observed[1]

    @classmethod
    def full(cls, grid: PixelGrid) -> "ObservationMask":
        return cls(jnp.ones((2,) + grid.shape, dtype=bool))

    @classmethod
    def empty(cls, grid: PixelGrid) -> "ObservationMask":
        return cls(jnp.zeros((2,) + grid.shape, dtype=bool))


class ObservationSet(eqx.Module):
    """Partial image observations at `t0` and `t1`. Values at unobserved pixels are
    never read.
    """

    y_t0: ImageStack
    y_t1: ImageStack
    mask: ObservationMask

    def __check_init__(self):
        shape = self.y_t0.values.shape
        if self.y_t1.values.shape != shape:
            raise ValueError(
                f"Observations at t0 {shape} and t1 {self.y_t1.values.shape} differ."
            )
        if self.mask.observed.shape[1:] != shape[1:]:
            raise ValueError(
                f"Mask grid {self.mask.observed.shape[1:]} does not match the "
                f"observation grid {shape[1:]}."
            )

    @property
    def grid(self) -> PixelGrid:
        return self.y_t0.grid

    @property
    def channels(self) -> int:
        return self.y_t0.channels


class ResidualVector(eqx.Module):
    """Masked misfits `x_t - y_t` at both times, zero at unobserved pixels."""

    t0: Float[Array, "k rows cols"]
    t1: Float[Array, "k rows cols"]

    def sum_squares(self) -> Float[Array, ""]:
        return jnp.sum(self.t0**2) + jnp.sum(self.t1**2)


def residual(
    theta: StateVector, y: ObservationSet, warped_x_t0: ImageStack
) -> ResidualVector:
    """The residual of the state against the observations, with the image at `t0`
    given by `warped_x_t0 = W(x_t1, d)`.
    """
    shape = y.y_t0.values.shape
    if theta.image.values.shape != shape or warped_x_t0.values.shape != shape:
        raise ValueError(
            f"State image {theta.image.values.shape} and warped image "
            f"{warped_x_t0.values.shape} must match the observations {shape}."
        )
    # Unobserved entries may hold NaN.
    t0 = jnp.where(y.mask.t0, warped_x_t0.values - y.y_t0.values, 0.0)
    t1 = jnp.where(y.mask.t1, theta.image.values - y.y_t1.values, 0.0)
    return ResidualVector(t0, t1)
