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

"""Periodic cubic B-spline interpolation and the warp `W(x, d) = I(d) C x`.

`C` is the prefilter taking an image to its spline coefficients and `I(d)` evaluates
a spline expansion at the displaced positions `s + d(s)`. Boundaries are periodic,
which makes `C` symmetric.
"""

import math

import equinox as eqx
import jax.lax as lax
import jax.numpy as jnp
import numpy as np
from jaxtyping import Array, Float, Int

from ._grid import DisplacementField, ImageStack, PixelGrid


_POLE = math.sqrt(3.0) - 2.0


class SplineCoeffs(eqx.Module):
    """Cubic B-spline coefficients of an image stack."""

    values: Float[Array, "k rows cols"]

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.values.shape[-2], self.values.shape[-1])


def _prefilter_line(signal: Array) -> Array:
    # Periodic causal/anticausal recursion with pole z = sqrt(3) - 2, along axis 0.
    n = signal.shape[0]
    z = _POLE
    powers = z ** np.arange(n)
    causal_init = jnp.tensordot(powers, signal[(-np.arange(n)) % n], axes=1)
    causal_init = causal_init / (1 - z**n)

    def causal(prev, s):
        out = s + z * prev
        return out, out

    _, causal_rest = lax.scan(causal, causal_init, signal[1:])
    causal_out = jnp.concatenate([causal_init[None], causal_rest])
    anti_init = jnp.tensordot(powers, causal_out[(n - 1 + np.arange(n)) % n], axes=1)
    anti_init = -z * anti_init / (1 - z**n)

    def anticausal(following, c):
        out = z * (following - c)
        return out, out

    _, anti_rest = lax.scan(anticausal, anti_init, causal_out[:-1], reverse=True)
    return 6 * jnp.concatenate([anti_rest, anti_init[None]])


def _along(fn, x: Array, axis: int) -> Array:
    return jnp.moveaxis(fn(jnp.moveaxis(x, axis, 0)), 0, axis)


def _prefilter(values: Float[Array, "... rows cols"]) -> Float[Array, "... rows cols"]:
    return _along(_prefilter_line, _along(_prefilter_line, values, -2), -1)


def bspline_analysis(x: ImageStack) -> SplineCoeffs:
    """Spline coefficients whose cubic B-spline expansion interpolates `x` at the grid
    points.
    """
    return SplineCoeffs(_prefilter(x.values))


def bspline_synthesis(c: SplineCoeffs) -> ImageStack:
    """Evaluate the spline expansion at the grid points."""

    def sample(v, axis):
        return (jnp.roll(v, 1, axis) + 4 * v + jnp.roll(v, -1, axis)) / 6

    return ImageStack(sample(sample(c.values, -2), -1))


def _weights(t: Array) -> Float[Array, "4 rows cols"]:
    # Cubic B-spline weights of the knots at offsets -1, 0, 1, 2 from floor(u).
    return jnp.stack(
        [
            (1 - t) ** 3 / 6,
            (3 * t**3 - 6 * t**2 + 4) / 6,
            (-3 * t**3 + 3 * t**2 + 3 * t + 1) / 6,
            t**3 / 6,
        ]
    )


def _weight_derivatives(t: Array) -> Float[Array, "4 rows cols"]:
    return jnp.stack(
        [
            -((1 - t) ** 2) / 2,
            (3 * t**2 - 4 * t) / 2,
            (-3 * t**2 + 2 * t + 1) / 2,
            t**2 / 2,
        ]
    )


class _Footprint(eqx.Module):
    rows: Int[Array, "4 4 rows cols"]
    cols: Int[Array, "4 4 rows cols"]
    frac_row: Float[Array, "rows cols"]
    frac_col: Float[Array, "rows cols"]


def _footprint(d: DisplacementField) -> _Footprint:
    """The 4x4 coefficient cell read by each warped point."""
    rows, cols = d.values.shape[1:]
    u = jnp.arange(cols)[None, :] + d.values[0]
    v = jnp.arange(rows)[:, None] + d.values[1]
    floor_u = jnp.floor(u)
    floor_v = jnp.floor(v)
    offsets = jnp.arange(-1, 3)[:, None, None]
    index_u = (floor_u.astype(jnp.int32)[None] + offsets) % cols
    index_v = (floor_v.astype(jnp.int32)[None] + offsets) % rows
    shape = (4, 4, rows, cols)
    return _Footprint(
        rows=jnp.broadcast_to(index_v[:, None], shape),
        cols=jnp.broadcast_to(index_u[None, :], shape),
        frac_row=v - floor_v,
        frac_col=u - floor_u,
    )


def _evaluate(c: SplineCoeffs, footprint: _Footprint, weights_v, weights_u) -> Array:
    gathered = c.values[:, footprint.rows, footprint.cols]
    return jnp.einsum("kabij,aij,bij->kij", gathered, weights_v, weights_u)


def warp(c: SplineCoeffs, d: DisplacementField) -> ImageStack:
    """Evaluate the spline expansion `c` at `s + d(s)` for every pixel `s`. Positions
    outside the grid wrap around periodically.
    """
    footprint = _footprint(d)
    return ImageStack(
        _evaluate(
            c, footprint, _weights(footprint.frac_row), _weights(footprint.frac_col)
        )
    )


def warp_image(x: ImageStack, d: DisplacementField) -> ImageStack:
    """The warp `W(x, d)` of an image (rather than of its spline coefficients)."""
    return warp(bspline_analysis(x), d)


def interpolate_adjoint(d: DisplacementField, z: ImageStack) -> SplineCoeffs:
    """The transpose of `c -> warp(c, d)` applied to `z`: every pixel scatters its
    value onto the 16 coefficients it was interpolated from.
    """
    footprint = _footprint(d)
    weights_v = _weights(footprint.frac_row)
    weights_u = _weights(footprint.frac_col)
    contribution = (
        z.values[:, None, None] * weights_v[None, :, None] * weights_u[None, None, :]
    )
    out = jnp.zeros_like(z.values)
    out = out.at[:, footprint.rows, footprint.cols].add(contribution)
    return SplineCoeffs(out)


def warp_adjoint_image(d: DisplacementField, z: ImageStack) -> ImageStack:
    """The transpose of `x -> W(x, d)` applied to `z`, i.e. `C I(d)^T z`."""
    return ImageStack(_prefilter(interpolate_adjoint(d, z).values))


def warp_spatial_derivs(
    c: SplineCoeffs, d: DisplacementField, step: float = 1e-3
) -> tuple[ImageStack, ImageStack]:
    """Central differences of the warp with respect to the horizontal and the
    vertical displacement component, with step `step` pixels.
    """

    def central(component):
        plus = warp(c, DisplacementField(d.values.at[component].add(step)))
        minus = warp(c, DisplacementField(d.values.at[component].add(-step)))
        return ImageStack((plus.values - minus.values) / (2 * step))

    return central(0), central(1)


def spline_gradient(
    c: SplineCoeffs, d: DisplacementField
) -> tuple[ImageStack, ImageStack]:
    """The exact horizontal and vertical derivatives of the spline expansion at the
    warped positions.
    """
    footprint = _footprint(d)
    weights_v = _weights(footprint.frac_row)
    weights_u = _weights(footprint.frac_col)
    dweights_v = _weight_derivatives(footprint.frac_row)
    dweights_u = _weight_derivatives(footprint.frac_col)
    horizontal = _evaluate(c, footprint, weights_v, dweights_u)
    vertical = _evaluate(c, footprint, dweights_v, weights_u)
    return ImageStack(horizontal), ImageStack(vertical)
