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

"""Synthetic turbulence benchmarks: a displacement drawn from its fBm prior moves a
random texture, and both frames are observed through masks with holes.
"""

import dataclasses
import math
from collections.abc import Mapping
from typing import Optional

import equinox as eqx
import jax.numpy as jnp
import jax.random as jr
from jaxtyping import Array, Bool, PRNGKeyArray

from ._fbm import fbm_sample
from ._grid import (
    ImageStack,
    ObservationMask,
    ObservationSet,
    PixelGrid,
    StateVector,
)
from ._misc import is_power_of_two
from ._posterior import ModelParams
from ._spline import warp_image


MASK_KINDS = ("full", "blob")


class BenchmarkConfig(eqx.Module):
    """A synthetic benchmark and the settings of the pipeline run on it.

    **Attributes:**

    - `size`: Grid size (square, a power of two).
    - `channels`: Number of image channels.
    - `hurst_truth`: Hurst exponent of the true displacement.
    - `alpha`, `gamma`: Prior weights, as ratios to the noise precision.
    - `hurst_prior`: Hurst exponent of the displacement prior.
    - `mask`: `"full"` or `"blob"` (disks removed until `coverage` is reached).
    - `coverage`: Fraction of observed pixels at each time for blob masks.
    - `noise_std`: Standard deviation of the observation noise.
    - `seed`: Seed of the dataset and of the chains.
    - `zeta`: Temperature of the tempered chain.
    - `step_size`: Leapfrog step of the tempered chain.
    - `num_steps`, `num_leapfrog`: Length of the chains.
    - `hurst_precond`: Preconditioner Hurst exponent; defaults to `hurst_prior / 2`.
    - `band_radius`: Stencil radius of the Hessian.
    - `radius`: Neighbourhood radius of the Laplace error map.
    - `map_max_steps`: Iteration cap of the MAP estimate.
    - `tune`: Whether to tune the step sizes of the chains.
    """

    size: int = 32
    channels: int = 1
    hurst_truth: float = 1.0
    alpha: float = 2.0
    gamma: float = 0.1
    hurst_prior: float = 1.0
    mask: str = "blob"
    coverage: float = 0.7
    noise_std: float = 0.0
    seed: int = 0
    zeta: float = 1e-6
    step_size: float = 1e-4
    num_steps: int = 100
    num_leapfrog: int = 10
    hurst_precond: Optional[float] = None
    band_radius: int = 4
    radius: int = 4
    map_max_steps: int = 500
    tune: bool = False

    def __check_init__(self):
        if not is_power_of_two(self.size):
            raise ValueError(f"`size` must be a power of two, got {self.size}.")
        if self.channels < 1:
            raise ValueError("`channels` must be at least 1.")
        if self.mask not in MASK_KINDS:
            raise ValueError(f"Unknown mask {self.mask!r}; expected {MASK_KINDS}.")
        if not 0 < self.coverage <= 1:
            raise ValueError(f"`coverage` must lie in (0, 1], got {self.coverage}.")
        if self.noise_std < 0:
            raise ValueError("`noise_std` must be nonnegative.")
        if self.map_max_steps < 1:
            raise ValueError("`map_max_steps` must be at least 1.")
        for name in ("hurst_truth", "alpha", "gamma", "hurst_prior", "step_size"):
            if not getattr(self, name) > 0:
                raise ValueError(f"`{name}` must be strictly positive.")

    @property
    def grid(self) -> PixelGrid:
        return PixelGrid(self.size, self.size)

    @property
    def params(self) -> ModelParams:
        return ModelParams(alpha=self.alpha, gamma=self.gamma, hurst=self.hurst_prior)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, str]) -> "BenchmarkConfig":
        """Parse string values, as read from a configuration file."""
        fields = {field.name: field for field in dataclasses.fields(cls)}
        values = {}
        for key, text in mapping.items():
            if key not in fields:
                raise ValueError(f"Unknown configuration key {key!r}.")
            values[key] = _parse(key, text, _FIELD_TYPES[key])
        return cls(**values)

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for field in dataclasses.fields(self):
            value = getattr(self, field.name)
            if value is None:
                out[field.name] = "none"
            elif isinstance(value, bool):
                out[field.name] = "true" if value else "false"
            elif isinstance(value, float):
                out[field.name] = repr(value)
            else:
                out[field.name] = str(value)
        return out


_FIELD_TYPES = {
    "size": int,
    "channels": int,
    "hurst_truth": float,
    "alpha": float,
    "gamma": float,
    "hurst_prior": float,
    "mask": str,
    "coverage": float,
    "noise_std": float,
    "seed": int,
    "zeta": float,
    "step_size": float,
    "num_steps": int,
    "num_leapfrog": int,
    "hurst_precond": Optional[float],
    "band_radius": int,
    "radius": int,
    "map_max_steps": int,
    "tune": bool,
}


def _parse(key: str, text: str, kind):
    text = text.strip()
    try:
        if kind == Optional[float]:
            return None if text.lower() == "none" else float(text)
        if kind is bool:
            if text.lower() not in ("true", "false"):
                raise ValueError(text)
            return text.lower() == "true"
        return kind(text)
    except ValueError:
        raise ValueError(f"Invalid value {text!r} for configuration key {key!r}.")


def _blob_mask(
    key: PRNGKeyArray, grid: PixelGrid, coverage: float
) -> Bool[Array, "rows cols"]:
    """Remove random disks from a full mask until at most `coverage` of the pixels
    remain observed. Distances are periodic.
    """
    observed = jnp.ones(grid.shape, dtype=bool)
    if coverage >= 1:
        return observed
    rows = jnp.arange(grid.rows)[:, None]
    cols = jnp.arange(grid.cols)[None, :]
    target = math.floor(coverage * grid.size)
    min_radius = max(grid.rows, grid.cols) / 16
    max_radius = max(grid.rows, grid.cols) / 4
    index = 0
    while int(jnp.sum(observed)) > target:
        k_row, k_col, k_radius = jr.split(jr.fold_in(key, index), 3)
        centre_r = jr.uniform(k_row, maxval=grid.rows)
        centre_c = jr.uniform(k_col, maxval=grid.cols)
        radius = jr.uniform(k_radius, minval=min_radius, maxval=max_radius)
        dr = jnp.abs(rows - centre_r)
        dc = jnp.abs(cols - centre_c)
        dr = jnp.minimum(dr, grid.rows - dr)
        dc = jnp.minimum(dc, grid.cols - dc)
        observed = observed & (dr**2 + dc**2 > radius**2)
        index += 1
    return observed


def _texture(key: PRNGKeyArray, grid: PixelGrid, channels: int) -> ImageStack:
    keys = jr.split(key, channels)
    layers = []
    for channel_key in keys:
        layer = fbm_sample(channel_key, 1.0, grid)
        layer = (layer - jnp.mean(layer)) / jnp.std(layer)
        layers.append(layer)
    return ImageStack(jnp.stack(layers))


def generate_synthetic(
    config: BenchmarkConfig, key: Optional[PRNGKeyArray] = None
) -> tuple[StateVector, ObservationSet]:
    """Draw a synthetic benchmark.

    - The displacement is a draw of the prior, two independent fBm fields of Hurst
        exponent `hurst_truth` scaled by `1 / sqrt(2 alpha)`.
    - The image at `t1` is a normalised fBm texture of Hurst exponent 1, and the image
        at `t0` its warp by the displacement.
    - Masks are full, or blobs with independent holes at each time.
    - Observations are the images plus Gaussian noise at observed pixels, and zero
        elsewhere.

    **Arguments:**

    - `config`: A [`amvuq.BenchmarkConfig`][].
    - `key`: Defaults to `jax.random.PRNGKey(config.seed)`.

    **Returns:**

    The true state and the observations.
    """
    if key is None:
        key = jr.PRNGKey(config.seed)
    grid = config.grid
    k_d1, k_d2, k_texture, k_mask0, k_mask1, k_noise = jr.split(key, 6)
    scale = 1 / math.sqrt(2 * config.alpha)
    displacement = scale * jnp.stack(
        [
            fbm_sample(k_d1, config.hurst_truth, grid),
            fbm_sample(k_d2, config.hurst_truth, grid),
        ]
    )
    x_t1 = _texture(k_texture, grid, config.channels)
    theta = StateVector.from_blocks(jnp.concatenate([displacement, x_t1.values]))
    x_t0 = warp_image(x_t1, theta.displacement)
    if config.mask == "full":
        mask = ObservationMask.full(grid)
    else:
        mask = ObservationMask(
            jnp.stack(
                [
                    _blob_mask(k_mask0, grid, config.coverage),
                    _blob_mask(k_mask1, grid, config.coverage),
                ]
            )
        )
    noise = config.noise_std * jr.normal(k_noise, (2,) + x_t1.values.shape)
    y_t0 = jnp.where(mask.t0, x_t0.values + noise[0], 0.0)
    y_t1 = jnp.where(mask.t1, x_t1.values + noise[1], 0.0)
    return theta, ObservationSet(ImageStack(y_t0), ImageStack(y_t1), mask)
