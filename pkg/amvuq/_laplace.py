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

"""The Laplace approximation `N(theta_hat, H^{-1})` of the posterior, with `H` the
Hessian of the energy at the estimate.

The data part of the Hessian is stored as a periodic stencil: entry
`[a, b, r, c, i, j]` couples channel `a` of pixel `(r, c)` with channel `b` of pixel
`(r + row_offsets[i], c + col_offsets[j])`, indices taken modulo the grid. Couplings
outside the offset window are dropped.

The prior part is stationary, so it is kept exactly as one periodic kernel per
channel and applied by FFT. Truncating the fBm precision to a band breaks its
positive definiteness.
"""

import math
from typing import NamedTuple, Optional

import equinox as eqx
import jax
import jax.lax as lax
import jax.numpy as jnp
import lineax as lx
import numpy as np
from jaxtyping import Array, Bool, Float, Int, Scalar

from ._evaluate import ExpectedErrorMap
from ._fbm import fbm_kernel
from ._grid import ObservationSet, StateVector
from ._posterior import GibbsPosterior, ModelParams
from ._solution import RESULTS


def _window(radius: int, n: int) -> tuple[int, ...]:
    """Offsets `-radius..radius`, or every residue modulo `n` if that covers it."""
    if radius < 0:
        raise ValueError(f"The radius must be nonnegative, got {radius}.")
    if 2 * radius + 1 >= n:
        return tuple(range(n))
    return tuple(range(-radius, radius + 1))


def _lookup(offsets: tuple[int, ...], n: int) -> np.ndarray:
    """Position of every residue modulo `n` in `offsets`, or -1."""
    table = np.full(n, -1, dtype=np.int64)
    for i, offset in enumerate(offsets):
        table[offset % n] = i
    return table


def _shift_indices(offsets: tuple[int, ...], n: int, period: int) -> np.ndarray:
    """`(p + offset) mod period` for every position `p` and offset, shape `(n, w)`."""
    return (np.arange(n)[:, None] + np.asarray(offsets)[None, :]) % period


class SparseHessian(eqx.Module):
    """A symmetric matrix over flat state vectors with periodic banded structure.

    **Attributes:**

    - `stencil`: The stored couplings, see the module description.
    - `row_offsets`, `col_offsets`: The offset window along each axis.
    - `asymmetry`: The relative asymmetry of the assembled matrix before it was
        symmetrised.
    - `prior_kernel`: Optional channel-diagonal periodic couplings, added to the
        stencil. Entry `[a, i, j]` couples channel `a` of pixels offset by `(i, j)`.
        Must be even in `(i, j)`.
    """

    stencil: Float[Array, "c c rows cols wr wc"]
    row_offsets: tuple[int, ...] = eqx.field(static=True)
    col_offsets: tuple[int, ...] = eqx.field(static=True)
    asymmetry: Scalar = eqx.field(default_factory=lambda: jnp.array(0.0))
    prior_kernel: Optional[Float[Array, "c rows cols"]] = None

    def __check_init__(self):
        shape = self.stencil.shape
        if shape[4:] != (len(self.row_offsets), len(self.col_offsets)):
            raise ValueError(
                f"Stencil of shape {shape} does not match {len(self.row_offsets)}x"
                f"{len(self.col_offsets)} offsets."
            )
        if self.prior_kernel is not None and self.prior_kernel.shape != (
            shape[0],
            shape[2],
            shape[3],
        ):
            raise ValueError(
                f"Prior kernel of shape {self.prior_kernel.shape} does not match "
                f"stencil of shape {shape}."
            )

    @property
    def channels(self) -> int:
        return self.stencil.shape[0] - 2

    @property
    def rows(self) -> int:
        return self.stencil.shape[2]

    @property
    def cols(self) -> int:
        return self.stencil.shape[3]

    @property
    def size(self) -> int:
        return self.stencil.shape[0] * self.rows * self.cols

    def mv(self, v: Float[Array, " n"]) -> Float[Array, " n"]:
        blocks = v.reshape(self.stencil.shape[:1] + (self.rows, self.cols))
        row_idx = _shift_indices(self.row_offsets, self.rows, self.rows).T
        col_idx = _shift_indices(self.col_offsets, self.cols, self.cols).T
        shifted = blocks[:, row_idx[:, None, :, None], col_idx[None, :, None, :]]
        out = jnp.einsum("abrcij,bijrc->arc", self.stencil, shifted)
        if self.prior_kernel is not None:
            spectrum = jnp.fft.fft2(self.prior_kernel) * jnp.fft.fft2(blocks)
            out = out + jnp.fft.ifft2(spectrum).real
        return out.reshape(-1)

    def transpose(self) -> "SparseHessian":
        row_neg = _lookup(self.row_offsets, self.rows)[
            (-np.asarray(self.row_offsets)) % self.rows
        ]
        col_neg = _lookup(self.col_offsets, self.cols)[
            (-np.asarray(self.col_offsets)) % self.cols
        ]
        row_idx = _shift_indices(self.row_offsets, self.rows, self.rows)
        col_idx = _shift_indices(self.col_offsets, self.cols, self.cols)
        swapped = jnp.swapaxes(self.stencil, 0, 1)
        stencil = swapped[
            :,
            :,
            row_idx[:, None, :, None],
            col_idx[None, :, None, :],
            row_neg[None, None, :, None],
            col_neg[None, None, None, :],
        ]
        return SparseHessian(
            stencil,
            self.row_offsets,
            self.col_offsets,
            self.asymmetry,
            self.prior_kernel,
        )

    def as_matrix(self) -> Float[Array, "n n"]:
        eye = jnp.eye(self.size, dtype=self.stencil.dtype)
        return jax.vmap(self.mv, out_axes=1)(eye)

    def as_operator(self) -> lx.FunctionLinearOperator:
        struct = jax.ShapeDtypeStruct((self.size,), self.stencil.dtype)
        return lx.FunctionLinearOperator(self.mv, struct, tags=lx.symmetric_tag)


def _prior_kernels(params, channels, rows, cols):
    fbm = 2 * params.alpha * fbm_kernel(rows, cols, params.hurst + 1)
    delta = jnp.zeros((rows, cols), fbm.dtype).at[0, 0].set(2 * params.gamma)
    return jnp.stack([fbm, fbm] + [delta] * channels)


def _data_stencil(posterior, values, row_offsets, col_offsets):
    """The Jacobian of the data-term gradient, applied to periodic colourings."""
    c = 2 + posterior.channels
    rows, cols = posterior.rows, posterior.cols
    period_r = min(1 << (len(row_offsets) - 1).bit_length(), rows)
    period_c = min(1 << (len(col_offsets) - 1).bit_length(), cols)
    colourings = np.zeros((c, period_r, period_c, c, rows, cols))
    for b in range(c):
        for u in range(period_r):
            for v in range(period_c):
                colourings[b, u, v, b, u::period_r, v::period_c] = 1.0
    colourings = colourings.reshape(c * period_r * period_c, -1)
    colourings = jnp.asarray(colourings, values.dtype)
    _, jvp_fn = jax.linearize(posterior.likelihood_gradient, values)
    responses = lax.map(jvp_fn, colourings).reshape(
        c, period_r, period_c, c, rows, cols
    )
    responses = jnp.moveaxis(responses, 3, 1)
    colour_r = _shift_indices(row_offsets, rows, period_r)
    colour_c = _shift_indices(col_offsets, cols, period_c)
    r_idx = np.arange(rows)[:, None, None, None]
    c_idx = np.arange(cols)[None, :, None, None]
    gathered = responses[
        :,
        :,
        colour_r[:, None, :, None],
        colour_c[None, :, None, :],
        r_idx,
        c_idx,
    ]
    return jnp.swapaxes(gathered, 0, 1)


def assemble_hessian(
    theta: StateVector,
    y: ObservationSet,
    params: ModelParams,
    band_radius: int = 4,
    *,
    symmetry_tol: float = 1e-2,
    throw: bool = True,
) -> SparseHessian:
    """The Hessian of the (untempered) energy at `theta`.

    The prior part is kept exactly: `2 alpha` times the periodic fBm precision on
    each displacement component and `2 gamma` on the image diagonal. The data part
    is the Jacobian of the analytic data gradient, applied to one periodic colouring
    per channel and truncated to the band. The result is symmetrised.

    **Arguments:**

    - `theta`: Where to take the Hessian, typically the MAP estimate.
    - `y`: The observations.
    - `params`: Posterior hyper-parameters. The temperature is ignored.
    - `band_radius`: The stencil keeps data couplings up to this many pixels apart
        along each axis. A radius covering the grid keeps every coupling.
    - `symmetry_tol`: Largest relative asymmetry accepted before symmetrisation.
    - `throw`: Whether to raise if the asymmetry exceeds `symmetry_tol`. If `False`,
        check the returned `asymmetry`.
    """
    rows, cols = theta.rows, theta.cols
    row_offsets = _window(band_radius, rows)
    col_offsets = _window(band_radius, cols)
    posterior = GibbsPosterior(y, params.at_temperature(1.0))
    kernels = _prior_kernels(params, theta.channels, rows, cols)
    stencil = _data_stencil(posterior, theta.values, row_offsets, col_offsets)
    hessian = SparseHessian(stencil, row_offsets, col_offsets)
    transposed = hessian.transpose().stencil
    scale = jnp.maximum(jnp.max(jnp.abs(stencil)), jnp.max(jnp.abs(kernels)))
    scale = jnp.maximum(scale, jnp.finfo(stencil.dtype).tiny)
    asymmetry = jnp.max(jnp.abs(stencil - transposed)) / scale
    if throw:
        result = RESULTS.where(
            asymmetry > symmetry_tol,
            RESULTS.asymmetric_hessian,
            RESULTS.successful,
        )
        asymmetry = result.error_if(asymmetry, result != RESULTS.successful)
    return SparseHessian(
        0.5 * (stencil + transposed), row_offsets, col_offsets, asymmetry, kernels
    )


class _LocalPlan(NamedTuple):
    row_window: np.ndarray
    col_window: np.ndarray
    row_index: np.ndarray
    col_index: np.ndarray
    valid: np.ndarray
    centre: int


def _local_plan(hessian: SparseHessian, radius: int) -> _LocalPlan:
    row_window = np.asarray(_window(radius, hessian.rows))
    col_window = np.asarray(_window(radius, hessian.cols))
    row_lookup = _lookup(hessian.row_offsets, hessian.rows)
    col_lookup = _lookup(hessian.col_offsets, hessian.cols)
    row_pairs = row_lookup[(row_window[None, :] - row_window[:, None]) % hessian.rows]
    col_pairs = col_lookup[(col_window[None, :] - col_window[:, None]) % hessian.cols]
    valid = (row_pairs[:, None, :, None] >= 0) & (col_pairs[None, :, None, :] >= 0)
    centre_r = int(np.flatnonzero(row_window == 0)[0])
    centre_c = int(np.flatnonzero(col_window == 0)[0])
    return _LocalPlan(
        row_window=row_window,
        col_window=col_window,
        row_index=np.maximum(row_pairs, 0),
        col_index=np.maximum(col_pairs, 0),
        valid=valid,
        centre=centre_r * len(col_window) + centre_c,
    )


def _restrict(hessian: SparseHessian, row, col, plan: _LocalPlan):
    nr, nc = len(plan.row_window), len(plan.col_window)
    rows_k = (row + plan.row_window) % hessian.rows
    cols_k = (col + plan.col_window) % hessian.cols
    local = hessian.stencil[:, :, rows_k[:, None], cols_k[None, :]]
    kr = np.arange(nr)[:, None, None, None]
    kc = np.arange(nc)[None, :, None, None]
    lr = np.arange(nr)[None, None, :, None]
    lc = np.arange(nc)[None, None, None, :]
    values = local[:, :, kr, kc, plan.row_index[kr, lr], plan.col_index[kc, lc]]
    values = jnp.where(plan.valid, values, 0.0)
    c = hessian.stencil.shape[0]
    if hessian.prior_kernel is not None:
        dr = (plan.row_window[None, :] - plan.row_window[:, None]) % hessian.rows
        dc = (plan.col_window[None, :] - plan.col_window[:, None]) % hessian.cols
        pair = hessian.prior_kernel[:, dr[:, None, :, None], dc[None, :, None, :]]
        eye = jnp.eye(c, dtype=values.dtype)[:, :, None, None, None, None]
        values = values + eye * pair[:, None]
    size = c * nr * nc
    matrix = jnp.transpose(values, (0, 2, 3, 1, 4, 5)).reshape(size, size)
    return matrix, (rows_k, cols_k)


class LocalEvd(eqx.Module):
    """The eigendecomposition of the Hessian restricted to the neighbourhood of a
    pixel.

    **Attributes:**

    - `indices`: Flat state-vector indices of the neighbourhood, channel-major.
    - `eigenvalues`: In ascending order.
    - `eigenvectors`: Orthonormal, one per column.
    """

    indices: Int[Array, " local"]
    eigenvalues: Float[Array, " local"]
    eigenvectors: Float[Array, "local local"]

    @property
    def positive_definite(self) -> bool:
        return bool(self.eigenvalues[0] > 0)


def local_evd(hessian: SparseHessian, pixel: tuple[int, int], radius: int) -> LocalEvd:
    """Eigendecompose the Hessian restricted to every channel of the pixels within
    `radius` of `pixel` along each axis (periodically).
    """
    row, col = pixel
    if not (0 <= row < hessian.rows and 0 <= col < hessian.cols):
        raise ValueError(f"Pixel {pixel} lies outside the grid.")
    plan = _local_plan(hessian, radius)
    matrix, (rows_k, cols_k) = _restrict(hessian, row, col, plan)
    eigenvalues, eigenvectors = jnp.linalg.eigh(matrix)
    m = hessian.rows * hessian.cols
    channel = np.arange(hessian.stencil.shape[0])[:, None, None]
    indices = channel * m + rows_k[None, :, None] * hessian.cols + cols_k[None, None, :]
    return LocalEvd(jnp.asarray(indices.reshape(-1)), eigenvalues, eigenvectors)


def _observable_rows(hessian: SparseHessian, plan, kind, channel) -> np.ndarray:
    block = len(plan.row_window) * len(plan.col_window)
    if kind == "displacement":
        channels = [[0, 1]]
    elif channel is None:
        channels = [[2 + k] for k in range(hessian.channels)]
    else:
        if not 0 <= channel < hessian.channels:
            raise ValueError(f"Channel {channel} out of range.")
        channels = [[2 + channel]]
    return np.asarray(channels) * block + plan.centre


def laplace_error_map(
    hessian: SparseHessian,
    kind: str = "displacement",
    radius: int = 4,
    channel: Optional[int] = 0,
    domain: Optional[Bool[Array, "rows cols"]] = None,
) -> ExpectedErrorMap:
    """Bound the expected error `E ||psi(theta) - psi(theta_hat)||` of the per-pixel
    observables under the Laplace approximation.

    At every pixel the Hessian is restricted to a neighbourhood of `radius` pixels and
    eigendecomposed, `H = V diag(lambda) V^T`, giving

        F = sqrt(2 / pi) sum_j ||diag(lambda)^{-1/2} V^T e_j||

    over the `ell` coordinate directions `e_j` of the observable, with
    `F / sqrt(ell) <= E <= F` for a Gaussian posterior (equality for `ell = 1`).

    **Arguments:**

    - `hessian`: A [`amvuq.SparseHessian`][].
    - `kind`: `"displacement"` (`ell = 2`) or `"image"` (`ell = 1`).
    - `radius`: Neighbourhood radius.
    - `channel`: For images, the channel; `None` maps every channel.
    - `domain`: Pixels to map. Others are `nan`. Defaults to the whole grid.

    **Returns:**

    An [`amvuq.ExpectedErrorMap`][] holding `F` and `F / sqrt(ell)`. Pixels whose
    restricted Hessian is not positive definite are `nan` and flagged `indefinite`.
    """
    if kind not in ("displacement", "image"):
        raise ValueError(f"Unknown observable kind {kind!r}.")
    rows, cols = hessian.rows, hessian.cols
    if domain is None:
        pixels = np.arange(rows * cols)
    else:
        pixels = np.flatnonzero(np.asarray(domain).reshape(-1))
    plan = _local_plan(hessian, radius)
    observables = _observable_rows(hessian, plan, kind, channel)

    def bound(pixel):
        matrix, _ = _restrict(hessian, pixel // cols, pixel % cols, plan)
        eigenvalues, eigenvectors = jnp.linalg.eigh(matrix)
        indefinite = eigenvalues[0] <= 0
        safe = jnp.where(eigenvalues > 0, eigenvalues, 1.0)
        components = eigenvectors[observables]
        norms = jnp.sqrt(jnp.sum(components**2 / safe, axis=-1))
        upper = math.sqrt(2 / math.pi) * jnp.sum(norms, axis=-1)
        return jnp.where(indefinite, jnp.nan, upper), jnp.broadcast_to(
            indefinite, upper.shape
        )

    upper, indefinite = lax.map(bound, jnp.asarray(pixels))
    num_maps = observables.shape[0]
    values = jnp.full((num_maps, rows * cols), jnp.nan, upper.dtype)
    values = values.at[:, pixels].set(upper.T).reshape(num_maps, rows, cols)
    flags = jnp.zeros((num_maps, rows * cols), bool)
    flags = flags.at[:, pixels].set(indefinite.T).reshape(num_maps, rows, cols)
    if kind == "displacement" or channel is not None:
        values, flags = values[0], flags[0]
    ell = 2 if kind == "displacement" else 1
    return ExpectedErrorMap(
        values=values,
        lower=values / math.sqrt(ell),
        indefinite=flags,
        kind=kind,
        estimator="laplace",
    )


def screening_radius(
    hessian: SparseHessian,
    kind: str = "displacement",
    radii: tuple[int, ...] = (1, 2, 3, 4, 5, 6),
    rtol: float = 0.01,
    channel: Optional[int] = 0,
    domain: Optional[Bool[Array, "rows cols"]] = None,
) -> int:
    """The smallest neighbourhood radius beyond which enlarging the neighbourhood
    changes the bound `F` by less than `rtol` (relatively, at every mapped pixel).
    Returns the largest radius if no smaller one qualifies.
    """
    if len(radii) < 2 or list(radii) != sorted(set(radii)):
        raise ValueError("`radii` must hold at least two increasing radii.")
    maps = [
        laplace_error_map(hessian, kind, r, channel, domain).values for r in radii
    ]
    changes = []
    for small, large in zip(maps[:-1], maps[1:]):
        finite = jnp.isfinite(small) & jnp.isfinite(large) & (small > 0)
        safe = jnp.where(finite, small, 1.0)
        relative = jnp.where(finite, jnp.abs(large - small) / safe, 0.0)
        changes.append(float(jnp.max(relative)))
    for i, radius in enumerate(radii[:-1]):
        if all(change < rtol for change in changes[i:]):
            return radius
    return radii[-1]
