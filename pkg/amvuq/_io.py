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

"""On-disk formats.

A field file holds a `channels x rows x cols` array: the 4-byte magic `AMVF`, a u16
format version, u32 rows, cols and channels, a u8 dtype tag (1 for float64, 2 for
uint8), then the little-endian payload in channel-major, row-major order.
"""

import csv
import json
import os
import struct
from collections.abc import Mapping, Sequence
from typing import Any, Union

import jax
import jax.numpy as jnp
import numpy as np

from ._bench import BenchmarkConfig
from ._evaluate import CRITERIA, EpeReport, ExpectedErrorMap
from ._grid import ImageStack, ObservationMask, ObservationSet, StateVector


PathLike = Union[str, os.PathLike]

MAGIC = b"AMVF"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIB")
_DTYPES = {1: np.dtype("<f8"), 2: np.dtype("u1")}
_TAGS = {np.dtype("<f8"): 1, np.dtype("u1"): 2}


class FieldFormatError(ValueError):
    """A field file is malformed."""


def write_field(path: PathLike, values: Any) -> None:
    """Write a 2-D or 3-D float64 or uint8 array as a field file. A 2-D array is
    stored with one channel.
    """
    values = np.asarray(values)
    if values.ndim == 2:
        values = values[None]
    if values.ndim != 3:
        raise ValueError(f"Expected a 2-D or 3-D array, got shape {values.shape}.")
    if values.dtype == np.bool_:
        values = values.astype(np.uint8)
    elif values.dtype != np.uint8:
        values = values.astype("<f8")
    channels, rows, cols = values.shape
    header = _HEADER.pack(MAGIC, VERSION, rows, cols, channels, _TAGS[values.dtype])
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(values).tobytes())


def read_field(path: PathLike) -> np.ndarray:
    """Read a field file as a `channels x rows x cols` array."""
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header.")
    magic, version, rows, cols, channels, tag = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}.")
    if version != VERSION:
        raise FieldFormatError(f"{path}: unsupported version {version}.")
    if tag not in _DTYPES:
        raise FieldFormatError(f"{path}: unknown dtype tag {tag}.")
    dtype = _DTYPES[tag]
    expected = rows * cols * channels * dtype.itemsize
    payload = data[_HEADER.size :]
    if len(payload) != expected:
        raise FieldFormatError(
            f"{path}: payload of {len(payload)} bytes, expected {expected}."
        )
    return np.frombuffer(payload, dtype=dtype).reshape(channels, rows, cols).copy()


def write_mask(path: PathLike, mask: ObservationMask) -> None:
    write_field(path, np.asarray(mask.observed, dtype=np.uint8))


def read_mask(path: PathLike) -> ObservationMask:
    values = read_field(path)
    if values.dtype != np.uint8 or values.shape[0] != 2:
        raise FieldFormatError(f"{path}: not a two-channel uint8 mask.")
    return ObservationMask(jnp.asarray(values != 0))


def write_state(path: PathLike, theta: StateVector) -> None:
    write_field(path, np.asarray(theta.blocks, dtype=np.float64))


def read_state(path: PathLike) -> StateVector:
    values = read_field(path)
    if values.dtype != np.float64 or values.shape[0] < 3:
        raise FieldFormatError(f"{path}: not a state field.")
    return StateVector.from_blocks(jnp.asarray(values))


def write_error_map(path: PathLike, error_map: ExpectedErrorMap) -> None:
    write_field(path, np.asarray(error_map.values, dtype=np.float64))


def read_error_map(path: PathLike, kind: str = "displacement") -> ExpectedErrorMap:
    values = jnp.asarray(read_field(path))
    if kind == "displacement":
        values = values[0]
    return ExpectedErrorMap(values=values, kind=kind)


def read_config(path: PathLike) -> BenchmarkConfig:
    """Read `key=value` lines. Blank lines and text after `#` are ignored."""
    mapping = {}
    with open(path, encoding="utf-8") as f:
        for number, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{number}: expected `key=value`.")
            key, value = line.split("=", 1)
            mapping[key.strip()] = value.strip()
    return BenchmarkConfig.from_mapping(mapping)


def write_config(path: PathLike, config: BenchmarkConfig) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for key, value in config.to_mapping().items():
            f.write(f"{key}={value}\n")


_DATASET_FILES = ("truth.amvf", "y_t0.amvf", "y_t1.amvf", "mask.amvf", "config.cfg")


def save_dataset(
    directory: PathLike,
    theta_true: StateVector,
    y: ObservationSet,
    config: BenchmarkConfig,
) -> None:
    os.makedirs(directory, exist_ok=True)
    truth, y_t0, y_t1, mask, cfg = (os.path.join(directory, f) for f in _DATASET_FILES)
    write_state(truth, theta_true)
    write_field(y_t0, np.asarray(y.y_t0.values, dtype=np.float64))
    write_field(y_t1, np.asarray(y.y_t1.values, dtype=np.float64))
    write_mask(mask, y.mask)
    write_config(cfg, config)


def load_dataset(
    directory: PathLike,
) -> tuple[StateVector, ObservationSet, BenchmarkConfig]:
    truth, y_t0, y_t1, mask, cfg = (os.path.join(directory, f) for f in _DATASET_FILES)
    y = ObservationSet(
        ImageStack(jnp.asarray(read_field(y_t0))),
        ImageStack(jnp.asarray(read_field(y_t1))),
        read_mask(mask),
    )
    return read_state(truth), y, read_config(cfg)


def write_epe_csv(path: PathLike, rows: Sequence[tuple[str, EpeReport]]) -> None:
    """One row per method, one column per criterion, values with 17 significant
    digits.
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("method",) + CRITERIA)
        for method, report in rows:
            values = report.as_dict()
            writer.writerow([method] + [f"{values[name]:.17g}" for name in CRITERIA])


def read_epe_csv(path: PathLike) -> dict[str, EpeReport]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        return {
            row["method"]: EpeReport(**{name: float(row[name]) for name in CRITERIA})
            for row in reader
        }


def _jsonable(value):
    if isinstance(value, Mapping):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.ndarray, jax.Array)):
        array = np.asarray(value)
        return array.item() if array.ndim == 0 else array.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_summary(path: PathLike, summary: Mapping[str, Any]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_jsonable(summary), f, indent=2, sort_keys=True)
        f.write("\n")
