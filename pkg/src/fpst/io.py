"""File formats: edge lists, feature/label files and model checkpoints.

Checkpoint layout (all integers little-endian)::

    b"FPST1"
    u32 length, UTF-8 JSON config
    u32 record count
    per record: u16 name length, name, u8 ndim, u64 * ndim shape, float64 data (C order)
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

import numpy as np
import torch

from .graph import Graph

log = logging.getLogger(__name__)

MAGIC = b"FPST1"
SPLITS = ("train", "val", "test")


class FormatError(ValueError):
    pass


def _lines(path):
    with open(path, encoding="utf-8") as f:
        for no, raw in enumerate(f, 1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield no, line


def load_edge_list(path) -> Graph:
    pairs = []
    for no, line in _lines(path):
        parts = line.split()
        if len(parts) < 2:
            raise FormatError(f"{path}:{no}: expected two node ids, got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}:{no}: non-integer node id in {line!r}") from None
        if u < 0 or v < 0:
            raise FormatError(f"{path}:{no}: negative node id")
        pairs.append((u, v))
    if not pairs:
        raise FormatError(f"{path}: no edges")
    e = np.array(pairs, dtype=np.int64)
    loops = int((e[:, 0] == e[:, 1]).sum())
    if loops:
        log.warning("dropped %d self-loop(s) from %s", loops, path)
    return Graph(int(e.max()) + 1, e)


def load_csv_matrix(path, n_rows: int | None = None) -> np.ndarray:
    rows = []
    for no, line in _lines(path):
        try:
            rows.append([float(t) for t in line.split(",")])
        except ValueError:
            raise FormatError(f"{path}:{no}: unparsable number in {line!r}") from None
        if len(rows[-1]) != len(rows[0]):
            raise FormatError(f"{path}:{no}: ragged row ({len(rows[-1])} columns, expected {len(rows[0])})")
    if not rows:
        raise FormatError(f"{path}: empty matrix")
    m = np.array(rows, dtype=np.float64)
    if n_rows is not None and len(m) != n_rows:
        raise FormatError(f"{path}: {len(m)} rows but the graph has {n_rows} nodes")
    return m


def load_labels(path, n_nodes: int | None = None) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Labels, one per line, with an optional split column; masks are empty when absent."""
    labels, splits = [], []
    for no, line in _lines(path):
        parts = line.replace(",", " ").split()
        try:
            labels.append(int(parts[0]))
        except ValueError:
            raise FormatError(f"{path}:{no}: non-integer label {parts[0]!r}") from None
        if len(parts) > 1:
            if parts[1] not in SPLITS:
                raise FormatError(f"{path}:{no}: split must be one of {SPLITS}, got {parts[1]!r}")
            splits.append(parts[1])
    y = np.array(labels, dtype=np.int64)
    if n_nodes is not None and len(y) != n_nodes:
        raise FormatError(f"{path}: {len(y)} labels but the graph has {n_nodes} nodes")
    if (y < 0).any():
        raise FormatError(f"{path}: negative label")
    masks = {}
    if splits:
        if len(splits) != len(y):
            raise FormatError(f"{path}: split column present on only some lines")
        s = np.array(splits)
        masks = {name: s == name for name in SPLITS}
    return y, masks


def synth_splits(labels: np.ndarray, scheme: str, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """``citation``: 20 train nodes per class, 500 val, 1000 test (capped by what is left).
    ``622``: random 60/20/20."""
    n = len(labels)
    masks = {name: np.zeros(n, dtype=bool) for name in SPLITS}
    if scheme == "citation":
        train = []
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            train.extend(rng.choice(idx, size=min(20, len(idx)), replace=False))
        masks["train"][train] = True
        rest = rng.permutation(np.flatnonzero(~masks["train"]))
        n_val = min(500, len(rest) // 3)
        masks["val"][rest[:n_val]] = True
        masks["test"][rest[n_val : n_val + 1000]] = True
    elif scheme == "622":
        perm = rng.permutation(n)
        a, b = int(0.6 * n), int(0.8 * n)
        masks["train"][perm[:a]] = True
        masks["val"][perm[a:b]] = True
        masks["test"][perm[b:]] = True
    else:
        raise ValueError(f"unknown split scheme {scheme!r} (use 'citation' or '622')")
    return masks


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, config: dict, state: dict[str, torch.Tensor]) -> None:
    blob = json.dumps(config, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(state)))
        for name, t in state.items():
            arr = np.asarray(t.detach().cpu().numpy(), dtype="<f8", order="C")  # keeps 0-d shapes
            nb = name.encode()
            f.write(struct.pack("<H", len(nb)))
            f.write(nb)
            f.write(struct.pack("<B", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor]]:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise FormatError(f"{path}: not an FPST1 checkpoint")
    off = 5

    def take(fmt):
        nonlocal off
        vals = struct.unpack_from(fmt, data, off)
        off += struct.calcsize(fmt)
        return vals

    (clen,) = take("<I")
    config = json.loads(data[off : off + clen])
    off += clen
    (count,) = take("<I")
    state = {}
    for _ in range(count):
        (nlen,) = take("<H")
        name = data[off : off + nlen].decode()
        off += nlen
        (ndim,) = take("<B")
        shape = take(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape)
        off += 8 * size
        state[name] = torch.from_numpy(arr.copy())
    if off != len(data):
        raise FormatError(f"{path}: {len(data) - off} trailing bytes")
    return config, state
