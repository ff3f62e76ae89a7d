"""Counting tensor memory allocated by torch operators.

``AllocationTracker`` intercepts every dispatched operator, records the
storage of each newly produced tensor and releases it when the last Python
tensor referencing that storage is garbage collected.  Peak live bytes are
the high-water mark over the tracked region.  Tensors created before the
region (inputs, parameters) are not counted.
"""

from __future__ import annotations

import weakref

import torch
from torch.utils._python_dispatch import TorchDispatchMode
from torch.utils._pytree import tree_flatten


class AllocationTracker(TorchDispatchMode):
    def __init__(self):
        super().__init__()
        self.live = 0
        self.peak = 0
        self.largest = 0
        self._refs: dict[int, list[int]] = {}  # storage ptr -> [tensor count, nbytes]

    def _release(self, key: int) -> None:
        entry = self._refs.get(key)
        if entry is None:
            return
        entry[0] -= 1
        if entry[0] == 0:
            self.live -= entry[1]
            del self._refs[key]

    def _track(self, t: torch.Tensor) -> None:
        st = t.untyped_storage()
        key = st.data_ptr()
        if key == 0:
            return
        entry = self._refs.get(key)
        if entry is None:
            nbytes = st.nbytes()
            self._refs[key] = [1, nbytes]
            self.live += nbytes
            self.peak = max(self.peak, self.live)
            self.largest = max(self.largest, nbytes)
        else:
            entry[0] += 1
        weakref.finalize(t, self._release, key)

    def __torch_dispatch__(self, func, types, args=(), kwargs=None):
        inputs = {id(a) for a in tree_flatten((args, kwargs or {}))[0] if isinstance(a, torch.Tensor)}
        ptrs = {
            a.untyped_storage().data_ptr() for a in tree_flatten((args, kwargs or {}))[0] if isinstance(a, torch.Tensor)
        }
        out = func(*args, **(kwargs or {}))
        for t in tree_flatten(out)[0]:
            if isinstance(t, torch.Tensor) and id(t) not in inputs:
                # in-place ops and views of inputs reuse existing storage
                if t.untyped_storage().data_ptr() in ptrs and t.untyped_storage().data_ptr() not in self._refs:
                    continue
                self._track(t)
        return out


def peak_bytes(fn, *args, **kwargs) -> tuple[int, int]:
    """Run ``fn`` under no_grad and return (peak live bytes, largest single allocation)."""
    with torch.no_grad(), AllocationTracker() as tr:
        out = fn(*args, **kwargs)
        del out
    return tr.peak, tr.largest
