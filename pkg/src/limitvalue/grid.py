"""Uniform node grids over the state box and multilinear interpolation.

Nodes sit at ``linspace(lo, hi, n)`` per axis, so box corners (for instance
the origin starts of the examples) are exact nodes. A node is the center of
its (dual) cell; the cell of a point is the nearest node.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GridSpec:
    box: np.ndarray
    cells_per_axis: tuple[int, ...]

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float).reshape(-1, 2)
        n = tuple(int(c) for c in np.broadcast_to(self.cells_per_axis, (len(box),)))
        if any(c < 2 for c in n):
            raise ValueError("cells_per_axis must be >= 2 on every axis")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "cells_per_axis", n)

    @property
    def dim(self) -> int:
        return len(self.box)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells_per_axis

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @property
    def width(self) -> np.ndarray:
        return (self.box[:, 1] - self.box[:, 0]) / (np.array(self.cells_per_axis) - 1)

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for (lo, hi), n in zip(self.box, self.cells_per_axis)]

    def centers(self, cells=None) -> np.ndarray:
        multi = np.array(np.unravel_index(np.arange(self.n_cells) if cells is None else np.asarray(cells),
                                          self.cells_per_axis)).T
        return self.box[:, 0] + multi * self.width

    def cell_of(self, Y) -> np.ndarray:
        """Flat index of the nearest node; -1 for points outside the box."""
        Y = np.atleast_2d(Y)
        r = np.rint((Y - self.box[:, 0]) / self.width).astype(np.int64)
        n = np.array(self.cells_per_axis)
        inside = np.all((Y >= self.box[:, 0] - 1e-12) & (Y <= self.box[:, 1] + 1e-12), axis=1)
        r = np.clip(r, 0, n - 1)
        flat = np.ravel_multi_index(r.T, self.cells_per_axis)
        return np.where(inside, flat, -1)

    def interp_weights(self, Y):
        """Corner indices (N, 2**d) and weights (N, 2**d); points are clamped to the box."""
        Y = np.atleast_2d(Y)
        n = np.array(self.cells_per_axis)
        r = (np.clip(Y, self.box[:, 0], self.box[:, 1]) - self.box[:, 0]) / self.width
        i0 = np.clip(np.floor(r).astype(np.int64), 0, n - 2)
        f = np.clip(r - i0, 0.0, 1.0)
        idx, w = [], []
        for corner in itertools.product((0, 1), repeat=self.dim):
            c = np.array(corner)
            idx.append(np.ravel_multi_index((i0 + c).T, self.cells_per_axis))
            w.append(np.prod(np.where(c == 1, f, 1.0 - f), axis=1))
        return np.stack(idx, axis=1), np.stack(w, axis=1)

    def interpolate(self, values, Y) -> np.ndarray:
        idx, w = self.interp_weights(Y)
        return np.sum(np.asarray(values)[idx] * w, axis=1)
