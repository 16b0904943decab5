"""Small grid helpers shared across modules."""

from __future__ import annotations

import numpy as np

__all__ = ["check_grid", "pooled_union"]


def check_grid(grid, name: str = "grid") -> np.ndarray:
    """Validate a strictly increasing 1-d grid, naming the offending index."""
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError(f"{name} must be a nonempty 1-d array")
    diffs = np.diff(grid)
    bad = np.flatnonzero(diffs <= 0.0)
    if bad.size:
        i = int(bad[0])
        if diffs[i] == 0.0:
            raise ValueError(
                f"{name} has duplicate points at indices {i} and {i + 1} "
                f"(value {grid[i]!r})"
            )
        raise ValueError(f"{name} must be strictly increasing (violated at index {i})")
    return grid


def pooled_union(grids) -> np.ndarray:
    """Sorted union of several 1-d grids with exact duplicates removed."""
    return np.unique(np.concatenate([np.asarray(g, dtype=float) for g in grids]))
