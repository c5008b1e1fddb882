"""Depression filling for elevation rasters.

The filler is a priority-flood sweep: every outlet cell (a valid cell on the
raster edge, or one that touches a nodata cell in 8-connectivity) is seeded
into a min-priority queue keyed by ``(elevation, insertion order)``.  Cells
are popped lowest-first; each unvisited valid neighbour is raised to at least
the spill level of the popped cell and pushed.  Each cell enters the queue
exactly once, so the sweep is O(n log n) and the result is the unique lowest
surface that is >= the input everywhere, equals it at the outlets, and leaves
no cell below all of its 8 neighbours.

Two interchangeable engines produce bit-identical output: a numba-compiled
kernel (used automatically when numba is importable) and a pure-Python
fallback on heapq.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np

from .errors import NoOutletError
from .raster import Raster, subtract

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without the extra
    _HAVE_NUMBA = False

_NEIGHBOURS = ((-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1))


@dataclass(frozen=True)
class FilledResult:
    """Output of :func:`fill_depressions`.

    Attributes
    ----------
    filled : Raster
        The depression-free surface (>= the input everywhere).
    depth : Raster
        ``filled - input``; zero outside depressions, nodata where the
        input is nodata.
    """

    filled: Raster
    depth: Raster


def _outlet_mask(valid: np.ndarray) -> np.ndarray:
    """Valid cells that drain off the grid: on the edge or touching nodata."""
    h, w = valid.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = valid
    interior = np.ones_like(valid)
    for dr, dc in _NEIGHBOURS:
        interior &= padded[1 + dr : h + 1 + dr, 1 + dc : w + 1 + dc]
    return valid & ~interior


def _fill_python(values: np.ndarray, valid: np.ndarray, outlet: np.ndarray) -> np.ndarray:
    h, w = values.shape
    rows = values.tolist()
    valid_rows = valid.tolist()
    visited = [row[:] for row in outlet.tolist()]
    heap: list[tuple[float, int, int, int]] = []
    order = 0
    for r, c in zip(*(idx.tolist() for idx in np.nonzero(outlet))):
        heapq.heappush(heap, (rows[r][c], order, r, c))
        order += 1
    while heap:
        spill, _, r, c = heapq.heappop(heap)
        for dr, dc in _NEIGHBOURS:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and valid_rows[nr][nc] and not visited[nr][nc]:
                visited[nr][nc] = True
                level = rows[nr][nc]
                if level < spill:
                    level = spill
                    rows[nr][nc] = level
                heapq.heappush(heap, (level, order, nr, nc))
                order += 1
    return np.array(rows, dtype=np.float64)


if _HAVE_NUMBA:

    @njit(cache=True, nogil=True)
    def _heap_sift_up(heap_e, heap_o, heap_p, i):
        while i > 0:
            parent = (i - 1) >> 1
            if heap_e[parent] > heap_e[i] or (
                heap_e[parent] == heap_e[i] and heap_o[parent] > heap_o[i]
            ):
                heap_e[parent], heap_e[i] = heap_e[i], heap_e[parent]
                heap_o[parent], heap_o[i] = heap_o[i], heap_o[parent]
                heap_p[parent], heap_p[i] = heap_p[i], heap_p[parent]
                i = parent
            else:
                break

    @njit(cache=True, nogil=True)
    def _heap_sift_down(heap_e, heap_o, heap_p, size):
        i = 0
        while True:
            left = 2 * i + 1
            if left >= size:
                break
            best = left
            right = left + 1
            if right < size and (
                heap_e[right] < heap_e[left]
                or (heap_e[right] == heap_e[left] and heap_o[right] < heap_o[left])
            ):
                best = right
            if heap_e[best] < heap_e[i] or (
                heap_e[best] == heap_e[i] and heap_o[best] < heap_o[i]
            ):
                heap_e[best], heap_e[i] = heap_e[i], heap_e[best]
                heap_o[best], heap_o[i] = heap_o[i], heap_o[best]
                heap_p[best], heap_p[i] = heap_p[i], heap_p[best]
                i = best
            else:
                break

    @njit(cache=True, nogil=True)
    def _fill_kernel(values, valid, outlet):
        h, w = values.shape
        n = h * w
        filled = values.copy()
        visited = np.zeros((h, w), dtype=np.bool_)
        heap_e = np.empty(n, dtype=np.float64)
        heap_o = np.empty(n, dtype=np.int64)
        heap_p = np.empty(n, dtype=np.int64)
        size = 0
        order = 0
        for r in range(h):
            for c in range(w):
                if outlet[r, c]:
                    visited[r, c] = True
                    heap_e[size] = values[r, c]
                    heap_o[size] = order
                    heap_p[size] = r * w + c
                    _heap_sift_up(heap_e, heap_o, heap_p, size)
                    size += 1
                    order += 1
        while size > 0:
            spill = heap_e[0]
            pos = heap_p[0]
            size -= 1
            heap_e[0] = heap_e[size]
            heap_o[0] = heap_o[size]
            heap_p[0] = heap_p[size]
            _heap_sift_down(heap_e, heap_o, heap_p, size)
            r = pos // w
            c = pos % w
            for dr in range(-1, 2):
                for dc in range(-1, 2):
                    if dr == 0 and dc == 0:
                        continue
                    nr = r + dr
                    nc = c + dc
                    if 0 <= nr < h and 0 <= nc < w and valid[nr, nc] and not visited[nr, nc]:
                        visited[nr, nc] = True
                        level = values[nr, nc]
                        if level < spill:
                            level = spill
                            filled[nr, nc] = level
                        heap_e[size] = level
                        heap_o[size] = order
                        heap_p[size] = nr * w + nc
                        _heap_sift_up(heap_e, heap_o, heap_p, size)
                        size += 1
                        order += 1
        return filled


def _fill_values(values: np.ndarray, valid: np.ndarray, outlet: np.ndarray, engine: str) -> np.ndarray:
    if engine == "auto":
        engine = "numba" if _HAVE_NUMBA else "python"
    if engine == "numba":
        if not _HAVE_NUMBA:
            raise ValueError("engine 'numba' requested but numba is not installed")
        return _fill_kernel(np.ascontiguousarray(values), valid, outlet)
    if engine == "python":
        return _fill_python(values, valid, outlet)
    raise ValueError(f"unknown fill engine {engine!r}")


def fill_depressions(dem: Raster, *, engine: str = "auto") -> FilledResult:
    """Fill every closed depression of *dem* to its spill level.

    Parameters
    ----------
    dem : Raster
        Elevation grid; nodata cells act as outlets for their neighbours.
    engine : {"auto", "numba", "python"}
        Implementation to run.  Both produce bit-identical results; "auto"
        prefers the compiled kernel when numba is installed.

    Returns
    -------
    FilledResult
        Filled surface and per-cell depression depth.

    Raises
    ------
    NoOutletError
        If the raster contains no valid cell with a drainage outlet
        (in particular if it is entirely nodata).
    """
    valid = dem.valid_mask()
    outlet = _outlet_mask(valid)
    if not outlet.any():
        raise NoOutletError(
            "no drainage outlet: raster has no valid cell on the edge or next to nodata"
        )
    filled_values = _fill_values(dem.values, valid, outlet, engine)
    filled = dem.with_values(filled_values)
    return FilledResult(filled=filled, depth=subtract(filled, dem))


def depression_depth(dem: Raster, *, engine: str = "auto") -> Raster:
    """Shortcut for ``fill_depressions(dem).depth``."""
    return fill_depressions(dem, engine=engine).depth
