"""Single-band rasters, binary masks, and ESRI ASCII grid I/O.

Grids are stored as 2-D ``float64`` arrays with row 0 at the *top* (the
northernmost row), matching the on-disk order of the ASCII format.  The
georeference follows the ESRI convention: ``origin_x``/``origin_y`` give the
map coordinates of the lower-left corner of the lower-left cell and
``cellsize`` the square cell edge.

Values are written with :func:`repr`, i.e. the shortest decimal string that
round-trips the exact float64, so write -> read is bit-exact.  Nodata cells
are written as the same token that appears on the ``NODATA_value`` header
line and are matched against it verbatim when reading.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridFormatError

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")


def _freeze(values: np.ndarray, dtype) -> np.ndarray:
    out = np.array(values, dtype=dtype, copy=True)
    if out.ndim != 2:
        raise ValueError(f"expected a 2-D grid, got shape {out.shape}")
    if out.shape[0] < 1 or out.shape[1] < 1:
        raise ValueError(f"grid must be at least 1x1, got shape {out.shape}")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Raster:
    """A single-band grid plus georeference and nodata sentinel.

    Parameters
    ----------
    values : numpy.ndarray
        2-D array, row 0 is the top (northernmost) row.  Stored as float64
        and marked read-only.
    nodata : float
        Sentinel marking cells with no data.
    origin_x, origin_y : float
        Map coordinates of the lower-left corner.
    cellsize : float
        Cell edge length in map units (must be > 0).
    """

    values: np.ndarray
    nodata: float = DEFAULT_NODATA
    origin_x: float = 0.0
    origin_y: float = 0.0
    cellsize: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _freeze(self.values, np.float64))
        if not np.isfinite(self.nodata):
            raise ValueError("nodata sentinel must be finite")
        if not self.cellsize > 0:
            raise ValueError(f"cellsize must be positive, got {self.cellsize}")
        finite = self.values[self.values != self.nodata]
        if finite.size and not np.isfinite(finite).all():
            raise ValueError("raster contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def geotransform(self) -> tuple[float, float, float]:
        """(origin_x, origin_y, cellsize) — convenient for equality checks."""
        return (self.origin_x, self.origin_y, self.cellsize)

    def valid_mask(self) -> np.ndarray:
        """Boolean array, True where the cell holds a real value."""
        return self.values != self.nodata

    def with_values(self, values: np.ndarray) -> "Raster":
        """Same georeference and nodata, different cell values."""
        return Raster(values, self.nodata, self.origin_x, self.origin_y, self.cellsize)


@dataclass(frozen=True)
class BinaryMask:
    """A 0/1 grid sharing the Raster georeference conventions."""

    values: np.ndarray
    origin_x: float = 0.0
    origin_y: float = 0.0
    cellsize: float = 1.0

    def __post_init__(self) -> None:
        arr = np.asarray(self.values)
        if arr.dtype != np.bool_:
            uniq = np.unique(arr)
            if not np.isin(uniq, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")
            arr = arr.astype(bool)
        object.__setattr__(self, "values", _freeze(arr, np.bool_))
        if not self.cellsize > 0:
            raise ValueError(f"cellsize must be positive, got {self.cellsize}")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def geotransform(self) -> tuple[float, float, float]:
        return (self.origin_x, self.origin_y, self.cellsize)

    def count(self) -> int:
        """Number of set (1) cells."""
        return int(self.values.sum())


def _parse_header(lines: list[str], path: Path) -> tuple[dict, int]:
    header = {}
    for i, key in enumerate(_HEADER_KEYS):
        if i >= len(lines):
            raise GridFormatError(f"{path}: line {i + 1}: missing header line '{key}'")
        parts = lines[i].split()
        if len(parts) != 2 or parts[0].lower() != key:
            raise GridFormatError(
                f"{path}: line {i + 1}: expected '{key} <value>', got {lines[i]!r}"
            )
        header[key] = parts[1]
    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
    except ValueError as exc:
        raise GridFormatError(f"{path}: non-integer ncols/nrows in header") from exc
    if ncols < 1 or nrows < 1:
        raise GridFormatError(f"{path}: ncols/nrows must be >= 1, got {ncols}x{nrows}")
    try:
        header["xllcorner"] = float(header["xllcorner"])
        header["yllcorner"] = float(header["yllcorner"])
        header["cellsize"] = float(header["cellsize"])
        header["nodata_float"] = float(header["nodata_value"])
    except ValueError as exc:
        raise GridFormatError(f"{path}: non-numeric value in header") from exc
    if not header["cellsize"] > 0:
        raise GridFormatError(f"{path}: cellsize must be positive")
    header["ncols"] = ncols
    header["nrows"] = nrows
    return header, len(_HEADER_KEYS)


def _parse_grid(path: Path) -> tuple[dict, np.ndarray]:
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise
    lines = text.splitlines()
    header, first_data = _parse_header(lines, Path(path))
    ncols, nrows = header["ncols"], header["nrows"]
    nodata_token = header["nodata_value"]
    nodata = header["nodata_float"]

    data = np.empty((nrows, ncols), dtype=np.float64)
    row = 0
    for lineno in range(first_data, len(lines)):
        line = lines[lineno]
        tokens = line.split()
        if not tokens:
            continue
        if row >= nrows:
            raise GridFormatError(
                f"{path}: line {lineno + 1}: extra data row (expected {nrows} rows)"
            )
        if len(tokens) != ncols:
            raise GridFormatError(
                f"{path}: line {lineno + 1}: cell count mismatch "
                f"(expected {ncols} values, got {len(tokens)})"
            )
        for j, tok in enumerate(tokens):
            if tok == nodata_token:
                data[row, j] = nodata
                continue
            try:
                data[row, j] = float(tok)
            except ValueError as exc:
                raise GridFormatError(
                    f"{path}: line {lineno + 1}: non-numeric token {tok!r}"
                ) from exc
        row += 1
    if row != nrows:
        raise GridFormatError(f"{path}: expected {nrows} data rows, found {row}")
    return header, data


def read_ascii_grid(path: str | Path) -> Raster:
    """Read an ESRI ASCII grid file into a :class:`Raster`.

    Raises
    ------
    GridFormatError
        On any layout violation; the message names the offending line.
    FileNotFoundError
        If *path* does not exist.
    """
    header, data = _parse_grid(Path(path))
    return Raster(
        data,
        nodata=header["nodata_float"],
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"],
        cellsize=header["cellsize"],
    )


def _format_rows(values: np.ndarray, nodata: float) -> list[str]:
    nodata_token = repr(nodata)
    rows = []
    for r in range(values.shape[0]):
        row = values[r].tolist()
        rows.append(" ".join(nodata_token if v == nodata else repr(v) for v in row))
    return rows


def write_ascii_grid(raster: Raster, path: str | Path) -> None:
    """Write *raster* as an ESRI ASCII grid (bit-exact round trip)."""
    lines = [
        f"ncols {raster.width}",
        f"nrows {raster.height}",
        f"xllcorner {repr(raster.origin_x)}",
        f"yllcorner {repr(raster.origin_y)}",
        f"cellsize {repr(raster.cellsize)}",
        f"NODATA_value {repr(raster.nodata)}",
    ]
    lines.extend(_format_rows(raster.values, raster.nodata))
    Path(path).write_text("\n".join(lines) + "\n")


def read_ascii_mask(path: str | Path) -> BinaryMask:
    """Read a 0/1 ASCII grid as a :class:`BinaryMask`.

    Nodata cells are not allowed in masks; any value other than 0 or 1
    (including the nodata sentinel) is a format error.
    """
    header, data = _parse_grid(Path(path))
    if not np.isin(data, (0.0, 1.0)).all():
        bad = data[~np.isin(data, (0.0, 1.0))][0]
        raise GridFormatError(f"{path}: mask contains non-binary value {bad!r}")
    return BinaryMask(
        data.astype(bool),
        origin_x=header["xllcorner"],
        origin_y=header["yllcorner"],
        cellsize=header["cellsize"],
    )


def write_ascii_mask(mask: BinaryMask, path: str | Path) -> None:
    """Write a :class:`BinaryMask` as an ASCII grid of 0/1 integers."""
    lines = [
        f"ncols {mask.width}",
        f"nrows {mask.height}",
        f"xllcorner {repr(mask.origin_x)}",
        f"yllcorner {repr(mask.origin_y)}",
        f"cellsize {repr(mask.cellsize)}",
        f"NODATA_value {repr(DEFAULT_NODATA)}",
    ]
    ints = mask.values.astype(np.int64)
    lines.extend(" ".join(str(v) for v in ints[r].tolist()) for r in range(mask.height))
    Path(path).write_text("\n".join(lines) + "\n")


def _check_aligned(a, b, what: str) -> None:
    if a.values.shape != b.values.shape:
        raise ValueError(
            f"{what}: shape mismatch {a.values.shape} vs {b.values.shape}"
        )
    if a.geotransform != b.geotransform:
        raise ValueError(
            f"{what}: georeference mismatch {a.geotransform} vs {b.geotransform}"
        )


def subtract(a: Raster, b: Raster) -> Raster:
    """Cellwise ``a - b``; nodata in either input propagates to the output.

    Both rasters must share shape and georeference.  The result keeps the
    nodata sentinel of *a*.
    """
    _check_aligned(a, b, "subtract")
    both = a.valid_mask() & b.valid_mask()
    out = np.full(a.values.shape, a.nodata, dtype=np.float64)
    out[both] = a.values[both] - b.values[both]
    return a.with_values(out)


def invert_depth(raster: Raster) -> Raster:
    """Reflect values so deep cells become high: ``max(valid) - value``.

    Nodata cells pass through.  Raises ValueError if every cell is nodata.
    """
    valid = raster.valid_mask()
    if not valid.any():
        raise ValueError("invert_depth: all cells are nodata")
    top = raster.values[valid].max()
    out = np.full(raster.values.shape, raster.nodata, dtype=np.float64)
    out[valid] = top - raster.values[valid]
    return raster.with_values(out)


def binarize(raster: Raster, threshold: float) -> BinaryMask:
    """Threshold a raster into a mask: cell = 1 iff ``value > threshold``.

    Nodata cells map to 0.
    """
    on = raster.valid_mask() & (raster.values > threshold)
    return BinaryMask(
        on, origin_x=raster.origin_x, origin_y=raster.origin_y, cellsize=raster.cellsize
    )
