"""Shared helpers for the test suite."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest

from sinkseg.raster import Raster


def make_random_dem(
    rng: np.random.Generator,
    height: int,
    width: int,
    nodata_frac: float = 0.0,
    quantize: float | None = None,
) -> Raster:
    """Random terrain-ish raster; optional nodata holes and flat steps."""
    values = rng.normal(loc=50.0, scale=10.0, size=(height, width))
    # a few smooth bumps so depressions have structure, not just speckle
    for _ in range(3):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        amp = rng.uniform(-15.0, 15.0)
        sigma = rng.uniform(2.0, max(2.5, height / 2, width / 2))
        yy, xx = np.mgrid[0:height, 0:width]
        values += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
    if quantize:
        values = np.round(values / quantize) * quantize
    nodata = -9999.0
    if nodata_frac > 0:
        holes = rng.random((height, width)) < nodata_frac
        values = np.where(holes, nodata, values)
    return Raster(values, nodata=nodata)


def tree_digests(root: Path) -> dict[str, str]:
    """Relative path -> sha256 of every file under *root*."""
    out = {}
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
