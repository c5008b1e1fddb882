"""Tile planning, extraction, and mosaic stitching."""

import numpy as np
import pytest

from conftest import make_random_dem
from sinkseg.image import RGBImage
from sinkseg.raster import BinaryMask, Raster
from sinkseg.tiling import (
    MergeRule,
    TileSpec,
    TileWindow,
    WindowFormatError,
    extract_tile,
    patch_id,
    plan_tiles,
    read_window,
    stitch,
    window_from_json,
    window_to_json,
    write_window,
)

NODATA = -9999.0


class TestPlanning:
    def test_1024_grid_gives_nine_windows(self):
        windows = plan_tiles(1024, 1024)
        assert len(windows) == 9
        origins = sorted({w.col0 for w in windows})
        assert origins == [0, 256, 512]
        assert sorted({w.row0 for w in windows}) == [0, 256, 512]

    def test_1000_grid_shifts_last_window_inward(self):
        windows = plan_tiles(1000, 1000)
        assert len(windows) == 9
        assert sorted({w.col0 for w in windows}) == [0, 256, 488]

    def test_777_grid_dedupes_collapsed_origin(self):
        windows = plan_tiles(777, 777)
        assert sorted({w.col0 for w in windows}) == [0, 256, 265]

    def test_exact_fit_single_window(self):
        assert plan_tiles(512, 512) == [TileWindow(0, 0, 512)]

    def test_row_major_order(self):
        windows = plan_tiles(10, 10, TileSpec(patch=4, stride=3))
        assert [(w.row0, w.col0) for w in windows[:4]] == [(0, 0), (0, 3), (0, 6), (3, 0)]

    def test_patch_larger_than_mosaic_rejected(self):
        with pytest.raises(ValueError, match="exceeds mosaic extent"):
            plan_tiles(100, 700, TileSpec(patch=512, stride=256))

    def test_every_cell_covered(self, rng):
        for _ in range(20):
            w, h = (int(v) for v in rng.integers(16, 90, size=2))
            patch = int(rng.integers(4, 17))
            stride = int(rng.integers(1, patch + 1))
            covered = np.zeros((h, w), dtype=int)
            for win in plan_tiles(w, h, TileSpec(patch=patch, stride=stride)):
                covered[win.row0 : win.row0 + patch, win.col0 : win.col0 + patch] += 1
            assert covered.min() >= 1

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            TileSpec(patch=0, stride=1)
        with pytest.raises(ValueError):
            TileSpec(patch=8, stride=0)
        with pytest.raises(ValueError):
            TileSpec(patch=8, stride=9)

    def test_patch_id_format(self):
        assert patch_id(TileWindow(0, 256, 512)) == "r00000_c00256"
        assert patch_id(TileWindow(488, 0, 512)) == "r00488_c00000"


class TestExtract:
    def test_values_match_array_slice(self, rng):
        dem = make_random_dem(rng, 20, 30)
        win = TileWindow(3, 7, 8)
        tile = extract_tile(dem, win)
        assert np.array_equal(tile.values, dem.values[3:11, 7:15])

    def test_tile_is_a_copy(self, rng):
        dem = make_random_dem(rng, 12, 12)
        tile = extract_tile(dem, TileWindow(0, 0, 6))
        assert tile.values.base is None or not np.shares_memory(tile.values, dem.values)

    def test_georeference_shift(self):
        dem = Raster(np.zeros((10, 10)), origin_x=500.0, origin_y=200.0, cellsize=2.0)
        tile = extract_tile(dem, TileWindow(2, 3, 4))
        assert tile.origin_x == 500.0 + 3 * 2.0
        # origin_y measures from the bottom edge: 10 rows, window ends at row 6
        assert tile.origin_y == 200.0 + (10 - 6) * 2.0

    def test_overlapping_windows_agree(self, rng):
        dem = make_random_dem(rng, 16, 16)
        a = extract_tile(dem, TileWindow(0, 0, 8))
        b = extract_tile(dem, TileWindow(0, 4, 8))
        assert np.array_equal(a.values[:, 4:], b.values[:, :4])

    def test_out_of_bounds_window_rejected(self):
        with pytest.raises(ValueError, match="does not fit"):
            extract_tile(Raster(np.zeros((8, 8))), TileWindow(4, 0, 8))

    def test_mask_and_image_sources(self, rng):
        mask = BinaryMask(rng.random((9, 9)) > 0.5)
        tile = extract_tile(mask, TileWindow(1, 1, 4))
        assert isinstance(tile, BinaryMask)
        assert np.array_equal(tile.values, mask.values[1:5, 1:5])
        img = RGBImage(rng.integers(0, 256, size=(9, 9, 3), dtype=np.uint8))
        cut = extract_tile(img, TileWindow(2, 0, 5))
        assert isinstance(cut, RGBImage)
        assert np.array_equal(cut.pixels, img.pixels[2:7, 0:5])

    def test_unsupported_source_type(self):
        with pytest.raises(TypeError, match="extract a tile"):
            extract_tile(np.zeros((4, 4)), TileWindow(0, 0, 2))


class TestStitch:
    def reassemble(self, dem, spec, merge):
        windows = plan_tiles(dem.width, dem.height, spec)
        tiles = [(w, extract_tile(dem, w)) for w in windows]
        return stitch(tiles, dem.width, dem.height, merge=merge)

    @pytest.mark.parametrize("merge", [MergeRule.MAX, MergeRule.FIRST])
    def test_round_trip_identity_bit_exact(self, rng, merge):
        dem = make_random_dem(rng, 40, 56, nodata_frac=0.1)
        back = self.reassemble(dem, TileSpec(patch=16, stride=9), merge)
        assert np.array_equal(back.values, dem.values)

    def test_round_trip_under_mean(self, rng):
        # n identical samples average back to v only within rounding (3v/3 != v)
        dem = make_random_dem(rng, 40, 56, nodata_frac=0.1)
        back = self.reassemble(dem, TileSpec(patch=16, stride=9), MergeRule.MEAN)
        valid = dem.valid_mask()
        assert np.allclose(back.values[valid], dem.values[valid], rtol=1e-12, atol=0.0)
        assert np.array_equal(back.values[~valid], dem.values[~valid])

    def test_round_trip_recovers_georeference_exactly(self, rng):
        dem = Raster(
            rng.normal(size=(30, 30)),
            origin_x=702462.1,
            origin_y=3585798.7,
            cellsize=0.3406,
        )
        back = self.reassemble(dem, TileSpec(patch=16, stride=11), MergeRule.MAX)
        assert back.geotransform == dem.geotransform

    def test_max_takes_larger_value(self):
        win = TileWindow(0, 0, 2)
        low = Raster(np.full((2, 2), 0.3))
        high = Raster(np.full((2, 2), 0.8))
        out = stitch([(win, low), (win, high)], 2, 2, merge=MergeRule.MAX)
        assert np.array_equal(out.values, np.full((2, 2), 0.8))

    def test_max_is_order_independent(self, rng):
        windows = plan_tiles(24, 24, TileSpec(patch=8, stride=5))
        tiles = [(w, Raster(rng.random((8, 8)))) for w in windows]
        ordered = stitch(tiles, 24, 24, merge=MergeRule.MAX)
        shuffled = tiles.copy()
        rng.shuffle(shuffled)
        assert np.array_equal(
            stitch(shuffled, 24, 24, merge=MergeRule.MAX).values, ordered.values
        )

    def test_mean_averages_overlap(self):
        a = Raster(np.full((2, 2), 1.0))
        b = Raster(np.full((2, 2), 2.0))
        out = stitch(
            [(TileWindow(0, 0, 2), a), (TileWindow(0, 1, 2), b)], 3, 2, merge=MergeRule.MEAN
        )
        assert np.array_equal(out.values, np.array([[1.0, 1.5, 2.0], [1.0, 1.5, 2.0]]))

    def test_first_keeps_earliest_tile(self):
        win = TileWindow(0, 0, 2)
        first = Raster(np.full((2, 2), 5.0))
        second = Raster(np.full((2, 2), 9.0))
        out = stitch([(win, first), (win, second)], 2, 2, merge=MergeRule.FIRST)
        assert np.array_equal(out.values, np.full((2, 2), 5.0))

    def test_tile_nodata_contributes_nothing(self):
        values = np.full((2, 2), NODATA)
        values[0, 0] = 4.0
        holey = Raster(values)
        backdrop = Raster(np.full((2, 2), 1.0))
        out = stitch(
            [(TileWindow(0, 0, 2), holey), (TileWindow(0, 0, 2), backdrop)],
            2,
            2,
            merge=MergeRule.FIRST,
        )
        assert np.array_equal(out.values, np.array([[4.0, 1.0], [1.0, 1.0]]))

    def test_uncovered_cells_are_nodata(self):
        out = stitch([(TileWindow(0, 0, 2), Raster(np.ones((2, 2))))], 4, 4)
        expected = np.full((4, 4), NODATA)
        expected[:2, :2] = 1.0
        assert np.array_equal(out.values, expected)

    def test_empty_tile_list_rejected(self):
        with pytest.raises(ValueError, match="at least one tile"):
            stitch([], 4, 4)

    def test_mixed_patch_sizes_rejected(self):
        with pytest.raises(ValueError, match="mixed patch sizes"):
            stitch(
                [
                    (TileWindow(0, 0, 2), Raster(np.zeros((2, 2)))),
                    (TileWindow(0, 0, 3), Raster(np.zeros((3, 3)))),
                ],
                4,
                4,
            )

    def test_tile_shape_mismatch_rejected(self):
        with pytest.raises(ValueError, match="does not match window patch"):
            stitch([(TileWindow(0, 0, 3), Raster(np.zeros((2, 2))))], 4, 4)

    def test_metadata_disagreement_rejected(self):
        with pytest.raises(ValueError, match="nodata or cellsize"):
            stitch(
                [
                    (TileWindow(0, 0, 2), Raster(np.zeros((2, 2)), cellsize=1.0)),
                    (TileWindow(0, 2, 2), Raster(np.zeros((2, 2)), cellsize=2.0)),
                ],
                4,
                4,
            )

    def test_window_outside_mosaic_rejected(self):
        with pytest.raises(ValueError, match="does not fit"):
            stitch([(TileWindow(3, 0, 2), Raster(np.zeros((2, 2))))], 4, 4)


class TestWindowSidecar:
    def test_json_round_trip(self):
        win = TileWindow(256, 488, 512)
        assert window_from_json(window_to_json(win)) == win

    def test_file_round_trip(self, tmp_path):
        path = tmp_path / "t.window.json"
        write_window(TileWindow(0, 256, 512), path)
        assert read_window(path) == TileWindow(0, 256, 512)

    def test_keys(self):
        import json

        doc = json.loads(window_to_json(TileWindow(1, 2, 3)))
        assert doc == {"row0": 1, "col0": 2, "patch": 3}

    def test_malformed_document(self):
        with pytest.raises(WindowFormatError):
            window_from_json('{"row0": 1, "col0": 2}')
        with pytest.raises(WindowFormatError):
            window_from_json("[1, 2, 3]")
        with pytest.raises(WindowFormatError):
            window_from_json("not json")
