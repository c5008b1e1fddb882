"""Stage orchestration: artifacts, composition, determinism, backends."""

import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from conftest import tree_digests
from sinkseg.config import PipelineConfig
from sinkseg.errors import InputError
from sinkseg.hydro import fill_depressions
from sinkseg.image import write_ppm, write_pgm
from sinkseg.labeling import FilterThresholds, read_prompts
from sinkseg.mock_server import MockSegmentServer
from sinkseg.pipeline import cmd_eval, cmd_fill, cmd_prompts, cmd_run, cmd_segment
from sinkseg.raster import (
    Raster,
    invert_depth,
    read_ascii_grid,
    read_ascii_mask,
    write_ascii_grid,
)
from sinkseg.synth import export_scene, gen_terrain
from sinkseg.tiling import TileSpec, read_window

SCENE = dict(seed=21, width=128, height=128, n_sinkholes=3,
             depth_range=(3.0, 8.0), radius_range=(8.0, 12.0))
TILE = TileSpec(patch=64, stride=32)  # 3x3 windows over 128x128


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    scene = gen_terrain(**SCENE)
    export_scene(scene, d)
    return d


def make_cfg(scene_dir, out_dir, **kw):
    kw.setdefault("tile", TILE)
    return PipelineConfig(
        depth_raster=scene_dir / "dem.asc",
        rgb_mosaic=scene_dir / "rgb.ppm",
        eval_gt_mask=scene_dir / "gt_mask.asc",
        out_dir=Path(out_dir),
        **kw,
    )


class TestFillStage:
    def test_patch_mode_artifacts(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_fill(cfg)
        patches = tmp_path / "out" / "patches"
        filled = sorted(p.name for p in patches.glob("*.filled.asc"))
        assert len(filled) == 9
        assert filled[0] == "r00000_c00000.filled.asc"
        assert len(list(patches.glob("*.depth.asc"))) == 9
        assert len(list(patches.glob("*.window.json"))) == 9
        manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
        assert manifest["width"] == 128 and manifest["height"] == 128
        assert manifest["patch"] == 64 and manifest["stride"] == 32
        assert manifest["fill_mode"] == "patch"

    def test_patch_contents_match_library_fill(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_fill(cfg)
        dem = read_ascii_grid(scene_dir / "dem.asc")
        patches = tmp_path / "out" / "patches"
        window = read_window(patches / "r00032_c00032.window.json")
        from sinkseg.tiling import extract_tile

        expected = fill_depressions(extract_tile(dem, window))
        assert np.array_equal(
            read_ascii_grid(patches / "r00032_c00032.depth.asc").values,
            expected.depth.values,
        )

    def test_mosaic_mode_artifacts(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out", fill_mode="mosaic")
        cmd_fill(cfg)
        out = tmp_path / "out"
        dem = read_ascii_grid(scene_dir / "dem.asc")
        expected = fill_depressions(dem)
        assert np.array_equal(
            read_ascii_grid(out / "filled.asc").values, expected.filled.values
        )
        assert np.array_equal(
            read_ascii_grid(out / "depth.asc").values, expected.depth.values
        )

    def test_invert_depth_flag(self, tmp_path):
        values = np.full((70, 70), 40.0)
        values[30:34, 30:34] = 47.0  # a bump becomes a pit after inversion
        bumpy = Raster(values)
        write_ascii_grid(bumpy, tmp_path / "bumpy.asc")
        cfg = PipelineConfig(
            depth_raster=tmp_path / "bumpy.asc",
            out_dir=tmp_path / "out",
            invert_depth=True,
            fill_mode="mosaic",
            tile=TILE,
        )
        cmd_fill(cfg)
        expected = fill_depressions(invert_depth(bumpy)).depth
        got = read_ascii_grid(tmp_path / "out" / "depth.asc")
        assert np.array_equal(got.values, expected.values)
        assert got.values.max() == 7.0

    def test_all_nodata_tile_passes_through(self, tmp_path):
        values = np.full((96, 96), 25.0)
        values[:64, :64] = -9999.0  # window r0 c0 becomes pure nodata
        write_ascii_grid(Raster(values), tmp_path / "holey.asc")
        cfg = PipelineConfig(
            depth_raster=tmp_path / "holey.asc",
            out_dir=tmp_path / "out",
            tile=TileSpec(patch=64, stride=32),
        )
        cmd_fill(cfg)
        depth = read_ascii_grid(tmp_path / "out" / "patches" / "r00000_c00000.depth.asc")
        assert np.all(depth.values == -9999.0)


class TestStageOrdering:
    def test_prompts_requires_fill(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        with pytest.raises(InputError, match="run the fill stage first"):
            cmd_prompts(cfg)

    def test_segment_requires_prompts(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_fill(cfg)
        with pytest.raises(InputError, match="run the prompts stage first"):
            cmd_segment(cfg)

    def test_eval_requires_segment(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_fill(cfg)
        cmd_prompts(cfg)
        with pytest.raises(InputError, match="run the segment stage first"):
            cmd_eval(cfg)

    def test_rgb_dimension_mismatch(self, scene_dir, tmp_path):
        small = np.zeros((64, 64, 3), dtype=np.uint8)
        from sinkseg.image import RGBImage

        write_ppm(RGBImage(small), tmp_path / "small.ppm")
        cfg = replace(make_cfg(scene_dir, tmp_path / "out"), rgb_mosaic=tmp_path / "small.ppm")
        cmd_fill(cfg)
        cmd_prompts(cfg)
        with pytest.raises(InputError, match="fill manifest says"):
            cmd_segment(cfg)

    def test_eval_gt_dimension_mismatch(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_fill(cfg)
        cmd_prompts(cfg)
        cmd_segment(cfg)
        from sinkseg.raster import BinaryMask, write_ascii_mask

        write_ascii_mask(BinaryMask(np.zeros((4, 4), dtype=bool)), tmp_path / "tiny.asc")
        bad = replace(cfg, eval_gt_mask=tmp_path / "tiny.asc")
        with pytest.raises(InputError, match="ground truth"):
            cmd_eval(bad)


class TestPromptsStage:
    def test_three_pits_three_boxes_single_window(self, tmp_path):
        scene = gen_terrain(seed=13, width=96, height=96, n_sinkholes=3,
                            depth_range=(3.0, 8.0), radius_range=(6.0, 9.0))
        export_scene(scene, tmp_path / "scene")
        cfg = make_cfg(tmp_path / "scene", tmp_path / "out",
                       tile=TileSpec(patch=96, stride=48))
        cmd_fill(cfg)
        cmd_prompts(cfg)
        prompts = read_prompts(tmp_path / "out" / "patches" / "r00000_c00000.boxes.json")
        assert len(prompts.boxes) == 3
        assert len(prompts.areas) == 3 and len(prompts.max_depths) == 3
        # every truth bbox appears among the prompt boxes
        truth_boxes = {tuple(t.bbox.as_list()) for t in scene.truths}
        assert {tuple(b.as_list()) for b in prompts.boxes} == truth_boxes

    def test_filter_thresholds_remove_everything(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out",
                       filter=FilterThresholds(min_depth=1000.0, min_area_px=50))
        cmd_fill(cfg)
        cmd_prompts(cfg)
        for path in (tmp_path / "out" / "patches").glob("*.boxes.json"):
            assert read_prompts(path).boxes == []
        filtered = read_ascii_grid(tmp_path / "out" / "depth_filtered.asc")
        valid = filtered.valid_mask()
        assert np.all(filtered.values[valid] == 0.0)

    def test_flat_ramp_yields_no_boxes(self, tmp_path):
        ramp = Raster(np.tile(np.arange(96.0), (96, 1)))
        write_ascii_grid(ramp, tmp_path / "ramp.asc")
        cfg = PipelineConfig(
            depth_raster=tmp_path / "ramp.asc",
            out_dir=tmp_path / "out",
            tile=TileSpec(patch=48, stride=24),
        )
        cmd_fill(cfg)
        cmd_prompts(cfg)
        for path in (tmp_path / "out" / "patches").glob("*.boxes.json"):
            assert read_prompts(path).boxes == []

    def test_filtered_mosaic_zeroes_discarded_components(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_fill(cfg)
        cmd_prompts(cfg)
        filtered = read_ascii_grid(tmp_path / "out" / "depth_filtered.asc")
        gt = read_ascii_mask(scene_dir / "gt_mask.asc")
        # surviving depressions sit exactly where the ground truth says
        on_gt = filtered.values[gt.values]
        assert (on_gt > 0).mean() > 0.9


class TestSegmentAndEval:
    def run_all(self, scene_dir, out_dir, **kw):
        cfg = make_cfg(scene_dir, out_dir, **kw)
        cmd_fill(cfg)
        cmd_prompts(cfg)
        cmd_segment(cfg)
        return cfg, cmd_eval(cfg)

    def test_echo_backend_recovers_ground_truth(self, scene_dir, tmp_path):
        cfg, report = self.run_all(scene_dir, tmp_path / "out")
        assert report.iou > 0.9
        assert report.object_rows[4][:3] == (0.5, 3, 0)  # all three pits found
        fused = read_ascii_mask(tmp_path / "out" / "fused_mask.asc")
        gt = read_ascii_mask(scene_dir / "gt_mask.asc")
        assert fused.values.shape == gt.values.shape

    def test_report_files_match_returned_report(self, scene_dir, tmp_path):
        from sinkseg.metrics import report_from_json

        cfg, report = self.run_all(scene_dir, tmp_path / "out")
        on_disk = report_from_json((tmp_path / "out" / "report.json").read_text())
        assert on_disk == report
        csv_text = (tmp_path / "out" / "report.csv").read_text()
        assert csv_text.startswith("label,f1,iou,precision,recall,accuracy\nrun,")

    def test_zero_boxes_yield_empty_mask_and_zero_recall(self, scene_dir, tmp_path):
        cfg, report = self.run_all(
            scene_dir, tmp_path / "out",
            filter=FilterThresholds(min_depth=1000.0, min_area_px=50),
        )
        fused = read_ascii_mask(tmp_path / "out" / "fused_mask.asc")
        assert fused.count() == 0
        assert report.recall == 0.0 and report.precision == 0.0

    def test_mosaic_fill_mode_end_to_end(self, scene_dir, tmp_path):
        cfg, report = self.run_all(scene_dir, tmp_path / "out", fill_mode="mosaic")
        assert report.iou > 0.9

    def test_http_backend_paints_prompt_boxes(self, scene_dir, tmp_path):
        with MockSegmentServer(mode="boxfill", value=255) as server:
            cfg = make_cfg(scene_dir, tmp_path / "out",
                           backend_kind="http", backend_endpoint=server.endpoint)
            cmd_fill(cfg)
            cmd_prompts(cfg)
            cmd_segment(cfg)
        # expected mosaic: every prompt box of every window, painted in place
        expected = np.zeros((128, 128), dtype=bool)
        patches = tmp_path / "out" / "patches"
        for boxes_path in patches.glob("*.boxes.json"):
            prompts = read_prompts(boxes_path)
            window = read_window(patches / f"{prompts.patch_id}.window.json")
            for box in prompts.boxes:
                expected[
                    window.row0 + box.y0 : window.row0 + box.y1,
                    window.col0 + box.x0 : window.col0 + box.x1,
                ] = True
        fused = read_ascii_mask(tmp_path / "out" / "fused_mask.asc")
        assert np.array_equal(fused.values, expected)

    def test_replay_backend_reproduces_echo_run(self, scene_dir, tmp_path):
        cfg, _ = self.run_all(scene_dir, tmp_path / "echo")
        # record per-box echo masks, then replay them through the pipeline
        patches = tmp_path / "echo" / "patches"
        depth_filtered = read_ascii_grid(tmp_path / "echo" / "depth_filtered.asc")
        from sinkseg.tiling import extract_tile

        replay_dir = tmp_path / "recorded"
        for boxes_path in sorted(patches.glob("*.boxes.json")):
            prompts = read_prompts(boxes_path)
            window = read_window(patches / f"{prompts.patch_id}.window.json")
            tile = extract_tile(depth_filtered, window)
            positive = tile.valid_mask() & (tile.values > 0)
            mask_dir = replay_dir / prompts.patch_id
            mask_dir.mkdir(parents=True, exist_ok=True)
            for i, box in enumerate(prompts.boxes):
                m = np.zeros(positive.shape, dtype=np.uint8)
                m[box.y0 : box.y1, box.x0 : box.x1] = (
                    positive[box.y0 : box.y1, box.x0 : box.x1] * 255
                )
                write_pgm(m, mask_dir / f"{i}.pgm")

        replay_cfg = make_cfg(scene_dir, tmp_path / "replayed",
                              backend_kind="replay", backend_replay_dir=replay_dir)
        cmd_fill(replay_cfg)
        cmd_prompts(replay_cfg)
        cmd_segment(replay_cfg)
        echo_fused = (tmp_path / "echo" / "fused_mask.asc").read_bytes()
        replay_fused = (tmp_path / "replayed" / "fused_mask.asc").read_bytes()
        assert replay_fused == echo_fused


class TestDeterminism:
    def test_run_equals_stage_composition(self, scene_dir, tmp_path):
        staged = make_cfg(scene_dir, tmp_path / "staged")
        cmd_fill(staged)
        cmd_prompts(staged)
        cmd_segment(staged)
        cmd_eval(staged)
        composed = make_cfg(scene_dir, tmp_path / "composed")
        cmd_run(composed)
        assert tree_digests(tmp_path / "staged") == tree_digests(tmp_path / "composed")

    def test_rerun_overwrites_identically(self, scene_dir, tmp_path):
        cfg = make_cfg(scene_dir, tmp_path / "out")
        cmd_run(cfg)
        first = tree_digests(tmp_path / "out")
        cmd_run(cfg)
        assert tree_digests(tmp_path / "out") == first

    def test_worker_count_does_not_change_bytes(self, scene_dir, tmp_path):
        serial = make_cfg(scene_dir, tmp_path / "serial", workers=1)
        threaded = make_cfg(scene_dir, tmp_path / "threaded", workers=4)
        cmd_run(serial)
        cmd_run(threaded)
        assert tree_digests(tmp_path / "serial") == tree_digests(tmp_path / "threaded")
