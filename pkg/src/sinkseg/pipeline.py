"""The four pipeline stages, each reading/writing a shared output directory.

Stage artifacts (all deterministic — rerunning a stage overwrites the same
bytes, regardless of worker pool size):

``fill``
    ``patches/<id>.filled.asc``, ``patches/<id>.depth.asc``,
    ``patches/<id>.window.json`` (per-patch mode) or ``filled.asc`` +
    ``depth.asc`` (mosaic mode), plus ``manifest.json`` describing the
    mosaic and tiling so later stages need no access to the original input.
``prompts``
    ``patches/<id>.boxes.json`` per patch (possibly empty box lists) and
    ``depth_filtered.asc`` — the filtered depressions stitched back into a
    mosaic.
``segment``
    ``fused_mask.asc`` — per-box masks fused per patch (pixelwise max),
    patches stitched with the configured merge rule, then binarized.
``eval``
    ``report.json`` and ``report.csv`` against the ground-truth mask.

Prompting is per-patch and independent: a depression overlapping several
windows may be prompted in each of them.  The duplicate masks collapse when
patches are stitched, so the fused mosaic and everything downstream see one
object per depression.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .config import PipelineConfig, validate_for
from .errors import InputError
from .hydro import fill_depressions
from .image import read_ppm
from .labeling import (
    PromptSet,
    boxes_from_components,
    filter_components,
    label_components,
    read_prompts,
    write_prompts,
)
from .metrics import MetricsReport, evaluate_masks, report_to_csv, report_to_json
from .raster import (
    Raster,
    binarize,
    invert_depth,
    read_ascii_grid,
    read_ascii_mask,
    write_ascii_grid,
    write_ascii_mask,
)
from .segmenter import (
    EchoBackend,
    HttpBackend,
    ReplayBackend,
    fuse_probabilities,
    segment_patch,
)
from .tiling import TileSpec, TileWindow, extract_tile, patch_id, plan_tiles, stitch, write_window

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def _pool_map(workers: int, fn, items):
    """Apply *fn* over *items*, preserving order; thread pool if workers > 1."""
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _plan(width: int, height: int, spec: TileSpec) -> list[TileWindow]:
    try:
        return plan_tiles(width, height, spec)
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def _write_manifest(out: Path, mosaic: Raster, cfg: PipelineConfig) -> None:
    doc = {
        "width": mosaic.width,
        "height": mosaic.height,
        "patch": cfg.tile.patch,
        "stride": cfg.tile.stride,
        "origin_x": mosaic.origin_x,
        "origin_y": mosaic.origin_y,
        "cellsize": mosaic.cellsize,
        "nodata": mosaic.nodata,
        "fill_mode": cfg.fill_mode,
        "invert_depth": cfg.invert_depth,
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    )


def _read_manifest(out: Path) -> dict:
    path = out / MANIFEST_NAME
    if not path.exists():
        raise InputError(f"{path} not found — run the fill stage first")
    doc = json.loads(path.read_text())
    return doc


def _manifest_windows(doc: dict) -> list[TileWindow]:
    return _plan(doc["width"], doc["height"], TileSpec(doc["patch"], doc["stride"]))


def _window_georef(doc: dict, window: TileWindow) -> tuple[float, float, float]:
    cellsize = doc["cellsize"]
    origin_x = doc["origin_x"] + window.col0 * cellsize
    origin_y = doc["origin_y"] + (doc["height"] - window.row0 - window.patch) * cellsize
    return origin_x, origin_y, cellsize


def cmd_fill(cfg: PipelineConfig) -> None:
    """Fill depressions and write filled/depth rasters (per patch or mosaic)."""
    validate_for(cfg, "fill")
    dem = read_ascii_grid(cfg.depth_raster)
    if cfg.invert_depth:
        try:
            dem = invert_depth(dem)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    out = Path(cfg.out_dir)
    patches = out / "patches"
    patches.mkdir(parents=True, exist_ok=True)

    if cfg.fill_mode == "patch":
        windows = _plan(dem.width, dem.height, cfg.tile)

        def work(window: TileWindow):
            tile = extract_tile(dem, window)
            if not tile.valid_mask().any():
                return window, tile, tile  # nothing to fill, keep nodata
            result = fill_depressions(tile)
            return window, result.filled, result.depth

        for window, filled, depth in _pool_map(cfg.workers, work, windows):
            pid = patch_id(window)
            write_ascii_grid(filled, patches / f"{pid}.filled.asc")
            write_ascii_grid(depth, patches / f"{pid}.depth.asc")
            write_window(window, patches / f"{pid}.window.json")
        logger.info("filled %d patches into %s", len(windows), patches)
    else:
        result = fill_depressions(dem)
        write_ascii_grid(result.filled, out / "filled.asc")
        write_ascii_grid(result.depth, out / "depth.asc")
        logger.info("filled mosaic into %s", out)

    _write_manifest(out, dem, cfg)


def cmd_prompts(cfg: PipelineConfig) -> None:
    """Label, filter, and box the depressions of every patch."""
    validate_for(cfg, "prompts")
    out = Path(cfg.out_dir)
    patches = out / "patches"
    patches.mkdir(parents=True, exist_ok=True)
    doc = _read_manifest(out)
    windows = _manifest_windows(doc)

    depth_mosaic: Raster | None = None
    if doc["fill_mode"] == "mosaic":
        depth_path = out / "depth.asc"
        if not depth_path.exists():
            raise InputError(f"{depth_path} not found — run the fill stage first")
        depth_mosaic = read_ascii_grid(depth_path)

    def _depth_tile(window: TileWindow) -> Raster:
        if depth_mosaic is not None:
            return extract_tile(depth_mosaic, window)
        path = patches / f"{patch_id(window)}.depth.asc"
        if not path.exists():
            raise InputError(f"{path} not found — run the fill stage first")
        return read_ascii_grid(path)

    def work(window: TileWindow):
        depth_tile = _depth_tile(window)
        components = label_components(depth_tile)
        kept = filter_components(components, cfg.filter)
        boxes = boxes_from_components(
            kept, cfg.pad_px, width=window.patch, height=window.patch
        )
        prompts = PromptSet(
            patch_id=patch_id(window),
            boxes=boxes,
            areas=[c.area_px for c in kept],
            max_depths=[c.max_depth for c in kept],
        )
        values = depth_tile.values.copy()
        removed = [c for c in components if c not in kept]
        for comp in removed:
            for r, c in comp.pixels:
                values[r, c] = 0.0
        return window, prompts, depth_tile.with_values(values)

    total_boxes = 0
    tiles: list[tuple[TileWindow, Raster]] = []
    for window, prompts, filtered in _pool_map(cfg.workers, work, windows):
        write_prompts(prompts, patches / f"{prompts.patch_id}.boxes.json")
        write_window(window, patches / f"{prompts.patch_id}.window.json")
        tiles.append((window, filtered))
        total_boxes += len(prompts.boxes)

    mosaic = stitch(tiles, doc["width"], doc["height"], cfg.merge)
    write_ascii_grid(mosaic, out / "depth_filtered.asc")
    logger.info("wrote %d prompt boxes across %d patches", total_boxes, len(windows))


def _build_shared_backend(cfg: PipelineConfig):
    if cfg.backend_kind == "http":
        return HttpBackend(
            cfg.backend_endpoint,
            timeout=cfg.backend_timeout,
            retries=cfg.backend_retries,
            max_inflight=cfg.backend_max_inflight,
        )
    if cfg.backend_kind == "replay":
        return ReplayBackend(cfg.backend_replay_dir)
    return None  # echo is built per patch from the filtered depth


def cmd_segment(cfg: PipelineConfig) -> None:
    """Segment every patch from its box prompts and stitch the fused mask."""
    validate_for(cfg, "segment")
    out = Path(cfg.out_dir)
    patches = out / "patches"
    doc = _read_manifest(out)
    windows = _manifest_windows(doc)

    rgb = read_ppm(cfg.rgb_mosaic)
    if (rgb.height, rgb.width) != (doc["height"], doc["width"]):
        raise InputError(
            f"rgb mosaic is {rgb.width}x{rgb.height} but the fill manifest says "
            f"{doc['width']}x{doc['height']}"
        )
    filtered_path = out / "depth_filtered.asc"
    if not filtered_path.exists():
        raise InputError(f"{filtered_path} not found — run the prompts stage first")
    depth_filtered = read_ascii_grid(filtered_path)

    shared_backend = _build_shared_backend(cfg)

    def work(window: TileWindow):
        pid = patch_id(window)
        boxes_path = patches / f"{pid}.boxes.json"
        if not boxes_path.exists():
            raise InputError(f"{boxes_path} not found — run the prompts stage first")
        prompts = read_prompts(boxes_path)
        patch_img = extract_tile(rgb, window)
        backend = shared_backend or EchoBackend(extract_tile(depth_filtered, window))
        outcome = segment_patch(
            backend,
            patch_img,
            prompts.boxes,
            patch_id=pid,
            binarize_threshold=cfg.binarize_threshold,
        )
        probs = fuse_probabilities(
            [m.probs for m in outcome.masks], (window.patch, window.patch)
        )
        origin_x, origin_y, cellsize = _window_georef(doc, window)
        tile = Raster(
            probs,
            nodata=doc["nodata"],
            origin_x=origin_x,
            origin_y=origin_y,
            cellsize=cellsize,
        )
        return window, tile

    tiles = _pool_map(cfg.workers, work, windows)
    prob_mosaic = stitch(tiles, doc["width"], doc["height"], cfg.merge)
    fused = binarize(prob_mosaic, cfg.binarize_threshold)
    write_ascii_mask(fused, out / "fused_mask.asc")
    logger.info("fused mask written to %s", out / "fused_mask.asc")


def cmd_eval(cfg: PipelineConfig) -> MetricsReport:
    """Evaluate the fused mask against ground truth; write JSON + CSV."""
    validate_for(cfg, "eval")
    out = Path(cfg.out_dir)
    fused_path = out / "fused_mask.asc"
    if not fused_path.exists():
        raise InputError(f"{fused_path} not found — run the segment stage first")
    pred = read_ascii_mask(fused_path)
    gt = read_ascii_mask(cfg.eval_gt_mask)
    if pred.values.shape != gt.values.shape:
        raise InputError(
            f"prediction is {pred.width}x{pred.height} but ground truth is "
            f"{gt.width}x{gt.height}"
        )
    ignore = None
    if cfg.eval_ignore_mask is not None:
        ignore = read_ascii_mask(cfg.eval_ignore_mask)
        if ignore.values.shape != gt.values.shape:
            raise InputError("ignore mask dimensions do not match ground truth")
    report = evaluate_masks(pred, gt, ignore=ignore, thresholds=cfg.eval_thresholds)
    (out / "report.json").write_text(report_to_json(report))
    (out / "report.csv").write_text(report_to_csv([(cfg.eval_label, report)]))
    logger.info(
        "evaluation: f1=%.4f iou=%.4f over %d pixels",
        report.f1,
        report.iou,
        report.pixel_confusion.total,
    )
    return report


def cmd_run(cfg: PipelineConfig) -> MetricsReport:
    """Full pipeline: fill, prompts, segment, eval."""
    validate_for(cfg, "run")
    cmd_fill(cfg)
    cmd_prompts(cfg)
    cmd_segment(cfg)
    return cmd_eval(cfg)
