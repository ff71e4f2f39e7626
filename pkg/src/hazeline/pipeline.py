"""End-to-end dehazing: stage orchestration and the run report.

Stage order: load, dark channel, transmission from the dark channel,
anchor extraction, per-patch color-line fits (with the growth ladder),
airlight direction, per-patch magnitudes under refinement, Laplacian
interpolation of the magnitude field, nearest-neighbor regularization
of transmission, recovery in the configured mode, gamma, write.

The global airlight color that divides the dark channel also serves the
transmission-route recovery, which keeps the two consistent: a scale
error in that color cancels out of the recovery only when both use the
same value.  The color-line stages contribute the refined airlight
direction and the per-pixel magnitude field that the subtraction route
recovers with.  Every random choice is seeded from the config seed and
patch coordinates, and all reductions run in a fixed order, so results
do not depend on the thread count.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import airlight as al
from . import colorline as cl
from . import darkchannel as dc
from . import io as hio
from . import recover as rc
from . import regularize as rg
from .config import PipelineConfig
from .errors import ConfigError, NumericError
from .image import as_image, iterate_patches


@dataclass
class DehazeResult:
    dehazed: np.ndarray
    transmission: np.ndarray
    airlight_field: np.ndarray
    airlight_direction: np.ndarray
    airlight_color: np.ndarray
    report: dict
    stages: dict = field(default_factory=dict)


@contextmanager
def _stage(name):
    try:
        yield
    except (ConfigError, NumericError) as exc:
        exc.args = (f"[{name}] {exc.args[0]}",) + exc.args[1:]
        raise


def _denoise(img, mode):
    if mode == "median3":
        return ndimage.median_filter(img, size=(3, 3, 1))
    return img


def _fit_tiles(img, tiles, params, base_seed, threads):
    """Fit and validate every tile, growing failures; order preserved."""

    def work(tile):
        line, reason = cl.fit_and_validate(tile, img, params, base_seed)
        if line is not None:
            return line, None, False
        if reason == cl.FAIL_TOO_SMALL:
            return None, reason, False
        grown, grown_reason = cl.grow_patch_and_refit(tile, img, params, base_seed)
        if grown is not None:
            return grown, None, True
        return None, grown_reason, True

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, tiles))
    return [work(tile) for tile in tiles]


def dehaze_image(img, config: PipelineConfig, want_stages: bool = False) -> DehazeResult:
    """Dehaze one image; pure apart from the clock in the report."""
    started = time.perf_counter()
    img = as_image(img)
    h, w = img.shape[:2]
    needed = max(config.dcp_patch_size, config.colorline_patch, config.anchor_window)
    if min(h, w) < needed:
        raise ConfigError(
            f"image {w}x{h} is smaller than the {needed} pixel patch window")

    dcp = config.dcp_params()
    classifier = config.classifier_params()
    air_params = config.airlight_params()
    recovery = config.recovery_params()

    work = _denoise(img, config.denoise)

    with _stage("dark channel"):
        dark = dc.dark_channel(work, dcp.patch_size)
        a_color = dc.bootstrap_airlight(work, dcp)
    with _stage("transmission"):
        t_raw = dc.estimate_transmission_dcp(work, a_color, dcp)
    with _stage("anchors"):
        anchors = dc.max_filter_anchor_points(
            t_raw, config.anchor_window, config.anchor_top_fraction)

    with _stage("color lines"):
        tiles = list(iterate_patches((h, w), config.colorline_patch, config.colorline_patch))
        fits = _fit_tiles(work, tiles, classifier, config.seed, config.threads)
        lines, line_tiles, fail_counts, grown_count = [], [], {}, 0
        for tile, (line, reason, grew) in zip(tiles, fits):
            grown_count += int(grew)
            if line is None:
                fail_counts[reason] = fail_counts.get(reason, 0) + 1
            else:
                lines.append(line)
                line_tiles.append(tile)
        stats_list = [cl.PatchStats(t.pixel_count, cl.line_projections(line, work))
                      for line, t in zip(lines, line_tiles)]

    with _stage("airlight direction"):
        normals = [ln.normal for ln in lines if ln.normal is not None]
        supports = [float(ln.support) for ln in lines if ln.normal is not None]
        if len(normals) >= 3:
            direction = al.estimate_airlight_direction(
                np.array(normals),
                np.array(supports) if air_params.weight_by_support else None,
                tie_tol=air_params.tie_tol)
            direction_source = "normals"
        else:
            # too few off-origin lines (e.g. a haze-free input): fall back
            # to the bootstrap color's direction
            boot_norm = np.linalg.norm(a_color)
            if boot_norm <= 0.0:
                raise NumericError("no usable airlight direction")
            direction = a_color / boot_norm
            direction_source = "bootstrap"

    with _stage("airlight magnitudes"):
        refined = al.refine_airlight(lines, stats_list, direction, air_params)
        direction = refined.direction

    with _stage("airlight interpolation"):
        est = np.full((h, w), np.nan)
        sig = np.ones((h, w))
        for mag in refined.magnitudes:
            tile = line_tiles[mag.patch_index]
            est[tile.y0:tile.y1, tile.x0:tile.x1] = mag.s
            sig[tile.y0:tile.y1, tile.x0:tile.x1] = mag.sigma
        if np.isfinite(est).any():
            system = rg.assemble_interpolation_system(
                est, sig, work, config.alpha, config.beta, config.edge_epsilon)
            a_field, solve_info = rg.solve_airlight_field(
                system, config.solver_tol, config.solver_max_iter or None)
        else:
            # no validated patch at all: nothing to subtract anywhere
            a_field = np.zeros((h, w))
            solve_info = rg.SolveInfo(0, 0.0)

    with _stage("transmission regularization"):
        t_final = rg.nn_regularize_transmission(work, anchors, config.nn_spatial_weight)

    with _stage("recovery"):
        if recovery.mode == rc.MODE_TRANSMISSION:
            t_used = t_raw if config.raw_transmission else t_final
            recovered = rc.recover_radiance(img, t_used, a_color, recovery)
            saturated = np.zeros((h, w), dtype=bool)
        else:
            transmitted = rc.direct_transmission_component(img, a_field, direction)
            recovered, saturated = rc.contrast_restore(transmitted, a_field, direction)
        dehazed = rc.gamma_correct(recovered, recovery.gamma)

    report = {
        "airlight_color": a_color,
        "airlight_direction": direction,
        "direction_source": direction_source,
        "patches_total": len(tiles),
        "patches_fit": len(lines),
        "patches_grown": grown_count,
        "magnitudes_accepted": len(refined.magnitudes),
        "anchors": len(anchors),
        "solver_iterations": solve_info.iterations,
        "solver_residual": solve_info.residual,
        "refine_trace": refined.trace,
        "saturated_pixels": int(saturated.sum()),
        "elapsed_seconds": time.perf_counter() - started,
    }
    for reason, count in sorted(fail_counts.items()):
        report[f"fit_fail.{reason.replace(' ', '_')}"] = count
    for reason, count in sorted(refined.rejections.items()):
        report[f"magnitude_fail.{reason.replace(' ', '_')}"] = count

    stages = {}
    if want_stages:
        stages.update({
            "dark_channel": dark,
            "transmission_raw": t_raw,
            "transmission": t_final,
            "airlight_field": np.clip(a_field, 0.0, 1.0),
        })

    return DehazeResult(dehazed, t_final, a_field, direction, a_color, report, stages)


def run_dehaze(input_path, output_path, config: PipelineConfig, dump_dir=None) -> dict:
    """File-level entry: read, dehaze, write image, map, and report.

    Returns the mapping of artifact names to their paths.  Outputs are
    written atomically and only after the whole pipeline has succeeded,
    so a failing run leaves nothing behind.
    """
    img = hio.load_image(input_path)
    result = dehaze_image(img, config, want_stages=dump_dir is not None)

    out = Path(output_path)
    if out.suffix.lower() not in (".png", ".ppm", ".pnm"):
        raise ConfigError(f"output must be .png or .ppm, got {out.suffix or '(none)'}")
    map_path = out.with_name(out.stem + "_transmission.png")
    report_path = out.with_name(out.stem + "_report.txt")

    doc = {"input": str(input_path), "output": str(out)}
    for key, value in result.report.items():
        doc[key] = value
    for key, value in config.as_dict().items():
        doc[f"config.{key}"] = value

    hio.save_image(out, result.dehazed)
    hio.save_scalar_map(map_path, result.transmission)
    hio.write_keyvalues(report_path, doc)
    paths = {"dehazed": str(out), "transmission": str(map_path), "report": str(report_path)}

    if dump_dir is not None:
        dump = Path(dump_dir)
        dump.mkdir(parents=True, exist_ok=True)
        for name, arr in result.stages.items():
            stage_path = dump / f"{name}.png"
            hio.save_scalar_map(stage_path, np.clip(arr, 0.0, 1.0))
            # stage names double as artifact keys otherwise: the
            # "transmission" stage would shadow the final map's path
            paths[f"stage_{name}"] = str(stage_path)
    return paths
