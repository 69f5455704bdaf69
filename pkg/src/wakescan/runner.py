"""Run the detection pipeline over many scenes, optionally in worker processes.

Results always come back in input order and each scene is processed
independently, so the output does not depend on the number of workers.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import RunConfig
from .detect import Analysis, analyze
from .io import read_json, read_pgm
from .synth import GroundTruth

__all__ = ["Scene", "load_scene", "load_scene_dir", "analyze_scene", "analyze_scenes"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Scene:
    scene_id: str
    pixels: np.ndarray
    truth: GroundTruth | None = None
    ship_center: tuple = (0.0, 0.0)


def load_scene(pgm_path, truth_path=None) -> Scene:
    """Read a PGM and its ground-truth sidecar (same stem, ``.json``) if present."""
    pgm_path = Path(pgm_path)
    pixels = read_pgm(pgm_path)
    if truth_path is None:
        cand = pgm_path.with_suffix(".json")
        truth_path = cand if cand.exists() else None
    truth = None
    center = (0.0, 0.0)
    if truth_path is not None:
        data = read_json(truth_path)
        truth = GroundTruth.from_dict(data["truth"] if "truth" in data else data)
        center = truth.ship_center
    sid = truth.scene_id if truth is not None else pgm_path.stem
    return Scene(sid, pixels, truth, tuple(center))


def load_scene_dir(directory) -> list[Scene]:
    """All ``*.pgm`` scenes of a directory, in sorted file-name order."""
    paths = sorted(Path(directory).glob("*.pgm"))
    return [load_scene(p) for p in paths]


def analyze_scene(scene: Scene, config: RunConfig, keep_estimate: bool = False) -> Analysis:
    a = analyze(
        scene.pixels,
        scene.ship_center,
        config.solver_config(),
        config.detect_config(),
        n_angles=config.n_angles,
        source_id=scene.scene_id,
    )
    return a if keep_estimate else replace(a, estimate=None)


def _work(args):
    scene, config, keep = args
    return analyze_scene(scene, config, keep)


def analyze_scenes(scenes, config: RunConfig, jobs: int = 1, keep_estimate: bool = False) -> list[Analysis]:
    """Analyses for ``scenes`` in input order, using ``jobs`` worker processes."""
    scenes = list(scenes)
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    tasks = [(s, config, keep_estimate) for s in scenes]
    if jobs == 1 or len(scenes) <= 1:
        return [_work(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(scenes))) as pool:
        return list(pool.map(_work, tasks))
