"""Command-line front end.

Subcommands: ``simulate``, ``invert``, ``detect``, ``eval``, ``roc`` and
``batch``.  Exit codes: 0 on success, 2 for input errors, 3 for numerical
failures (solver divergence, degenerate SVD).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_LAMBDA, RunConfig, load_config_file, seed_from_env
from .detect import WakeReport, analyze, mask_ship
from .evaluate import (
    DetectionCounts,
    compute_metrics,
    default_margin_grid,
    roc_sweep,
    score_report,
)
from .io import read_json, write_csv, write_json, write_pgm, write_sino
from .plotting import plot_roc, render_overlay
from .runner import Scene, analyze_scenes, load_scene, load_scene_dir
from .solver import SolverDivergence, solve, write_trace_csv
from .synth import WAKE_KINDS, GroundTruth, generate_scene, noise_scene_specs, paper_case_specs, spec_to_dict
from .transform import RadonOperator, Sinogram, crop_square

log = logging.getLogger("wakescan")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

_D = RunConfig()


class InputError(Exception):
    """Bad or missing input; maps to exit code 2."""


# Argument groups


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("inverse problem")
    lam_defaults = ", ".join(f"{k.value} {v:g}" for k, v in DEFAULT_LAMBDA.items())
    g.add_argument("--prior", choices=["gmc", "l1", "lp", "tv", "nuclear"],
                   help=f"regularizer (default: {_D.prior})")
    g.add_argument("--lam", type=float, help=f"regularization scale (default per prior: {lam_defaults})")
    g.add_argument("--p", type=float, help="exponent of the Lp prior, in (0, 1) (default: 0.5)")
    g.add_argument("--gamma", type=float, help="GMC non-convexity, in [0, 1] (default: 0.6)")
    g.add_argument("--mu", type=float, help=f"forward-backward step, in (0, 1.9) (default: {_D.mu:g})")
    g.add_argument("--alpha", type=float, help=f"TwIST two-step parameter (default: {_D.alpha:g})")
    g.add_argument("--tol", type=float, help=f"relative-change stopping tolerance (default: {_D.tol:g})")
    g.add_argument("--max-iter", dest="max_iter", type=int, help=f"iteration cap (default: {_D.max_iter})")
    g.add_argument("--angles", dest="n_angles", type=int, help=f"number of projection angles (default: {_D.n_angles})")
    g.add_argument("--config", type=Path, help="JSON config file; flags override its values (default: none)")


def _add_detect_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("detection")
    g.add_argument("--A", dest="A", type=float, help="largest azimuth shift in pixels (default: M/4)")
    g.add_argument("--tn-window", dest="tn_window", type=float,
                   help=f"turbulent/narrow-V pair window, degrees (default: {_D.tn_window:g})")
    g.add_argument("--tn-min-sep", dest="tn_min_sep", type=float,
                   help=f"smallest turbulent/narrow-V separation, degrees (default: {_D.tn_min_sep:g})")
    g.add_argument("--kelvin-window", dest="kelvin_window", type=float,
                   help=f"Kelvin window width, degrees (default: {_D.kelvin_window:g})")
    g.add_argument("--kelvin-offset", dest="kelvin_offset", type=float,
                   help=f"Kelvin window inner edge, degrees (default: {_D.kelvin_offset:g})")
    g.add_argument("--f-margin", dest="f_margin", type=float,
                   help=f"F-index margin for narrow-V and Kelvin wakes (default: {_D.f_margin:g})")
    g.add_argument("--turbulent-margin", dest="turbulent_margin", type=float,
                   help=f"turbulent wakes need F below this (default: {_D.turbulent_margin:g})")
    g.add_argument("--mask-radius", dest="mask_radius", type=float,
                   help=f"ship mask radius, pixels (default: {_D.mask_radius:g})")
    g.add_argument("--halfline-cone", dest="halfline_cone", type=float,
                   help=f"half-line cone around the turbulent wake, degrees (default: {_D.halfline_cone:g})")


def _add_seed_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, help="random seed (default: $WAKESCAN_SEED, else 0)")


def _add_ship_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--center", nargs=2, type=float, metavar=("X", "Y"),
                   help="ship center in pixels from the image center (default: from the truth sidecar)")
    p.add_argument("--truth", type=Path, help="ground-truth JSON (default: <input>.json when present)")


def _run_config(args) -> RunConfig:
    file_values = load_config_file(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k, None) for k in RunConfig.field_names()}
    if flags.get("seed") is None and "seed" not in file_values:
        flags["seed"] = seed_from_env()
    return RunConfig.merged(file_values, flags)


def _seed(args) -> int:
    return args.seed if args.seed is not None else seed_from_env()


def _out_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {out}: {exc.strerror}") from exc
    if not out.is_dir():
        raise InputError(f"{out} is not a directory")
    return out


def _load_input(args) -> Scene:
    if not Path(args.input).is_file():
        raise InputError(f"input image {args.input} not found")
    try:
        scene = load_scene(args.input, args.truth)
    except (ValueError, KeyError) as exc:
        raise InputError(f"cannot read {args.input}: {exc}") from exc
    if scene.pixels.shape[0] != scene.pixels.shape[1]:
        log.info("cropping %s to its central square", args.input)
        scene = Scene(scene.scene_id, crop_square(scene.pixels), scene.truth, scene.ship_center)
    if args.center is not None:
        scene = Scene(scene.scene_id, scene.pixels, scene.truth, tuple(args.center))
    elif scene.truth is None:
        raise InputError("no ship center: pass --center X Y or a truth sidecar")
    return scene


# Subcommands


def cmd_simulate(args) -> int:
    out = _out_dir(args.output)
    seed = _seed(args)
    if args.paper_suite:
        specs = paper_case_specs(seed, args.size, noise=args.noise, contrast_min=args.contrast_min,
                                 swell_amplitude=args.swell)
    else:
        specs = noise_scene_specs(args.n, seed, args.size, args.noise)
    rows = []
    for spec in specs:
        img, truth = generate_scene(spec)
        write_pgm(out / f"{spec.scene_id}.pgm", img)
        write_json(out / f"{spec.scene_id}.json", {"truth": truth.to_dict(), "spec": spec_to_dict(spec)})
        rows.append([spec.scene_id] + [int(truth.visible(k)) for k in WAKE_KINDS])
    write_csv(out / "manifest.csv", ["scene_id", *WAKE_KINDS], rows)
    print(f"wrote {len(specs)} scenes to {out}")
    return EXIT_OK


def cmd_invert(args) -> int:
    cfg = _run_config(args)
    scene = _load_input(args)
    out = _out_dir(args.output)
    size = scene.pixels.shape[0]
    mask = mask_ship(size, scene.ship_center, cfg.mask_radius)
    op = RadonOperator(size, cfg.n_angles, mask)
    result = solve(scene.pixels, cfg.solver_config(), mask=mask, op=op)
    stem = Path(args.input).stem
    write_sino(out / f"{stem}.sino", Sinogram(result.estimate, size, op.grid))
    write_trace_csv(result, out / f"{stem}_trace.csv")
    print(f"{stem}: {result.iterations} iterations, converged={result.converged}")
    return EXIT_OK


def cmd_detect(args) -> int:
    cfg = _run_config(args)
    scene = _load_input(args)
    out = _out_dir(args.output)
    analysis, result = analyze(scene.pixels, scene.ship_center, cfg.solver_config(), cfg.detect_config(),
                               n_angles=cfg.n_angles, source_id=scene.scene_id, return_result=True)
    report = analysis.report(cfg.detect_config(), cfg.snapshot())
    stem = Path(args.input).stem
    write_json(out / f"{stem}_report.json", report.to_dict())
    write_pgm(out / f"{stem}_overlay.pgm", render_overlay(scene.pixels.shape[0], report), maxval=255)
    write_trace_csv(result, out / f"{stem}_trace.csv")
    for c in report.candidates:
        where = "" if c.r is None else f" r={c.r:g} theta={c.theta:g}"
        print(f"{c.kind.value:9s} {c.status.value}{where}")
    return EXIT_OK


def _metrics_line(m) -> str:
    lr = "inf" if math.isinf(m.lr_plus) else f"{m.lr_plus:.2f}"
    return (f"sensitivity {m.sensitivity:.4f}  specificity {m.specificity:.4f}  "
            f"accuracy {m.accuracy_pct:.2f}%  F1 {m.f1:.2f}  LR+ {lr}  J {m.youden_j:.2f}")


def _table_row(label, counts: DetectionCounts, m):
    n = counts.n
    pct = [100.0 * v / n for v in (counts.tp, counts.tn, counts.fp, counts.fn)]
    lr = math.inf if math.isinf(m.lr_plus) else round(m.lr_plus, 2)
    return [label, *(round(v, 2) for v in pct), round(100 * m.sensitivity, 2), round(100 * m.specificity, 2),
            round(m.accuracy_pct, 2), round(m.f1, 2), lr, round(m.youden_j, 2)]


TABLE_HEADER = ["method", "tp_pct", "tn_pct", "fp_pct", "fn_pct", "sensitivity_pct", "specificity_pct",
                "accuracy_pct", "f1", "lr_plus", "youden_j"]


def _pair_reports(report_dir: Path, truth_dir: Path):
    reports = {}
    for path in sorted(report_dir.glob("*_report.json")):
        rep = WakeReport.from_dict(read_json(path))
        reports[rep.source_id or path.stem[: -len("_report")]] = rep
    truths = {}
    for path in sorted(truth_dir.glob("*.json")):
        data = read_json(path)
        if "truth" not in data and "wakes" not in data:
            continue
        t = GroundTruth.from_dict(data.get("truth", data))
        truths[t.scene_id] = t
    return reports, truths


def _score_all(pairs, theta_tol, r_tol):
    rows, total = [], DetectionCounts()
    for sid, rep, truth in pairs:
        c = score_report(rep, truth, theta_tol, r_tol)
        total = total + c
        rows.append([sid, c.tp, c.tn, c.fp, c.fn])
    return rows, total


def cmd_eval(args) -> int:
    if args.replay_counts is not None:
        counts = DetectionCounts(*args.replay_counts)
        m = compute_metrics(counts)
        print(_metrics_line(m))
        if args.output:
            out = _out_dir(args.output)
            write_json(out / "metrics.json", {"counts": counts.as_dict(), "metrics": m.as_dict()})
        return EXIT_OK
    if args.reports is None:
        raise InputError("eval needs --reports (or --replay-counts)")
    truth_dir = args.truths or args.reports
    for d in (args.reports, truth_dir):
        if not Path(d).is_dir():
            raise InputError(f"{d} is not a directory")
    reports, truths = _pair_reports(Path(args.reports), Path(truth_dir))
    if not reports:
        raise InputError(f"no *_report.json files in {args.reports}")
    unmatched = sorted(set(reports) ^ set(truths)) if args.strict else sorted(set(reports) - set(truths))
    if unmatched:
        raise InputError("unmatched scene ids: " + ", ".join(unmatched))
    pairs = [(sid, reports[sid], truths[sid]) for sid in sorted(reports)]
    rows, total = _score_all(pairs, args.theta_tol, args.r_tol)
    m = compute_metrics(total)
    print(_metrics_line(m))
    if args.output:
        out = _out_dir(args.output)
        write_csv(out / "counts.csv", ["scene_id", "tp", "tn", "fp", "fn"], rows)
        write_json(out / "metrics.json", {"counts": total.as_dict(), "metrics": m.as_dict()})
        write_csv(out / "table.csv", TABLE_HEADER, [_table_row(args.label, total, m)])
    return EXIT_OK


def _suite_scenes(args) -> list[Scene]:
    if args.scenes is not None:
        if not Path(args.scenes).is_dir():
            raise InputError(f"{args.scenes} is not a directory")
        scenes = load_scene_dir(args.scenes)
        if not scenes:
            raise InputError(f"no *.pgm scenes in {args.scenes}")
        missing = [s.scene_id for s in scenes if s.truth is None]
        if missing:
            raise InputError("scenes without a truth sidecar: " + ", ".join(missing))
        return scenes
    seeds = args.seeds if args.seeds else [_seed(args)]
    scenes = []
    for seed in seeds:
        for spec in paper_case_specs(seed):
            img, truth = generate_scene(spec)
            sid = truth.scene_id if len(seeds) == 1 else f"s{seed}-{truth.scene_id}"
            scenes.append(Scene(sid, img, truth, truth.ship_center))
    return scenes


def _parse_margins(text):
    if text is None:
        return default_margin_grid()
    vals = []
    for tok in text.split(","):
        tok = tok.strip()
        if tok:
            vals.append(float(tok))
    if not vals:
        raise InputError("empty margin grid")
    return np.array(vals)


def cmd_roc(args) -> int:
    base = _run_config(args)
    priors = [p.strip() for p in args.priors.split(",") if p.strip()]
    if not priors:
        raise InputError("no priors given")
    margins = _parse_margins(args.margins)
    scenes = _suite_scenes(args)
    truths = [s.truth for s in scenes]
    out = _out_dir(args.output)
    curves = {}
    for prior in priors:
        fields = {**base.snapshot(), "prior": prior}
        if prior != base.prior:
            # lam, p and gamma given for one prior do not carry over to another
            fields.update({k: None for k in ("lam", "p", "gamma")})
        cfg = RunConfig(**fields)
        analyses = analyze_scenes(scenes, cfg, jobs=args.jobs)
        rows = roc_sweep(analyses, truths, cfg.detect_config(), margins, args.theta_tol, args.r_tol)
        write_csv(out / f"roc_{prior}.csv", ["margin", "fpr", "tpr"], rows)
        curves[cfg.prior_spec().label] = rows
        print(f"{prior}: {len(rows)} ROC points")
    if not args.no_plot:
        plot_roc(curves, out / "roc.svg")
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = _run_config(args)
    scenes = _suite_scenes(args)
    out = _out_dir(args.output)
    analyses = analyze_scenes(scenes, cfg, jobs=args.jobs)
    snap = cfg.snapshot()
    rows, total = [], DetectionCounts()
    for scene, a in zip(scenes, analyses):
        rep = a.report(cfg.detect_config(), snap)
        write_json(out / f"{scene.scene_id}_report.json", rep.to_dict())
        c = score_report(rep, scene.truth, args.theta_tol, args.r_tol)
        total = total + c
        rows.append([scene.scene_id, c.tp, c.tn, c.fp, c.fn])
    m = compute_metrics(total)
    write_csv(out / "counts.csv", ["scene_id", "tp", "tn", "fp", "fn"], rows)
    write_json(out / "metrics.json", {"counts": total.as_dict(), "metrics": m.as_dict(), "config": snap})
    write_csv(out / "table.csv", TABLE_HEADER, [_table_row(cfg.prior_spec().label, total, m)])
    print(_metrics_line(m))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wakescan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write synthetic scenes with ground truth")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--paper-suite", action="store_true", help="the 28 visibility-pattern scenes")
    which.add_argument("--no-wakes", action="store_true", help="wake-free speckle scenes")
    p.add_argument("-n", type=int, default=50, help="number of wake-free scenes (default: 50)")
    p.add_argument("-o", "--output", required=True, type=Path, help="output directory")
    p.add_argument("--size", type=int, default=128, help="image side in pixels (default: 128)")
    p.add_argument("--noise", type=float, default=0.1, help="speckle strength (default: 0.1)")
    p.add_argument("--contrast-min", dest="contrast_min", type=float, default=0.3,
                   help="smallest wake contrast magnitude (default: 0.3)")
    p.add_argument("--swell", type=float, default=0.05, help="swell amplitude (default: 0.05)")
    _add_seed_arg(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("invert", help="solve the inverse Radon problem for one image")
    p.add_argument("input", type=Path, help="input PGM")
    p.add_argument("-o", "--output", required=True, type=Path, help="output directory")
    _add_ship_args(p)
    _add_solver_args(p)
    p.add_argument("--mask-radius", dest="mask_radius", type=float,
                   help=f"ship mask radius, pixels (default: {_D.mask_radius:g})")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("detect", help="detect and confirm wakes in one image")
    p.add_argument("input", type=Path, help="input PGM")
    p.add_argument("-o", "--output", required=True, type=Path, help="output directory")
    _add_ship_args(p)
    _add_solver_args(p)
    _add_detect_args(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score reports against ground truth")
    p.add_argument("--reports", type=Path, help="directory of *_report.json files (default: none)")
    p.add_argument("--truths", type=Path, help="directory of truth JSON files (default: --reports)")
    p.add_argument("--replay-counts", dest="replay_counts", nargs=4, type=float,
                   metavar=("TP", "TN", "FP", "FN"), help="print metrics for the given counts (default: none)")
    p.add_argument("--strict", action="store_true", help="also fail on truths without a report")
    p.add_argument("--label", default="wakescan", help="method name in table.csv (default: wakescan)")
    p.add_argument("--theta-tol", dest="theta_tol", type=float, default=3.0,
                   help="angle tolerance, degrees (default: 3)")
    p.add_argument("--r-tol", dest="r_tol", type=float, default=5.0, help="offset tolerance, pixels (default: 5)")
    p.add_argument("-o", "--output", type=Path, help="output directory")
    p.set_defaults(func=cmd_eval)

    for name, func, text in (("roc", cmd_roc, "ROC curves over the F-index margin"),
                             ("batch", cmd_batch, "run detection and scoring over a suite")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--scenes", type=Path, help="directory of PGM scenes with truth sidecars "
                                                   "(default: generate the 28-scene suite)")
        p.add_argument("--seeds", type=lambda s: [int(v) for v in s.split(",")],
                       help="comma-separated suite seeds (default: --seed)")
        p.add_argument("-o", "--output", required=True, type=Path, help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (default: 1)")
        p.add_argument("--theta-tol", dest="theta_tol", type=float, default=3.0,
                       help="angle tolerance, degrees (default: 3)")
        p.add_argument("--r-tol", dest="r_tol", type=float, default=5.0,
                       help="offset tolerance, pixels (default: 5)")
        _add_seed_arg(p)
        _add_solver_args(p)
        _add_detect_args(p)
        if name == "roc":
            p.add_argument("--priors", default="gmc,l1", help="comma-separated priors (default: gmc,l1)")
            p.add_argument("--margins", help="comma-separated F-index margins "
                                             "(default: -inf, 16 points over [-0.5, 1], +inf)")
            p.add_argument("--no-plot", dest="no_plot", action="store_true", help="skip the SVG")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (SolverDivergence, FloatingPointError) as exc:
        print(f"wakescan: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, ValueError, OSError) as exc:
        print(f"wakescan: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
