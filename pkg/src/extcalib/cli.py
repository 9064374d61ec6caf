"""Batch command line: calibrate, evaluate, synth, selftest."""
import argparse
import logging
import sys
from pathlib import Path

from . import fileio
from .errors import CalibrationError, MissingGroundTruth, ParseError
from .evaluation import evaluate_poses
from .matching import load_features
from .pipeline import PipelineConfig, run_sequence
from .ransac import RansacParams
from .synthetic import generate_ring, generate_wall

log = logging.getLogger("extcalib")


def _stem(name):
    return Path(name).name.split(".")[0]


def _feature_files(directory):
    d = Path(directory)
    files = sorted(p for p in d.iterdir() if p.name.endswith((".key", ".key.gz")))
    if not files:
        raise ParseError(f"{d}: no .key or .key.gz files")
    return files


def _config(args):
    rel = RansacParams(max_iterations=args.ransac_iterations, inlier_threshold=args.ransac_threshold,
                       confidence=args.confidence, min_inliers=args.min_inliers, rng_seed=args.seed)
    absolute = RansacParams(max_iterations=args.ransac_iterations,
                            inlier_threshold=args.absolute_threshold, confidence=args.confidence,
                            min_inliers=args.min_inliers, rng_seed=args.seed)
    return PipelineConfig(relative_ransac=rel, absolute_ransac=absolute, theta=args.theta,
                          tau_desc=args.tau_desc, tau_reproj=args.tau_reproj, guided_k=args.guided_k,
                          window=args.window, freeze_old_cameras=args.freeze_old_cameras)


def cmd_calibrate(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out / "calibrate.log", mode="w")
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.getLogger("extcalib").addHandler(handler)
    try:
        intr = fileio.read_intrinsics(args.intrinsics)
        files = _feature_files(args.features)
        names = [_stem(f.name) for f in files]
        features = [load_features(f, intr, image_id=i, name=n) for i, (f, n) in enumerate(zip(files, names))]
        rec = run_sequence(features, _config(args))
        fileio.write_poses(out, names, rec)
        fileio.export_ply(rec, out / "model.ply")
    finally:
        logging.getLogger("extcalib").removeHandler(handler)
        handler.close()
    print(f"registered {len(rec.registered)}/{len(features)} images, {len(rec.points)} points")
    return 0


def _load_gt(path, fmt):
    if fmt == "middlebury":
        p = Path(path)
        if p.is_dir():
            pars = sorted(p.glob("*_par.txt")) or sorted(p.glob("*par*.txt"))
            if not pars:
                raise ParseError(f"{p}: no *_par.txt file")
            p = pars[0]
        cams = fileio.load_middlebury_par(p)
    else:
        cams = fileio.load_strecha_dir(path)
    return {_stem(c.name): c.pose for c in cams}


def cmd_evaluate(args):
    est = fileio.read_poses(args.est)
    gt = _load_gt(args.gt, args.format)
    rows = [(i, n, p) for i, n, p in est if p is not None]
    missing = [n for _, n, _ in rows if _stem(n) not in gt]
    if missing or len(rows) < 2:
        raise MissingGroundTruth(f"no ground truth for: {', '.join(missing) or 'fewer than two cameras'}")
    report = evaluate_poses([i for i, _, _ in rows], [p for _, _, p in rows],
                            [gt[_stem(n)] for _, n, _ in rows])
    report.to_csv(args.out)
    print(f"scale {report.scale:.6g}; max R_err {report.r_err.max():.3g} deg, "
          f"max T_err {report.t_err.max():.3g} deg, max C_err {report.c_err.max():.3g}")
    return 0


def cmd_synth(args):
    common = dict(noise_sigma=args.noise, outlier_rate=args.outliers, seed=args.seed)
    if args.kind == "ring":
        scene = generate_ring(args.cameras or 10, args.step or 7.5, args.points or 500, **common)
    else:
        scene = generate_wall(args.cameras or 8, args.step or 0.5, args.points or 400,
                              relief=args.relief, **common)
    fileio.export_scene(scene, args.out)
    print(f"wrote {scene.n_cameras} images to {args.out}")
    return 0


def cmd_selftest(args):
    from .selftest import run_selftest
    return 0 if run_selftest(quick=not args.full) else 1


def build_parser():
    p = argparse.ArgumentParser(prog="extcalib", description="Extrinsic calibration of calibrated image sequences.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="recover camera poses from feature files")
    c.add_argument("--features", required=True, help="directory of .key/.key.gz files, processed in name order")
    c.add_argument("--intrinsics", required=True, help="K rows plus optional k1 k2 p1 p2 row")
    c.add_argument("--out", required=True)
    c.add_argument("--theta", type=float, default=1.25, help="ratio test: second >= theta * nearest")
    c.add_argument("--tau-desc", type=float, default=None, help="default: 0.35 x mean descriptor norm")
    c.add_argument("--tau-reproj", type=float, default=2e-3, help="normalized units")
    c.add_argument("--ransac-threshold", type=float, default=1e-3, help="relative pose, normalized units")
    c.add_argument("--absolute-threshold", type=float, default=2e-3, help="absolute pose, normalized units")
    c.add_argument("--ransac-iterations", type=int, default=2000)
    c.add_argument("--confidence", type=float, default=0.999)
    c.add_argument("--min-inliers", type=int, default=15)
    c.add_argument("--guided-k", type=int, default=20)
    c.add_argument("--window", type=int, default=5)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--freeze-old-cameras", action="store_true", help="bundle adjust only the newest camera")
    c.set_defaults(func=cmd_calibrate)

    e = sub.add_parser("evaluate", help="compare estimated poses with ground truth")
    e.add_argument("--est", required=True)
    e.add_argument("--gt", required=True)
    e.add_argument("--format", required=True, choices=["middlebury", "strecha"])
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("synth", help="write a synthetic dataset")
    s.add_argument("--kind", required=True, choices=["ring", "wall"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--cameras", type=int)
    s.add_argument("--points", type=int)
    s.add_argument("--step", type=float, help="degrees (ring) or world units (wall)")
    s.add_argument("--noise", type=float, default=0.0, help="pixels")
    s.add_argument("--outliers", type=float, default=0.0)
    s.add_argument("--relief", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("selftest", help="run the built-in oracle checks")
    t.add_argument("--full", action="store_true")
    t.set_defaults(func=cmd_selftest)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.INFO if args.verbose else logging.WARNING
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s")
    for h in logging.getLogger().handlers:
        h.setLevel(level)
    # the calibrate log file always gets INFO records
    logging.getLogger("extcalib").setLevel(logging.INFO)
    try:
        return args.func(args)
    except MissingGroundTruth as exc:
        print(f"error: MissingGroundTruth: {exc}", file=sys.stderr)
    except ParseError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except CalibrationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    except OSError as exc:
        print(f"error: IoError: {exc}", file=sys.stderr)
    return 1


if __name__ == "__main__":
    sys.exit(main())
