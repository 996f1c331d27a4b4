"""Command line surface: degrade, train, sr, eval, stats.

Only the standard library is imported at module level so that --threads can
pin the BLAS thread count before numpy loads.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from ._version import __version__

_THREAD_VARS = (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
    "VECLIB_MAXIMUM_THREADS",
)

_DEPTH_SUFFIXES = (".pfm", ".pgm")

_EVAL_METHODS = ("nn", "bicubic", "cnn_only", "full", "full_color")


@dataclass
class RunManifest:
    """What ran, on what, with which knobs; written next to every output."""

    command: str
    inputs: list
    outputs: list
    config: dict
    seed: int
    version: str
    timings: dict = field(default_factory=dict)

    def write(self, path: Path) -> None:
        Path(path).write_text(json.dumps(vars(self), indent=2, sort_keys=True) + "\n")


@dataclass
class EvalTable:
    """Per-image, per-method metric rows."""

    rows: list

    def to_csv(self) -> str:
        lines = ["image,method,rmse,mae,ssim"]
        for r in self.rows:
            lines.append(
                f"{r['image']},{r['method']},{r['rmse']:.10g},{r['mae']:.10g},{r['ssim']:.10g}"
            )
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        return json.dumps(self.rows, indent=2, sort_keys=True) + "\n"


def _build_parser(suppress: bool) -> argparse.ArgumentParser:
    """The CLI. With suppress=True every default becomes SUPPRESS, which lets
    main() tell explicitly passed flags apart from defaults (config files sit
    between the two)."""

    def d(value):
        return argparse.SUPPRESS if suppress else value

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=d(0), help="master RNG seed")
    common.add_argument("--threads", type=int, default=d(None),
                        help="pin BLAS/OpenMP thread count")
    common.add_argument("--out-dir", default=d("."), help="directory for outputs")
    common.add_argument("--config", default=d(None),
                        help="key=value file; explicit flags win over it")

    p = argparse.ArgumentParser(
        prog="ddsr",
        description="Depth super-resolution: progressive conv mapping plus "
                    "guided energy refinement.",
        parents=[common],
    )
    sub = p.add_subparsers(dest="command", required=True)

    dg = sub.add_parser("degrade", parents=[common],
                        help="downsample an HR depth map")
    dg.add_argument("--in", dest="input", default=d(None), help="HR depth file")
    dg.add_argument("--factor", type=int, default=d(None))
    dg.add_argument("--method", default=d("decimate"), choices=None if suppress else ("decimate", "box"))
    dg.add_argument("--out", default=d(None), help="LR output file")

    tr = sub.add_parser("train", parents=[common],
                        help="train a progressive network on an HR corpus")
    tr.add_argument("--in", dest="input", default=d(None), help="directory of HR depth files")
    tr.add_argument("--factor", type=int, default=d(None))
    tr.add_argument("--units", type=int, default=d(2))
    tr.add_argument("--out", default=d(None), help="weights file (default out-dir/weights.ddsr)")
    tr.add_argument("--epochs", type=int, default=d(50))
    tr.add_argument("--batch", type=int, default=d(16))
    tr.add_argument("--learning-rate", type=float, default=d(1e-4))
    tr.add_argument("--sub-image", type=int, default=d(33))
    tr.add_argument("--stride", type=int, default=d(14))
    tr.add_argument("--degrade-method", default=d("decimate"))

    sr = sub.add_parser("sr", parents=[common], help="super-resolve an LR depth map")
    sr.add_argument("--in", dest="input", default=d(None), help="LR depth file")
    sr.add_argument("--weights", default=d(None))
    sr.add_argument("--factor", type=int, default=d(None))
    sr.add_argument("--out", default=d(None), help="HR output file (default out-dir/sr.pfm)")
    sr.add_argument("--guide", default=d(None), help="registered color PNG for guidance")
    sr.add_argument("--no-refine", action="store_true", default=d(False))
    sr.add_argument("--dump-stages", action="store_true", default=d(False))
    sr.add_argument("--lambda1", type=float, default=d(0.7))
    sr.add_argument("--lambda2", type=float, default=d(0.7))
    sr.add_argument("--window", type=int, default=d(7))
    sr.add_argument("--sigma-floor", type=float, default=d(1e-4))
    sr.add_argument("--irls-iters", type=int, default=d(10))
    sr.add_argument("--irls-tol", type=float, default=d(1e-6))
    sr.add_argument("--cg-tol", type=float, default=d(1e-8))
    sr.add_argument("--cg-max-iters", type=int, default=d(2000))
    sr.add_argument("--tv-epsilon", type=float, default=d(1e-4))

    ev = sub.add_parser("eval", parents=[common],
                        help="degrade ground truth and score reconstruction methods")
    ev.add_argument("--gt", nargs="+", default=d(None), help="ground-truth HR depth files")
    ev.add_argument("--factor", type=int, default=d(None))
    ev.add_argument("--weights", default=d(None))
    ev.add_argument("--methods", default=d("nn,bicubic,cnn_only,full"))
    ev.add_argument("--degrade-method", default=d("decimate"))
    ev.add_argument("--guide-dir", default=d(None),
                    help="directory of <image>.png color guides for full_color")
    ev.add_argument("--lambda1", type=float, default=d(0.7))
    ev.add_argument("--lambda2", type=float, default=d(0.7))
    ev.add_argument("--window", type=int, default=d(7))
    ev.add_argument("--sigma-floor", type=float, default=d(1e-4))

    st = sub.add_parser("stats", parents=[common],
                        help="gradient histogram and Laplace fit of a corpus")
    st.add_argument("--in", dest="input", default=d(None), help="directory of depth files")
    st.add_argument("--color", default=d(None), help="directory of color PNGs")
    st.add_argument("--bins", type=int, default=d(200))

    return p


def _parse_config_file(path: str) -> dict:
    """key=value lines; # starts a comment; values coerced to int/float/bool."""
    from .errors import ConfigError, IoError

    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read config file {path}: {exc}") from exc
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        raw = raw.strip("\"'")
        values[key.replace("-", "_")] = _coerce(raw)
    return values


def _coerce(raw: str):
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    for cast in (int, float):
        try:
            return cast(raw)
        except ValueError:
            pass
    return raw


def _apply_config(args, argv) -> None:
    from .errors import ConfigError

    explicit = vars(_build_parser(suppress=True).parse_args(argv))
    known = set(vars(args))
    for key, value in _parse_config_file(args.config).items():
        if key == "in":
            key = "input"
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        if key not in explicit:
            setattr(args, key, value)


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _save_format(path: Path) -> str:
    return "pgm16" if path.suffix.lower() == ".pgm" else "pfm"


def _config_snapshot(args) -> dict:
    skip = {"command", "config"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _list_depth_files(dirpath: str) -> list:
    from .errors import DataError, IoError

    root = Path(dirpath)
    if not root.is_dir():
        raise IoError(f"not a directory: {dirpath}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in _DEPTH_SUFFIXES)
    if not files:
        raise DataError(f"no depth files (*.pfm, *.pgm) in {dirpath}")
    return files


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_degrade(args) -> int:
    from . import depth_io, resample

    out_dir = _out_dir(args)
    t0 = time.perf_counter()
    hr = depth_io.load_depth(args.input)
    depth_io.check_scale_factor(args.factor)
    lr = resample.degrade(hr, args.factor, method=args.method)
    out = Path(args.out)
    depth_io.save_depth(lr, out, format=_save_format(out))
    RunManifest(
        command="degrade",
        inputs=[args.input],
        outputs=[str(out)],
        config=_config_snapshot(args),
        seed=args.seed,
        version=__version__,
        timings={"total": time.perf_counter() - t0},
    ).write(out_dir / "manifest_degrade.json")
    return 0


def cmd_train(args) -> int:
    from . import depth_io, figures, network

    out_dir = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    files = _list_depth_files(args.input)
    corpus = [depth_io.load_depth(p) for p in files]
    depth_io.check_scale_factor(args.factor)
    timings["load"] = time.perf_counter() - t0

    cfg = network.TrainConfig(
        sub_image=args.sub_image,
        stride=args.stride,
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        batch=args.batch,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    net, curves = network.train_progressive(
        corpus, args.factor, args.units, cfg, degrade_method=args.degrade_method
    )
    timings["train"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    weights_path = Path(args.out) if args.out else out_dir / "weights.ddsr"
    network.save_weights(net, weights_path)
    losses_path = out_dir / "loss_curves.json"
    losses_path.write_text(
        json.dumps({f"unit_{i + 1}": c for i, c in enumerate(curves)},
                   indent=2, sort_keys=True) + "\n"
    )
    curve_fig = out_dir / "loss_curves.png"
    figures.save_loss_curves(curves, curve_fig)
    timings["write"] = time.perf_counter() - t0

    RunManifest(
        command="train",
        inputs=[str(p) for p in files],
        outputs=[str(weights_path), str(losses_path), str(curve_fig)],
        config=_config_snapshot(args),
        seed=args.seed,
        version=__version__,
        timings=timings,
    ).write(out_dir / "manifest_train.json")
    return 0


def _refine_output(dbar, guide_path, args):
    """Assemble the smoothness system and run IRLS; returns (map, trace, mode)."""
    from . import depth_io, refine, smoothness
    from .errors import DimensionError

    if guide_path:
        guide = depth_io.load_guidance(guide_path)
        if guide.values.shape != dbar.shape:
            raise DimensionError(
                f"guide is {guide.values.shape[1]}x{guide.values.shape[0]}, "
                f"upscaled depth is {dbar.width}x{dbar.height}"
            )
        mode = "color"
    else:
        guide = depth_io.guidance_from_depth(dbar)
        mode = "self"
    scfg = smoothness.SmoothnessConfig(
        window=args.window, sigma_floor=args.sigma_floor, use_guidance=mode
    )
    rcfg = refine.RefineConfig(
        lambda1=args.lambda1,
        lambda2=args.lambda2,
        irls_iters=args.irls_iters,
        irls_tol=args.irls_tol,
        cg_tol=args.cg_tol,
        cg_max_iters=args.cg_max_iters,
        tv_epsilon=args.tv_epsilon,
    )
    system = smoothness.assemble_system(dbar, guide, scfg)
    refined, trace = refine.irls_refine(dbar, system, rcfg)
    return refined, trace, mode


def cmd_sr(args) -> int:
    from . import depth_io, figures, network

    out_dir = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    lr = depth_io.load_depth(args.input)
    depth_io.check_scale_factor(args.factor)
    net = network.load_weights(args.weights)
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    dbar, stages = network.progressive_forward(lr, args.factor, net, collect_stages=True)
    timings["network"] = time.perf_counter() - t0

    outputs = []
    guidance_mode = "none"
    trace = None
    if args.no_refine:
        result = dbar
    else:
        t0 = time.perf_counter()
        result, trace, guidance_mode = _refine_output(dbar, args.guide, args)
        timings["refine"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    out = Path(args.out) if args.out else out_dir / "sr.pfm"
    depth_io.save_depth(result, out, format=_save_format(out))
    outputs.append(str(out))
    if trace is not None:
        trace_path = out_dir / "refine_trace.jsonl"
        trace_path.write_text(trace.to_jsonl() + "\n")
        energy_fig = out_dir / "energy_trace.png"
        figures.save_energy_trace(trace.records, energy_fig)
        outputs += [str(trace_path), str(energy_fig)]
    if args.dump_stages:
        names = ["bicubic"] + [f"unit{i}" for i in range(1, len(stages))]
        panel_maps = list(stages)
        panel_names = list(names)
        for name, stage in zip(names, stages):
            path = out_dir / f"stage_{name}.pfm"
            depth_io.save_depth(stage, path)
            outputs.append(str(path))
        if not args.no_refine:
            path = out_dir / "stage_refined.pfm"
            depth_io.save_depth(result, path)
            outputs.append(str(path))
            panel_maps.append(result)
            panel_names.append("refined")
        panel_fig = out_dir / "stages.png"
        figures.save_depth_panel(panel_maps, panel_names, panel_fig)
        outputs.append(str(panel_fig))
    timings["write"] = time.perf_counter() - t0

    config = _config_snapshot(args)
    config["guidance_mode"] = guidance_mode
    RunManifest(
        command="sr",
        inputs=[args.input, args.weights] + ([args.guide] if args.guide else []),
        outputs=outputs,
        config=config,
        seed=args.seed,
        version=__version__,
        timings=timings,
    ).write(out_dir / "manifest_sr.json")
    return 0


def cmd_eval(args) -> int:
    from . import depth_io, figures, metrics, network, resample
    from .errors import ConfigError

    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in _EVAL_METHODS:
            raise ConfigError(f"unknown method {m!r}; choose from {', '.join(_EVAL_METHODS)}")
    needs_net = any(m in ("cnn_only", "full", "full_color") for m in methods)
    if needs_net and not args.weights:
        raise ConfigError("--weights is required for cnn_only/full/full_color")
    net = network.load_weights(args.weights) if needs_net else None

    out_dir = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    rows = []
    for gt_path in args.gt:
        gt = depth_io.load_depth(gt_path)
        gtc = resample.crop_divisible(gt, args.factor)
        lr = resample.degrade(gtc, args.factor, method=args.degrade_method)
        stem = Path(gt_path).stem
        preds = {}
        for m in methods:
            if m == "nn":
                preds[m] = resample.resize_nearest(lr, gtc.width, gtc.height)
            elif m == "bicubic":
                preds[m] = resample.resize_bicubic(lr, gtc.width, gtc.height)
            elif m == "cnn_only":
                preds[m] = network.progressive_forward(lr, args.factor, net)
            elif m in ("full", "full_color"):
                dbar = network.progressive_forward(lr, args.factor, net)
                guide_path = None
                if m == "full_color":
                    if not args.guide_dir:
                        raise ConfigError("full_color needs --guide-dir")
                    guide_path = str(Path(args.guide_dir) / f"{stem}.png")
                preds[m], _, _ = _refine_output(dbar, guide_path, _SrDefaults(args))
        for m in methods:
            report = metrics.evaluate_pair(preds[m], gtc)
            rows.append(
                {"image": stem, "method": m, "rmse": report.rmse,
                 "mae": report.mae, "ssim": report.ssim}
            )
    timings["evaluate"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    table = EvalTable(rows)
    csv_path = out_dir / "eval.csv"
    csv_path.write_text(table.to_csv())
    json_path = out_dir / "eval.json"
    json_path.write_text(table.to_json())
    fig_path = out_dir / "eval_rmse.png"
    figures.save_eval_bars(rows, fig_path)
    timings["write"] = time.perf_counter() - t0

    RunManifest(
        command="eval",
        inputs=list(args.gt),
        outputs=[str(csv_path), str(json_path), str(fig_path)],
        config=_config_snapshot(args),
        seed=args.seed,
        version=__version__,
        timings=timings,
    ).write(out_dir / "manifest_eval.json")
    return 0


class _SrDefaults:
    """Adapter giving cmd_eval's refinement the sr-command knob names."""

    def __init__(self, args):
        self.lambda1 = args.lambda1
        self.lambda2 = args.lambda2
        self.window = args.window
        self.sigma_floor = args.sigma_floor
        self.irls_iters = 10
        self.irls_tol = 1e-6
        self.cg_tol = 1e-8
        self.cg_max_iters = 2000
        self.tv_epsilon = 1e-4


def _unit_range(depth):
    """Depth map min-max normalized to [0,1] unless it already fits."""
    import numpy as np

    from . import depth_io

    v = depth.values
    if v.min() >= 0.0 and v.max() <= 1.0:
        return depth
    lo, hi = float(v.min()), float(v.max())
    if hi <= lo:
        return depth_io.DepthMap(np.full(v.shape, 0.5))
    return depth_io.DepthMap((v - lo) / (hi - lo))


def cmd_stats(args) -> int:
    from . import depth_io, figures, metrics
    from .errors import DataError

    out_dir = _out_dir(args)
    timings = {}
    t0 = time.perf_counter()
    files = _list_depth_files(args.input)
    depth_maps = [_unit_range(depth_io.load_depth(p)) for p in files]
    report = {}
    figures_out = []
    hist, edges, fit = metrics.gradient_histogram(depth_maps, args.bins)
    report["depth"] = {
        "location": fit.location,
        "scale": fit.scale,
        "fit_rmse": fit.fit_rmse,
        "histogram": hist.tolist(),
        "bin_edges": edges.tolist(),
    }
    fig = out_dir / "gradient_hist_depth.png"
    figures.save_gradient_histogram(hist, edges, fit, fig, title="depth gradients")
    figures_out.append(str(fig))

    color_files = []
    if args.color:
        color_files = sorted(Path(args.color).glob("*.png"))
        if not color_files:
            raise DataError(f"no PNG files in {args.color}")
        color_maps = [
            depth_io.DepthMap(depth_io.load_guidance(p).values) for p in color_files
        ]
        hist, edges, fit = metrics.gradient_histogram(color_maps, args.bins)
        report["color"] = {
            "location": fit.location,
            "scale": fit.scale,
            "fit_rmse": fit.fit_rmse,
            "histogram": hist.tolist(),
            "bin_edges": edges.tolist(),
        }
        fig = out_dir / "gradient_hist_color.png"
        figures.save_gradient_histogram(hist, edges, fit, fig, title="color gradients")
        figures_out.append(str(fig))
    timings["total"] = time.perf_counter() - t0

    json_path = out_dir / "stats.json"
    json_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    RunManifest(
        command="stats",
        inputs=[str(p) for p in files] + [str(p) for p in color_files],
        outputs=[str(json_path)] + figures_out,
        config=_config_snapshot(args),
        seed=args.seed,
        version=__version__,
        timings=timings,
    ).write(out_dir / "manifest_stats.json")
    return 0


# Required per subcommand, enforced only after the config file is merged so a
# file can supply them.
_REQUIRED = {
    "degrade": ("input", "factor", "out"),
    "train": ("input", "factor"),
    "sr": ("input", "weights", "factor"),
    "eval": ("gt", "factor"),
    "stats": ("input",),
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = _build_parser(suppress=False)
    args = parser.parse_args(argv)

    from .errors import DsrError

    handlers = {
        "degrade": cmd_degrade,
        "train": cmd_train,
        "sr": cmd_sr,
        "eval": cmd_eval,
        "stats": cmd_stats,
    }
    try:
        if args.config:
            _apply_config(args, argv)
        for dest in _REQUIRED[args.command]:
            if getattr(args, dest) is None:
                flag = "--in" if dest == "input" else "--" + dest.replace("_", "-")
                parser.error(f"{args.command}: missing required option {flag}")
        if args.threads is not None:
            if args.threads < 1:
                parser.error("--threads must be >= 1")
            for var in _THREAD_VARS:
                os.environ[var] = str(args.threads)
        return handlers[args.command](args)
    except DsrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
