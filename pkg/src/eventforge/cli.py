"""Command-line front end.

Subcommands::

    transcode   framed (.npy), polarity (.dvs/.csv), or event (.adder)
                input -> .adder / .adderc
    info        print stream parameters and statistics as JSON
    export      reconstruct frames (npy / png / y4m / raw) or polarity
                events from a stream
    detect      corner features per reconstructed frame -> CSV
    segment     motion regions per time window -> mask PNGs + JSON
    filter-dvs  background-activity filter on a polarity stream
    simulate    photon-count frames (.npy) -> event stream
    compress    .adder -> .adderc        decompress   .adderc -> .adder
    serve       HTTP + WebSocket tuning service

Exit codes: 0 success, 2 bad parameters, 3 I/O failure, 4 unparseable
content.  ``--help`` on any subcommand lists its flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import compress as compress_mod
from . import stream as stream_mod
from .crf import resolve_preset, sensitivity_for_crf, transcode_with_feature_control
from .model import PlaneParams, SensitivityParams
from .reconstruct import (
    d_image,
    decode_accurate,
    decode_instantaneous,
    dt_image,
    export_dvs,
    write_png_sequence,
    write_raw,
    write_y4m,
)
from .simulate import SimConfig, run_sim
from .synth import DVS_DTYPE
from .transcode import reencode, transcode_dvs, transcode_frames
from .vision import filter_dvs, segment_motion, track_corners

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_FORMAT = 4

DEFAULT_PORT = int(os.environ.get("EVENTFORGE_PORT", "8707"))


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _fail_usage(msg: str) -> CliError:
    return CliError(EXIT_USAGE, msg)


def _open_binary(path: str) -> bytes:
    try:
        with open(path, "rb") as f:
            return f.read()
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc


def _load_npy(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as f:
            return np.load(f)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_FORMAT, f"{path} is not a .npy array: {exc}") from exc


def _load_dvs(path: str) -> np.ndarray:
    if path.endswith(".csv"):
        try:
            table = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
        except ValueError as exc:
            raise CliError(EXIT_FORMAT, f"bad polarity CSV {path}: {exc}") from exc
        if table.size == 0:
            return np.zeros(0, DVS_DTYPE)
        if table.shape[1] != 4:
            raise CliError(EXIT_FORMAT,
                           f"{path}: expected 4 columns x,y,p,t, "
                           f"got {table.shape[1]}")
        out = np.zeros(len(table), DVS_DTYPE)
        out["x"], out["y"] = table[:, 0], table[:, 1]
        out["p"], out["t"] = table[:, 2], table[:, 3]
        return out
    raw = _open_binary(path)
    if len(raw) % DVS_DTYPE.itemsize:
        raise CliError(EXIT_FORMAT,
                       f"{path}: {len(raw)} bytes is not a whole number of "
                       f"{DVS_DTYPE.itemsize}-byte polarity records")
    return np.frombuffer(raw, DVS_DTYPE).copy()


def _write_dvs(path: str, events: np.ndarray) -> None:
    try:
        with open(path, "wb") as f:
            f.write(np.ascontiguousarray(events).tobytes())
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _read_events(path: str) -> tuple[PlaneParams, np.ndarray]:
    data = _open_binary(path)
    try:
        if path.endswith(".adderc") or data[:4] == compress_mod.MAGIC:
            return compress_mod.decompress_stream(data)
        import io
        return stream_mod.read_stream(io.BytesIO(data))
    except stream_mod.StreamFormatError as exc:
        raise CliError(EXIT_FORMAT, f"{path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_FORMAT, f"{path}: {exc}") from exc


def _write_events(path: str, params: PlaneParams, events: np.ndarray) -> None:
    try:
        if path.endswith(".adderc"):
            compress_mod.write_compressed(path, params, events)
        else:
            stream_mod.write_stream(path, params, events)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _sensitivity(args) -> SensitivityParams:
    if getattr(args, "preset", None):
        crf = resolve_preset(args.preset)
        return sensitivity_for_crf(crf)
    if getattr(args, "crf", None) is not None:
        return sensitivity_for_crf(args.crf)
    if getattr(args, "m", None) is not None:
        m = args.m
        m_max = args.m_max if args.m_max is not None else m
        return SensitivityParams(m=m, m_max=m_max,
                                 m_v=args.m_v or 1,
                                 feature_radius=args.feature_radius or 3)
    return SensitivityParams()


def _plane(args, width, height, channels, source_kind) -> PlaneParams:
    return PlaneParams(width=width, height=height, channels=channels,
                       dt_s=args.dt_s, dt_ref=args.dt_ref, dt_max=args.dt_max,
                       source_kind=source_kind, pixel_mode=args.mode)


# ---------------------------------------------------------------------------
# subcommands


def cmd_transcode(args) -> int:
    sens = _sensitivity(args)
    path = args.input
    if path.endswith(".npy"):
        frames = _load_npy(path)
        if frames.ndim not in (3, 4):
            raise CliError(EXIT_FORMAT,
                           f"{path}: expected (frames, h, w[, 3]), "
                           f"got shape {frames.shape}")
        if frames.dtype != np.uint8:
            raise CliError(EXIT_FORMAT,
                           f"{path}: framed input must be uint8, "
                           f"got {frames.dtype}")
        channels = 1 if frames.ndim == 3 else frames.shape[-1]
        h, w = frames.shape[1:3]
        params = _plane(args, w, h, channels, "framed")
        if args.dt_ref < 255:
            print(f"warning: dt_ref={args.dt_ref} < 255 cannot represent "
                  "all 8-bit intensities losslessly; use >= 255",
                  file=sys.stderr)
        if args.features:
            crf = resolve_preset(args.preset) if args.preset else (args.crf or 0)
            events, _ = transcode_with_feature_control(frames, params, crf)
        else:
            events = transcode_frames(frames, params, sens)
    elif path.endswith(".dvs") or path.endswith(".csv"):
        dvs = _load_dvs(path)
        if args.width is None or args.height is None:
            raise _fail_usage("polarity input needs --width and --height")
        params = _plane(args, args.width, args.height, 1, "dvs")
        events = transcode_dvs(dvs, params, sens)
    elif path.endswith(".adder") or path.endswith(".adderc"):
        src_params, src_events = _read_events(path)
        params = PlaneParams(width=src_params.width, height=src_params.height,
                             channels=src_params.channels, dt_s=args.dt_s,
                             dt_ref=args.dt_ref, dt_max=args.dt_max,
                             source_kind="adder", pixel_mode=args.mode)
        events = reencode(src_events, src_params, params, sens)
    else:
        raise _fail_usage(f"unrecognised input extension on {path!r} "
                          "(expected .npy, .dvs, .csv, .adder, .adderc)")
    out = args.output
    if args.compress and not out.endswith(".adderc"):
        out += "c" if out.endswith(".adder") else ".adderc"
    _write_events(out, params, events)
    print(json.dumps({"output": out, "events": int(len(events)),
                      "bytes": os.path.getsize(out)}))
    return EXIT_OK


def cmd_info(args) -> int:
    params, events = _read_events(args.input)
    info = stream_mod.stream_info(params, events)
    if args.audit:
        info["deadline_violations"] = stream_mod.audit_deadline(params, events)
    print(json.dumps(info, indent=2))
    return EXIT_OK


def cmd_export(args) -> int:
    params, events = _read_events(args.input)
    if args.dvs_out:
        dvs = export_dvs(params, events, theta=args.theta)
        _write_dvs(args.dvs_out, dvs)
        print(json.dumps({"output": args.dvs_out, "events": int(len(dvs))}))
        return EXIT_OK
    n_frames = args.frames
    ticks = args.frame_ticks
    if args.view == "accurate":
        frames = decode_accurate(params, events, n_frames, ticks)
    elif args.view == "instant":
        frames = decode_instantaneous(params, events, n_frames, ticks)
    elif args.view == "d":
        frames = d_image(params, events, args.at_tick)[None]
    elif args.view == "dt":
        frames = dt_image(params, events, args.at_tick)[None]
    else:  # pragma: no cover - argparse choices guard this
        raise _fail_usage(f"unknown view {args.view!r}")
    out = args.output
    try:
        if out.endswith(".npy"):
            np.save(out, frames)
            written = [out]
        elif out.endswith(".y4m"):
            write_y4m(frames, out, fps=args.fps)
            written = [out]
        elif out.endswith(".raw"):
            write_raw(frames, out)
            written = [out]
        else:
            written = write_png_sequence(frames, out)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {out}: {exc}") from exc
    print(json.dumps({"frames": int(frames.shape[0]), "files": len(written)}))
    return EXIT_OK


def cmd_detect(args) -> int:
    params, events = _read_events(args.input)
    corner_log, tests = track_corners(params, events, args.frames,
                                      args.frame_ticks,
                                      threshold=args.threshold)
    lines = ["frame,x,y"]
    for i, corners in enumerate(corner_log):
        for x, y in sorted(corners):
            lines.append(f"{i},{x},{y}")
    text = "\n".join(lines) + "\n"
    if args.output == "-":
        sys.stdout.write(text)
    else:
        try:
            with open(args.output, "w") as f:
                f.write(text)
        except OSError as exc:
            raise CliError(EXIT_IO, f"cannot write {args.output}: {exc}") from exc
    print(json.dumps({"frames": len(corner_log),
                      "corners": sum(len(c) for c in corner_log),
                      "tests": tests}), file=sys.stderr)
    return EXIT_OK


def cmd_segment(args) -> int:
    params, events = _read_events(args.input)
    windows = segment_motion(params, events, window_ticks=args.window_ticks,
                             min_events=args.min_events)
    report = []
    for i, win in enumerate(windows):
        entry = {"window": win["window"], "regions": win["regions"]}
        if args.mask_pattern:
            mask = (win["mask"].astype(np.uint8)) * 255
            path = args.mask_pattern % i
            try:
                from PIL import Image
                Image.fromarray(mask).save(path)
            except OSError as exc:
                raise CliError(EXIT_IO, f"cannot write {path}: {exc}") from exc
            entry["mask_file"] = path
        report.append(entry)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def cmd_filter_dvs(args) -> int:
    dvs = _load_dvs(args.input)
    kept = filter_dvs(dvs, window=args.window,
                      support_radius=args.support_radius)
    _write_dvs(args.output, kept)
    print(json.dumps({"input_events": int(len(dvs)),
                      "kept_events": int(len(kept))}))
    return EXIT_OK


def _parse_roi_track(path: str) -> list[tuple[int, int, int, int]]:
    try:
        rows = np.loadtxt(path, delimiter=",", dtype=np.int64, ndmin=2)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_FORMAT, f"bad ROI track {path}: {exc}") from exc
    if rows.size == 0:
        return []
    if rows.shape[1] != 5:
        raise CliError(EXIT_FORMAT,
                       f"{path}: ROI track rows are sample_index,x,y,w,h")
    track: list[tuple[int, int, int, int]] = []
    by_index = {int(r[0]): (int(r[1]), int(r[2]), int(r[3]), int(r[4]))
                for r in rows}
    last = (0, 0, 0, 0)
    for i in range(max(by_index) + 1):
        last = by_index.get(i, last)
        track.append(last)
    return track


def cmd_simulate(args) -> int:
    frames = _load_npy(args.input)
    if frames.ndim != 3:
        raise CliError(EXIT_FORMAT,
                       f"{args.input}: photon input must be "
                       f"(frames, h, w), got {frames.shape}")
    if not np.issubdtype(frames.dtype, np.integer):
        raise CliError(EXIT_FORMAT,
                       f"{args.input}: photon counts must be integers, "
                       f"got {frames.dtype}")
    try:
        config = SimConfig(mode=args.sim_mode, dt_s=args.dt_s,
                           dt_ref=args.dt_ref, dt_max=args.dt_max,
                           d_start=args.d_start,
                           throttle_radius=args.throttle_radius,
                           minor_radius=args.minor_radius,
                           roi_r_max=args.roi_r_max,
                           roi_falloff=args.roi_falloff)
    except ValueError as exc:
        raise _fail_usage(str(exc)) from exc
    roi_track = _parse_roi_track(args.roi_track) if args.roi_track else None
    params, events, stats = run_sim(frames, config, roi_track)
    _write_events(args.output, params, events)
    stats = dict(stats)
    stats.pop("sidecar", None)
    stats["output"] = args.output
    print(json.dumps(stats))
    return EXIT_OK


def cmd_compress(args) -> int:
    params, events = _read_events(args.input)
    try:
        compress_mod.write_compressed(args.output, params, events,
                                      max_error=args.max_error)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.output}: {exc}") from exc
    raw = stream_mod.HEADER_SIZE + len(events) * (
        stream_mod.event_dtype(params.channels).itemsize)
    out_size = os.path.getsize(args.output)
    print(json.dumps({"raw_bytes": raw, "compressed_bytes": out_size,
                      "ratio": out_size / raw if raw else 0.0}))
    return EXIT_OK


def cmd_decompress(args) -> int:
    data = _open_binary(args.input)
    try:
        params, events = compress_mod.decompress_stream(data)
    except stream_mod.StreamFormatError as exc:
        raise CliError(EXIT_FORMAT, f"{args.input}: {exc}") from exc
    except ValueError as exc:
        raise CliError(EXIT_FORMAT, f"{args.input}: {exc}") from exc
    try:
        stream_mod.write_stream(args.output, params, events)
    except OSError as exc:
        raise CliError(EXIT_IO, f"cannot write {args.output}: {exc}") from exc
    print(json.dumps({"events": int(len(events)), "output": args.output}))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ui = args.ui
    if ui is None and os.path.isfile(os.path.join("frontend", "dist", "index.html")):
        ui = os.path.join("frontend", "dist")
    app = create_app(args.input, ui_dir=ui)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_plane_flags(p, *, dt_ref=255, dt_max=255 * 30, dt_s=7650):
    p.add_argument("--dt-ref", type=int, default=dt_ref, dest="dt_ref",
                   help="reference interval in ticks (default %(default)s)")
    p.add_argument("--dt-max", type=int, default=dt_max, dest="dt_max",
                   help="deadline interval in ticks (default %(default)s)")
    p.add_argument("--dt-s", type=int, default=dt_s, dest="dt_s",
                   help="ticks per second of stream time (default %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="eventforge",
        description="Intensity-event video codec and tooling")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transcode", help="framed/polarity/event input -> .adder")
    p.add_argument("input")
    p.add_argument("output")
    _add_plane_flags(p)
    p.add_argument("--mode", choices=("collapse", "list"), default="collapse")
    p.add_argument("--crf", type=int, choices=range(10), metavar="0..9")
    p.add_argument("--preset", help="lossless | high | medium | low")
    p.add_argument("--m", type=float, help="contrast threshold override")
    p.add_argument("--m-max", type=float, dest="m_max")
    p.add_argument("--m-v", type=int, dest="m_v")
    p.add_argument("--feature-radius", type=int, dest="feature_radius")
    p.add_argument("--features", action="store_true",
                   help="steer quality toward tracked corners")
    p.add_argument("--width", type=int, help="plane width (polarity input)")
    p.add_argument("--height", type=int, help="plane height (polarity input)")
    p.add_argument("--compress", action="store_true",
                   help="write compressed .adderc")
    p.set_defaults(fn=cmd_transcode)

    p = sub.add_parser("info", help="print stream parameters and statistics")
    p.add_argument("input")
    p.add_argument("--audit", action="store_true",
                   help="include deadline-contract audit findings")
    p.set_defaults(fn=cmd_info)

    p = sub.add_parser("export", help="reconstruct frames or polarity events")
    p.add_argument("input")
    p.add_argument("output", nargs="?", default="frame_%04d.png",
                   help=".npy / .y4m / .raw / PNG pattern with %%d")
    p.add_argument("--view", choices=("accurate", "instant", "d", "dt"),
                   default="accurate")
    p.add_argument("--frames", type=int)
    p.add_argument("--frame-ticks", type=int, dest="frame_ticks")
    p.add_argument("--at-tick", type=int, dest="at_tick",
                   help="snapshot tick for the d / dt views")
    p.add_argument("--fps", type=int, default=30)
    p.add_argument("--dvs-out", dest="dvs_out",
                   help="write polarity events instead of frames")
    p.add_argument("--theta", type=float, default=0.15,
                   help="polarity log-threshold for --dvs-out")
    p.set_defaults(fn=cmd_export)

    p = sub.add_parser("detect", help="corner features per frame -> CSV")
    p.add_argument("input")
    p.add_argument("output", nargs="?", default="-",
                   help="CSV path or - for stdout")
    p.add_argument("--frames", type=int)
    p.add_argument("--frame-ticks", type=int, dest="frame_ticks")
    p.add_argument("--threshold", type=int, default=10)
    p.set_defaults(fn=cmd_detect)

    p = sub.add_parser("segment", help="motion regions per window -> JSON/PNGs")
    p.add_argument("input")
    p.add_argument("--window-ticks", type=int, dest="window_ticks")
    p.add_argument("--min-events", type=int, default=3, dest="min_events")
    p.add_argument("--mask-pattern", dest="mask_pattern",
                   help="PNG pattern with %%d for region masks")
    p.set_defaults(fn=cmd_segment)

    p = sub.add_parser("filter-dvs", help="background-activity filter")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--window", type=int, required=True,
                   help="support window in ticks")
    p.add_argument("--support-radius", type=int, default=1,
                   dest="support_radius")
    p.set_defaults(fn=cmd_filter_dvs)

    p = sub.add_parser("simulate", help="photon frames -> event stream")
    p.add_argument("input", help=".npy photon counts (frames, h, w)")
    p.add_argument("output")
    p.add_argument("--mode", dest="sim_mode", default="constant",
                   choices=("constant", "self_adjust", "radial", "aggressive"))
    _add_plane_flags(p, dt_ref=50, dt_max=2500, dt_s=12000)
    p.add_argument("--d-start", type=int, default=8, dest="d_start")
    p.add_argument("--throttle-radius", type=int, default=1,
                   dest="throttle_radius")
    p.add_argument("--minor-radius", type=int, default=2, dest="minor_radius")
    p.add_argument("--roi-r-max", type=int, default=8, dest="roi_r_max")
    p.add_argument("--roi-falloff", type=int, default=4, dest="roi_falloff")
    p.add_argument("--roi-track", dest="roi_track",
                   help="CSV of sample_index,x,y,w,h rows")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("compress", help=".adder -> .adderc")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--max-error", type=float, default=0.0, dest="max_error",
                   help="allowed per-event timing slack in ticks")
    p.set_defaults(fn=cmd_compress)

    p = sub.add_parser("decompress", help=".adderc -> .adder")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(fn=cmd_decompress)

    p = sub.add_parser("serve", help="run the tuning service")
    p.add_argument("input", help="framed .npy or .adder/.adderc source")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--ui", help="dashboard bundle directory "
                               "(default: ./frontend/dist when present)")
    p.set_defaults(fn=cmd_serve)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"eventforge: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"eventforge: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
