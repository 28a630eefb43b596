"""Command line entry points: synth, validate, run, eval, serve."""

from __future__ import annotations

import argparse
import asyncio
import json
import sys
from pathlib import Path

from .alertgate import MODES, PipelineConfig
from .alertnet import default_topology, load_topology
from .clipstore import load_clip, save_clip
from .controlplane import RunSpec, run_replay
from .errors import HazardSimError
from .evalharness import (
    ClipResult,
    LatencyAccounting,
    RunLog,
    aggregate_report,
)
from .schemas import validate_document
from .server import ControlServer, serve_forever
from .synth import load_scenario, synth_clip


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hazardsim",
        description="Deterministic replay and simulation of a hazard alert pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a clip bundle from a scenario")
    p_synth.add_argument("scenario", help="scenario document (JSON)")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output bundle directory")

    p_validate = sub.add_parser("validate", help="validate a clip, config, topology or scenario")
    p_validate.add_argument("path")
    p_validate.add_argument(
        "--kind",
        choices=("auto", "clip", "config", "topology", "scenario"),
        default="auto",
    )

    p_run = sub.add_parser("run", help="replay clip(s) through the pipeline")
    p_run.add_argument("clips", nargs="+", help="clip bundle directories")
    p_run.add_argument("--config", help="pipeline config document (JSON)")
    p_run.add_argument("--topology", help="mesh topology document (JSON)")
    p_run.add_argument("--mode", choices=MODES, help="mode preset (overrides config)")
    p_run.add_argument("--clock", choices=("simulated", "realtime"), default="simulated")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--duplicate", type=int, default=2, metavar="N",
                       help="replay each stream under N node ids (default 2)")
    p_run.add_argument("--out", required=True,
                       help="run log path (single clip) or directory (several)")

    p_eval = sub.add_parser("eval", help="score run log(s) against their clips")
    p_eval.add_argument(
        "--item",
        nargs=3,
        action="append",
        required=True,
        metavar=("RUNLOG", "CLIP", "DATASET"),
        help="a (run log, clip bundle, dataset label) triple; repeatable",
    )
    p_eval.add_argument("--iou", type=float, default=0.5)
    p_eval.add_argument("--include-mesh", action="store_true")
    p_eval.add_argument("--bin-width", type=float, default=200.0)
    p_eval.add_argument("--out", help="write the structured report (JSON) here")

    p_serve = sub.add_parser("serve", help="expose the control API")
    p_serve.add_argument("--listen", default="127.0.0.1:7465", metavar="HOST:PORT")
    p_serve.add_argument("--ws-listen", metavar="HOST:PORT",
                         help="also serve the browser WebSocket channel")
    p_serve.add_argument("--config", help="initial pipeline config document")
    p_serve.add_argument("--topology", help="mesh topology document")
    p_serve.add_argument("--token", help="require this token (desk mode is open)")
    return parser


def _load_config(path: str | None, mode: str | None) -> PipelineConfig:
    config = PipelineConfig()
    if path:
        config = PipelineConfig.from_obj(json.loads(Path(path).read_text()))
    if mode:
        config = config.with_mode(mode)
    return config


def _cmd_synth(args) -> int:
    scenario = load_scenario(args.scenario)
    clip = synth_clip(scenario, args.seed)
    out = save_clip(clip, args.out)
    print(f"wrote clip {clip.clip_id}: {clip.frame_count} frames x "
          f"{len(clip.streams)} node(s) -> {out}")
    return 0


def _detect_kind(path: Path) -> str:
    if path.is_dir():
        return "clip"
    obj = json.loads(path.read_text())
    if "devices" in obj:
        return "topology"
    if "scenario_id" in obj:
        return "scenario"
    return "config"


def _cmd_validate(args) -> int:
    path = Path(args.path)
    kind = args.kind if args.kind != "auto" else _detect_kind(path)
    if kind == "clip":
        clip = load_clip(path)
        print(f"OK: clip {clip.clip_id} ({clip.frame_count} frames, "
              f"{len(clip.streams)} node(s), {len(clip.ground_truth)} person(s))")
    elif kind == "config":
        config = PipelineConfig.from_obj(json.loads(path.read_text()))
        print(f"OK: config (mode {config.mode}, threshold "
              f"{config.alert_confidence_threshold})")
    elif kind == "topology":
        topology = load_topology(path)
        print(f"OK: topology ({len(topology.devices)} device(s), connected)")
    else:
        scenario = load_scenario(path)
        print(f"OK: scenario {scenario.scenario_id} ({scenario.duration}s, "
              f"{len(scenario.persons)} person(s))")
    return 0


def _cmd_run(args) -> int:
    config = _load_config(args.config, args.mode)
    topology = load_topology(args.topology) if args.topology else default_topology()
    out = Path(args.out)
    if len(args.clips) > 1:
        out.mkdir(parents=True, exist_ok=True)
    for clip_path in args.clips:
        clip = load_clip(clip_path)
        spec = RunSpec(
            clip=clip,
            config=config,
            topology=topology,
            clock_mode=args.clock,
            stream_duplication=args.duplicate,
            seed=args.seed,
        )
        log = run_replay(spec)
        target = out / f"{clip.clip_id}.runlog.jsonl" if len(args.clips) > 1 else out
        log.save(target)
        print(f"{clip.clip_id}: {log.frames_processed()} frames, "
              f"{len(log.alerts())} alerts -> {target}")
    return 0


def _cmd_eval(args) -> int:
    acct = LatencyAccounting(include_mesh=args.include_mesh)
    results = []
    for runlog_path, clip_path, dataset in args.item:
        run = RunLog.load(runlog_path)
        clip = load_clip(clip_path)
        results.append(ClipResult.from_run(run, clip, dataset, args.iou, acct))
    report = aggregate_report(results)
    print(report.render_text())
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_obj(args.bin_width), indent=2) + "\n"
        )
        print(f"report -> {args.out}")
    return 0


def _parse_listen(value: str) -> tuple[str, int]:
    host, _, port = value.rpartition(":")
    return host or "127.0.0.1", int(port)


def _cmd_serve(args) -> int:
    config = _load_config(args.config, None)
    topology = load_topology(args.topology) if args.topology else default_topology()
    host, port = _parse_listen(args.listen)
    ws_port = _parse_listen(args.ws_listen)[1] if args.ws_listen else None
    server = ControlServer(
        config, topology, host=host, port=port, ws_port=ws_port, token=args.token
    )
    try:
        asyncio.run(serve_forever(server))
    except KeyboardInterrupt:
        pass
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "validate": _cmd_validate,
    "run": _cmd_run,
    "eval": _cmd_eval,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except HazardSimError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
