"""``affectfuse`` command line: fuse, simulate, evaluate, validate-config.

Exit codes: 0 success, 1 invalid configuration / parameters / evaluation
inputs, 2 malformed observation input (the line number is reported).
Precedence for settings is flags > config files > built-in defaults.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .errors import AffectFuseError, ConfigError, MalformedInput
from .fusion import FusionConfig, default_config, validate_config
from .mapping import MappingTable, default_mapping, validate_mapping
from .records import atomic_write_text, dumps, read_ground_truth, read_observations, write_jsonl
from .sessions import (
    DEFAULT_WINDOW_MS,
    WindowSpec,
    build_timelines,
    render_rollups,
    render_timelines,
    rollups_from_timelines,
)
from .simulator import (
    evaluate_streams,
    generate,
    load_params,
    params_from_json_obj,
)

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_MALFORMED = 2

OBSERVATIONS_FILE = "observations.jsonl"
GROUND_TRUTH_FILE = "ground_truth.jsonl"
PARAMS_FILE = "params.json"
MANIFEST_FILE = "manifest.json"


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _digest(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def _load_configs(args):
    """Returns ``(table, config, digests)``; file digests are over raw bytes."""
    digests = {}
    try:
        if args.mapping:
            raw = Path(args.mapping).read_bytes()
            table = MappingTable.from_json(raw.decode("utf-8"))
        else:
            table = default_mapping()
            raw = dumps(table.to_json_obj()).encode()
        digests["mapping"] = _digest(raw)
        if args.fusion_config:
            raw = Path(args.fusion_config).read_bytes()
            config = FusionConfig.from_json(raw.decode("utf-8"))
        else:
            config = default_config()
            raw = dumps(config.to_json_obj()).encode()
        digests["fusion_config"] = _digest(raw)
    except (ConfigError, OSError, UnicodeDecodeError) as exc:
        raise _Fail(EXIT_INVALID, f"config error: {exc}") from None
    return table, config, digests


def _require_valid(table, config) -> None:
    findings = validate_mapping(table) + validate_config(config)
    if findings:
        raise _Fail(EXIT_INVALID, "invalid configuration:\n" + "\n".join(f"  {f}" for f in findings))


def _window_spec(args, default_width=DEFAULT_WINDOW_MS) -> WindowSpec:
    width = args.window_ms if args.window_ms is not None else default_width
    stride = args.stride_ms if args.stride_ms is not None else width
    try:
        return WindowSpec(width, stride)
    except ConfigError as exc:
        raise _Fail(EXIT_INVALID, str(exc)) from None


def _write_manifest(out: Path, command: str, digests: dict, inputs: list, outputs: list,
                    seed=None) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "config_digests": digests,
        "inputs": [str(p) for p in inputs],
        "out_dir": str(out),
        "outputs": sorted(outputs),
        "seed": seed,
        "created_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write_text(out / MANIFEST_FILE, json.dumps(manifest, indent=2) + "\n")


# ---------------------------------------------------------------------------


def cmd_fuse(args) -> int:
    table, config, digests = _load_configs(args)
    _require_valid(table, config)
    spec = _window_spec(args)
    try:
        observations = read_observations(args.input)
    except MalformedInput as exc:
        raise _Fail(EXIT_MALFORMED, f"malformed input: {exc}") from None
    except OSError as exc:
        raise _Fail(EXIT_MALFORMED, f"cannot read input: {exc}") from None
    timelines = build_timelines(observations, config, table, spec)
    rollups = rollups_from_timelines(timelines)
    timeline_records = [r for tl in timelines for r in tl.records()]
    rollup_records = [r.to_record() for r in rollups]
    text = ("# timeline\n" + render_timelines(timelines)
            + "\n# classroom\n" + render_rollups(rollups))

    out = Path(args.out)
    write_jsonl(out / "timeline.jsonl", timeline_records)
    write_jsonl(out / "rollup.jsonl", rollup_records)
    atomic_write_text(out / "summary.txt", text)
    _write_manifest(out, "fuse", digests, [args.input],
                    ["timeline.jsonl", "rollup.jsonl", "summary.txt"])
    if args.format == "jsonl":
        for rec in timeline_records:
            print(dumps(rec))
    else:
        print(text, end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    overrides = {"students": args.students, "ticks": args.ticks, "seed": args.seed,
                 "step_ms": args.window_ms}
    try:
        if args.params:
            params = load_params(args.params, **overrides)
        else:
            params = params_from_json_obj({}, **overrides)
    except (ConfigError, OSError) as exc:
        raise _Fail(EXIT_INVALID, f"invalid parameters: {exc}") from None
    table, _, digests = _load_configs(args)
    findings = validate_mapping(table)
    if findings:
        raise _Fail(EXIT_INVALID, "invalid mapping:\n" + "\n".join(f"  {f}" for f in findings))
    session = generate(params.students, params.ticks, params.process, params.emission,
                       table, params.seed)
    out = Path(args.out)
    write_jsonl(out / OBSERVATIONS_FILE, (o.to_record() for o in session.observations()))
    write_jsonl(out / GROUND_TRUTH_FILE, session.ground_truth_records())
    atomic_write_text(out / PARAMS_FILE, json.dumps(params.to_json_obj(), indent=2) + "\n")
    _write_manifest(out, "simulate", {"mapping": digests["mapping"]},
                    [args.params] if args.params else [],
                    [OBSERVATIONS_FILE, GROUND_TRUTH_FILE, PARAMS_FILE], seed=params.seed)
    print(f"wrote {params.students} students x {params.ticks} ticks to {out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    table, config, digests = _load_configs(args)
    _require_valid(table, config)
    session = Path(args.session)
    obs_path, gt_path = session / OBSERVATIONS_FILE, session / GROUND_TRUTH_FILE
    for p in (gt_path, obs_path):
        if not p.is_file():
            raise _Fail(EXIT_INVALID, f"missing {p.name} in {session}")
    step = args.window_ms
    if step is None:
        step = DEFAULT_WINDOW_MS
        if (session / PARAMS_FILE).is_file():
            try:
                step = load_params(session / PARAMS_FILE).process.step
            except ConfigError as exc:
                raise _Fail(EXIT_INVALID, f"invalid {PARAMS_FILE}: {exc}") from None
    try:
        observations = read_observations(obs_path)
        truth = read_ground_truth(gt_path)
    except MalformedInput as exc:
        raise _Fail(EXIT_MALFORMED, f"malformed input: {exc}") from None
    try:
        report = evaluate_streams(observations, truth, config, table, step)
    except ConfigError as exc:
        raise _Fail(EXIT_INVALID, str(exc)) from None

    out = Path(args.out) if args.out else session / "evaluation"
    text = report.render()
    atomic_write_text(out / "evaluation.json", json.dumps(report.to_json_obj(), indent=2) + "\n")
    atomic_write_text(out / "evaluation.txt", text)
    _write_manifest(out, "evaluate", digests, [str(obs_path), str(gt_path)],
                    ["evaluation.json", "evaluation.txt"])
    if args.format == "jsonl":
        print(dumps(report.to_json_obj()))
    else:
        print(text, end="")
    return EXIT_OK


def cmd_validate_config(args) -> int:
    table, config, digests = _load_configs(args)
    findings = validate_mapping(table) + validate_config(config)
    for f in findings:
        print(f"finding: {f}")
    print(f"{len(findings)} finding(s)")
    if args.out:
        inputs = [p for p in (args.mapping, args.fusion_config) if p]
        _write_manifest(Path(args.out), "validate-config", digests, inputs, [])
    return EXIT_OK if not findings else EXIT_INVALID


# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser, *, out_required: bool = False) -> None:
    p.add_argument("--mapping", metavar="PATH", help="mapping table JSON (replaces the default)")
    p.add_argument("--fusion-config", metavar="PATH", help="fusion config JSON")
    p.add_argument("--window-ms", type=int, metavar="N", help=f"window width (default {DEFAULT_WINDOW_MS})")
    p.add_argument("--stride-ms", type=int, metavar="N", help="window stride (default: width)")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--out", metavar="DIR", required=out_required)
    p.add_argument("--format", choices=("jsonl", "text"), default="text", help="stdout format")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affectfuse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fuse", help="fuse an observation JSONL stream into timelines and rollups")
    p.add_argument("input", help="observation JSONL file")
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("simulate", help="generate a synthetic classroom session")
    p.add_argument("--params", metavar="PATH", help="simulation parameters JSON")
    p.add_argument("--students", type=int)
    p.add_argument("--ticks", type=int)
    _add_common(p, out_required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score single-cue and fused decisions against ground truth")
    p.add_argument("session", help="directory holding observations.jsonl and ground_truth.jsonl")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("validate-config", help="check mapping and fusion configs")
    _add_common(p)
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except AffectFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
