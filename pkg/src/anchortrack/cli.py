"""``anchortrack`` command line: simulate, track, eval, denoise-gen, attn-check.

Exit codes: 0 success, 1 validation error (bad flag, config or record),
2 I/O error.  Every flag can also be set through an environment variable
named ``ANCHORTRACK_`` plus the flag name in upper snake case, e.g.
``ANCHORTRACK_THRESHOLD=0.3``.  Precedence is flag, then environment, then
``--config`` file, then built-in default.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import __version__
from . import io
from .attention import divergence_witness, run_self_checks
from .denoising import NoiseConfig, assign_noise_groups, build_attention_mask, generate_noise, \
    segment_labels, select_temporal_groups
from .instance_bank import BankConfig
from .metrics import MatchConfig, evaluate_tracking
from .simulator import PseudoModel, ScenarioConfig, generate_scenario, scenario_current_anchors
from .tracker import Frame, Tracker, TrackerConfig, TrackerState

ENV_PREFIX = "ANCHORTRACK_"
CONFIG_SECTIONS = ("scenario", "tracker", "bank", "noise", "match", "seed")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _json_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc.msg}") from exc


# scenario fields exposed as flags; aliases keep the short spellings working
_SCENARIO_ALIASES = {
    "num_objects": ["--objects"],
    "duration_frames": ["--frames"],
    "rng_seed": ["--seed"],
}
_SCENARIO_FLAG_NAMES = {"objects": "--scripted-objects"}


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("scenario")
    for f in dataclasses.fields(ScenarioConfig):
        primary = _SCENARIO_FLAG_NAMES.get(f.name, "--" + f.name.replace("_", "-"))
        flags = [primary] + _SCENARIO_ALIASES.get(f.name, [])
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        kw: dict = {"dest": "sc_" + f.name, "default": None}
        if isinstance(default, bool):
            kw.update(type=_bool, metavar="BOOL")
        elif isinstance(default, int):
            kw.update(type=int)
        elif isinstance(default, float) or default is None:
            kw.update(type=float)
        elif isinstance(default, str):
            kw.update(type=str)
            if f.name == "ego_path":
                kw["choices"] = ("static", "straight", "arc", "scripted")
        elif isinstance(default, tuple) and default:
            kw.update(type=float, nargs=len(default))
        else:
            kw.update(type=_json_value, metavar="JSON")
        g.add_argument(*flags, **kw)


def _add_tracker_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("tracker")
    g.add_argument("--threshold", type=float, default=None, help="id-assignment threshold (0.25)")
    g.add_argument("--decay", type=float, default=None, help="temporal confidence decay (0.6)")
    g.add_argument("--nt", "--num-temporal", dest="nt", type=int, default=None,
                   help="temporal instances carried between frames (600)")
    g.add_argument("--ncur", "--num-current", dest="ncur", type=int, default=None,
                   help="current instances per frame (900)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="anchortrack", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="store_true", help="print package and schema versions")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a ground-truth log (and optionally model outputs)")
    p.add_argument("-o", "--output", required=True, help="ground-truth JSONL")
    p.add_argument("--model-out", default=None, help="also record closed-loop pseudo-model outputs here")
    p.add_argument("--config", default=None, help="JSON or YAML run config")
    _add_scenario_flags(p)
    _add_tracker_flags(p)

    p = sub.add_parser("track", help="run the tracker over model outputs or a simulated log")
    p.add_argument("input", nargs="?", default=None, help="model-output JSONL")
    p.add_argument("--sim", default=None, help="ground-truth JSONL; outputs come from the pseudo-model")
    p.add_argument("-o", "--output", required=True, help="tracks JSONL")
    p.add_argument("--resume", default=None, help="tracker state JSON to continue from")
    p.add_argument("--bank-out", default=None, help="write the final tracker state here")
    p.add_argument("--with-bank", action="store_true", help="include the updated temporal set per frame")
    p.add_argument("--config", default=None)
    _add_tracker_flags(p)

    p = sub.add_parser("eval", help="tracking metrics for a tracks file against ground truth")
    p.add_argument("tracks")
    p.add_argument("gt")
    p.add_argument("-o", "--output", default=None, help="metrics JSON (default stdout)")
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--matcher", choices=("greedy", "hungarian"), default=None)
    p.add_argument("--score-mode", choices=("box", "track_mean"), default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("denoise-gen", help="noisy anchor groups and attention mask for a set of boxes")
    p.add_argument("boxes", help="JSONL, one anchor per line")
    p.add_argument("-o", "--output", default=None, help="JSON (default stdout)")
    p.add_argument("--groups", type=int, default=None)
    p.add_argument("--temporal", type=int, default=None)
    p.add_argument("--scale", type=float, nargs="+", default=None, help="one value or one per component")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--yaw-weight", type=float, default=None)
    p.add_argument("--dims-weight", type=float, default=None)
    p.add_argument("--num-normal", type=int, default=900, help="normal instances ahead of the noise groups")
    p.add_argument("--dense-mask", action="store_true", help="also write the mask as 0/1 rows")
    p.add_argument("--config", default=None)

    p = sub.add_parser("attn-check", help="attention invariant report on seeded random inputs")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--instances", type=int, default=12)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--head-dim", type=int, default=8)
    p.add_argument("-o", "--output", default=None, help="also write the JSON report here")

    for name, sp in sub.choices.items():
        _apply_env(sp, os.environ)
    return parser


def _env_name(action: argparse.Action) -> Optional[str]:
    longs = [s for s in action.option_strings if s.startswith("--")]
    if not longs:
        return None
    return ENV_PREFIX + longs[0][2:].replace("-", "_").upper()


def _apply_env(p: argparse.ArgumentParser, env) -> None:
    for action in p._actions:
        if isinstance(action, argparse._HelpAction):
            continue
        name = _env_name(action)
        if name is None or name not in env:
            continue
        raw = env[name]
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(raw)
            elif action.nargs not in (None, "?"):
                conv = action.type or str
                value = [conv(v) for v in raw.replace(",", " ").split()]
            else:
                value = (action.type or str)(raw)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise UsageError(f"{name}: {exc}") from exc
        action.default = value
        action.required = False


# config assembly -----------------------------------------------------------------

def load_config(path: Optional[str]) -> dict:
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        if path.endswith((".yaml", ".yml")):
            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValueError(f"{path}: malformed config ({exc})") from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise ValueError(f"{path}: unknown config sections {sorted(unknown)}")
    return data


def _section(conf: dict, name: str) -> dict:
    sec = conf.get(name, {}) or {}
    if not isinstance(sec, dict):
        raise ValueError(f"config section {name!r} must be a mapping")
    return dict(sec)


def _dataclass_from(cls, values: dict):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - known
    if unknown:
        raise ValueError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    return cls(**values)


def _tracker_and_bank(args, conf: dict, bank_fallback: Optional[dict] = None):
    tr = _section(conf, "tracker")
    if args.threshold is not None:
        tr["threshold"] = args.threshold
    if args.decay is not None:
        tr["decay"] = args.decay
    bank = dict(bank_fallback or {})
    bank.update(_section(conf, "bank"))
    if args.nt is not None:
        bank["num_temporal"] = args.nt
    if args.ncur is not None:
        bank["num_current"] = args.ncur
    return _dataclass_from(TrackerConfig, tr), _dataclass_from(BankConfig, bank)


def _scenario(args, conf: dict) -> ScenarioConfig:
    values = _section(conf, "scenario")
    if "seed" in conf:
        values.setdefault("rng_seed", conf["seed"])
    for f in dataclasses.fields(ScenarioConfig):
        v = getattr(args, "sc_" + f.name)
        if v is not None:
            values[f.name] = tuple(v) if isinstance(v, list) and f.name in ("region", "speed_range",
                                                                            "object_dims") else v
    return ScenarioConfig.from_dict(values)


# subcommands ----------------------------------------------------------------------

class _Recorder:
    """Wraps a model and keeps what it produced, for the ``--model-out`` log."""

    def __init__(self, model):
        self.model = model
        self.last = None

    def __call__(self, payload, temporal, current):
        out = self.model(payload, temporal, current)
        self.last = (len(temporal), out)
        return out


def cmd_simulate(args) -> int:
    conf = load_config(args.config)
    cfg = _scenario(args, conf)
    log = generate_scenario(cfg)
    io.write_jsonl(args.output, io.gt_records(log))
    if args.model_out:
        tcfg, bcfg = _tracker_and_bank(args, conf)
        rec = _Recorder(PseudoModel(cfg))
        tracker = Tracker(rec, scenario_current_anchors(cfg, bcfg.num_current), tcfg, bcfg)
        records = [io.header("model_output", {
            "bank": dataclasses.asdict(bcfg),
            "scenario": cfg.to_dict(),
            "tracker": dataclasses.asdict(tcfg),
        })]
        for f in log.frames:
            tracker.step(Frame(f.index, f.pose, f))
            n_t, out = rec.last
            records.append(io.model_output_record(f.index, f.pose, n_t, out))
        io.write_jsonl(args.model_out, records)
    return 0


class _Replay:
    def __init__(self, frames):
        self.frames = {idx: (n_t, outs) for idx, _, n_t, outs in frames}

    def __call__(self, index, temporal, current):
        n_t, outs = self.frames[index]
        if n_t != len(temporal):
            raise ValueError(
                f"frame {index}: outputs were recorded for {n_t} temporal instances, the bank holds {len(temporal)}"
            )
        return outs


def cmd_track(args) -> int:
    if (args.input is None) == (args.sim is None):
        raise UsageError("track: give either a model-output file or --sim, not both")
    conf = load_config(args.config)
    state = TrackerState.from_dict(io.read_json(args.resume)) if args.resume else TrackerState()
    if args.sim:
        gt = io.read_gt(args.sim)
        tcfg, bcfg = _tracker_and_bank(args, conf)
        model = PseudoModel(gt.config)
        frames = [Frame(f.index, f.pose, f) for f in gt.frames]
        current = scenario_current_anchors(gt.config, bcfg.num_current)
        source = {"kind": "sim", "scenario": gt.config.to_dict()}
    else:
        hdr, recorded = io.read_model_outputs(args.input)
        tcfg, bcfg = _tracker_and_bank(args, conf, hdr["config"].get("bank"))
        model = _Replay(recorded)
        frames = [Frame(idx, pose, idx) for idx, pose, _, _ in recorded]
        scenario = hdr["config"].get("scenario")
        cfg = ScenarioConfig.from_dict(scenario) if scenario else ScenarioConfig()
        current = scenario_current_anchors(cfg, bcfg.num_current)
        source = {"kind": "model_output", "recorded_with": hdr["config"]}
        for idx, _, n_t, outs in recorded:
            if len(outs) != n_t + bcfg.num_current:
                raise ValueError(f"frame {idx}: {len(outs)} outputs do not fit num_current={bcfg.num_current}")

    frames = [f for f in frames if f.index > state.frame_index]
    tracker = Tracker(model, current, tcfg, bcfg, state)
    records = [io.header("tracks", {
        "bank": dataclasses.asdict(bcfg),
        "resumed_from": None if not args.resume else {"frame_index": state.frame_index, "next_id": state.next_id},
        "source": source,
        "tracker": dataclasses.asdict(tcfg),
    })]
    for frame in frames:
        res = tracker.step(frame)
        records.append(io.track_record(frame.index, frame.pose, res.results,
                                       res.updated_temporal if args.with_bank else None))
    io.write_jsonl(args.output, records)
    if args.bank_out:
        io.write_json(args.bank_out, io.record("tracker_state", **tracker.state.to_dict()))
    return 0


def cmd_eval(args) -> int:
    conf = load_config(args.config)
    match = _section(conf, "match")
    for key, v in (("radius", args.radius), ("matcher", args.matcher), ("score_mode", args.score_mode)):
        if v is not None:
            match[key] = v
    if "recall_thresholds" in match:
        match["recall_thresholds"] = tuple(match["recall_thresholds"])
    mcfg = _dataclass_from(MatchConfig, match)
    _, tracks = io.read_tracks(args.tracks)
    gt = io.read_gt(args.gt)
    by_index = {f.index: f for f in gt.frames}
    t_idx = [idx for idx, _ in tracks]
    if sorted(t_idx) != sorted(by_index):
        missing = sorted(set(by_index) - set(t_idx))
        extra = sorted(set(t_idx) - set(by_index))
        raise ValueError(f"track and ground-truth frames differ (missing {missing[:5]}, extra {extra[:5]})")
    track_log = [res for _, res in tracks]
    gt_log = [list(by_index[idx].objects) for idx in t_idx]
    summary = evaluate_tracking(track_log, gt_log, mcfg)
    cfg_echo = dataclasses.asdict(mcfg)
    out = {"schema": io.schema_tag("metrics"), "config": {"match": cfg_echo}, **summary}
    _emit(args.output, out)
    return 0


def cmd_denoise_gen(args) -> int:
    conf = load_config(args.config)
    noise = _section(conf, "noise")
    if "seed" in conf:
        noise.setdefault("rng_seed", conf["seed"])
    for key, v in (("num_groups", args.groups), ("temporal_groups", args.temporal),
                   ("rng_seed", args.seed), ("yaw_weight", args.yaw_weight), ("dims_weight", args.dims_weight)):
        if v is not None:
            noise[key] = v
    if args.scale is not None:
        noise["noise_scale"] = args.scale[0] if len(args.scale) == 1 else tuple(args.scale)
    elif isinstance(noise.get("noise_scale"), list):
        noise["noise_scale"] = tuple(noise["noise_scale"])
    ncfg = _dataclass_from(NoiseConfig, noise)
    if args.num_normal < 0:
        raise ValueError("--num-normal must be >= 0")
    boxes = io.read_boxes(args.boxes)
    gs = assign_noise_groups(generate_noise(boxes, ncfg), boxes, ncfg)
    labels = segment_labels(args.num_normal, gs)
    mask = {"shape": [len(labels), len(labels)], "labels": labels.tolist(),
            "rule": "allowed iff labels equal"}
    if args.dense_mask:
        dense = build_attention_mask(args.num_normal, gs)
        mask["rows"] = ["".join("1" if v else "0" for v in row) for row in dense]
    cfg_echo = dataclasses.asdict(ncfg)
    out = {
        "schema": io.schema_tag("noise_groups"),
        "config": {"noise": cfg_echo, "num_normal": args.num_normal},
        "groups": gs.to_dict(),
        "mask": mask,
        "temporal_groups": list(select_temporal_groups(gs, ncfg)),
    }
    _emit(args.output, out)
    return 0


def cmd_attn_check(args) -> int:
    results = run_self_checks(args.seed, args.instances, args.dim, args.heads, args.head_dim)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
    wit = divergence_witness()
    report = {
        "schema": io.schema_tag("attn_check"),
        "config": {"seed": args.seed, "instances": args.instances, "dim": args.dim,
                   "heads": args.heads, "head_dim": args.head_dim},
        "checks": [dataclasses.asdict(r) for r in results],
        "witness": {k: np.asarray(v).tolist() for k, v in wit.items()},
    }
    print(io.dumps(report["witness"]))
    if args.output:
        io.write_json(args.output, report)
    return 0 if all(r.passed for r in results) else 1


def _emit(path: Optional[str], obj) -> None:
    if path:
        io.write_json(path, obj)
    else:
        sys.stdout.write(io.dumps(obj) + "\n")


COMMANDS = {
    "simulate": cmd_simulate,
    "track": cmd_track,
    "eval": cmd_eval,
    "denoise-gen": cmd_denoise_gen,
    "attn-check": cmd_attn_check,
}


def _version_text() -> str:
    lines = [f"anchortrack {__version__}"]
    lines += [f"  {io.schema_tag(k)}" for k in sorted(io.SCHEMA_VERSIONS)]
    return "\n".join(lines)


def run(argv: Optional[Sequence[str]] = None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.version:
            print(_version_text())
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 1
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
