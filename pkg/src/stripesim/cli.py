"""``stripe-sim`` command line.

Exit codes: 0 success, 1 usage error, 2 runtime error (missing or invalid
config, failed computation). Every output file gets a ``.manifest.json``
sibling; ``stripe-sim replay <manifest>`` regenerates the outputs from it.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, airlink, dualband, energy, rfchain
from .scenario import ParseError, ScenarioConfig, ValidationError, dumps, load_scenario, loads

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

FIBER_HEADER = ["position_m", "p_sig_dbm", "p_noise_dbm", "p_imd_dbm", "snr_db", "sdr_db", "sndr_db"]
AIR_HEADER = ["x_m", "pg_distributed_db", "serving_tx", "pg_central_steered_db",
              "pg_central_unsteered_db", "los_blocked"]
ENDTOEND_HEADER = ["x_m", "serving_ru", "chain_gain_db", "air_gain_db", "stripe_db", "direct_db"]
METRICS_HEADER = ["k", "topk_rate", "mean_gain_loss_db", "p95_gain_loss_db", "mean_slots"]
ENERGY_HEADER = ["n_active_rus", "total_w", "pj_per_bit"]
FIG4_HEADER = ["x_m", "serving_ru", "direct_db", "stripe_3db_per_m_db", "stripe_1db_per_m_db"]

# Passive RUs: Fig. 4 compares raw path gain, fiber losses included, no boosting.
FIG4_VARIANTS = {
    "stripe_3db_per_m_db": airlink.FiberVariant(3.0, 3.0, 0.0),
    "stripe_1db_per_m_db": airlink.FiberVariant(1.0, 0.5, 0.0),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    return f"{v:.6f}"


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_manifest(out: Path, command: str, params: dict, cfg: ScenarioConfig, outputs: list[Path]) -> Path:
    manifest = {
        "command": command,
        "params": params,
        "seed": cfg.seed,
        "config": dumps(cfg),
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }
    path = out.with_name(out.name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def x_grid(cfg: ScenarioConfig, step: float) -> np.ndarray:
    if not step > 0:
        raise ValueError("--grid-step must be > 0")
    n = int(math.floor(cfg.room.length_m / step + 1e-9))
    return np.round(np.arange(n + 1) * step, 12)


# ---------------------------------------------------------------------------
# commands: each takes (cfg, params) and returns the written paths
# ---------------------------------------------------------------------------

def fiber_rows(cfg: ScenarioConfig, launch_dbm=None):
    rep = rfchain.run_chain(cfg, launch_dbm)
    for t in rep.taps:
        yield [t.position_m, t.p_sig_dbm, t.p_noise_dbm, t.p_imd_dbm, t.snr_db, t.sdr_db, t.sndr_db]


def cmd_fiber(cfg, p):
    out = Path(p["out"])
    write_csv(out, FIBER_HEADER, fiber_rows(cfg, p.get("launch_dbm")))
    return [out]


def air_rows(cfg: ScenarioConfig, step: float):
    prof = airlink.serve_and_profile(cfg, x_grid(cfg, step))
    d = prof.per_mode[airlink.Mode.DISTRIBUTED]
    cs = prof.gain(airlink.Mode.CENTRAL_STEERED)
    cu = prof.gain(airlink.Mode.CENTRAL_UNSTEERED)
    for i, x in enumerate(prof.x_grid_m):
        yield [x, d.path_gain_db[i], d.serving_tx[i], cs[i], cu[i], bool(d.los_blocked[i])]


def cmd_air(cfg, p):
    out = Path(p["out"])
    write_csv(out, AIR_HEADER, air_rows(cfg, p["grid_step"]))
    return [out]


def cmd_endtoend(cfg, p):
    out = Path(p["out"])
    variant = airlink.FiberVariant(p["fiber_atten"], p["coupler_loss"], p.get("booster_gain"))
    e = airlink.end_to_end_gain_profile(cfg, x_grid(cfg, p["grid_step"]), variant)
    write_csv(out, ENDTOEND_HEADER, (
        [x, e.serving_ru[i], e.chain_gain_db[i], e.air_gain_db[i], e.stripe_db[i], e.direct_db[i]]
        for i, x in enumerate(e.x_grid_m)))
    return [out]


def dataset_header(n_features: int) -> list[str]:
    return ["x", "y"] + [f"f{i}" for i in range(n_features)] + ["ru_label", "beam_label"]


def write_dataset(path: Path, samples) -> None:
    n = len(samples[0].features)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(dataset_header(n))
        for s in samples:
            w.writerow([f"{s.position_xyz[0]:.6f}", f"{s.position_xyz[1]:.6f}"]
                       + [repr(float(v)) for v in s.features] + [s.label[0], s.label[1]])


def read_dataset(path: Path, z: float) -> list[dualband.DualBandSample]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    n = len(header) - 4
    if header != dataset_header(n):
        raise ValueError(f"{path}: header does not match the dataset schema")
    return [dualband.DualBandSample((float(r[0]), float(r[1]), z), np.array([float(v) for v in r[2:2 + n]]),
                                    (int(r[-2]), int(r[-1]))) for r in body]


def cmd_dualband_train(cfg, p):
    out = Path(p["out"])
    write_dataset(out, dualband.build_dataset(cfg, p["grid_step"]))
    return [out]


def cmd_dualband_eval(cfg, p):
    out = Path(p["out"])
    cb = dualband.make_codebook(cfg)
    if p.get("dataset"):
        data = read_dataset(Path(p["dataset"]), cfg.terminal.position_xyz[2])
    else:
        data = dualband.build_dataset(cfg, p["grid_step"], codebook=cb)
    model = dualband.train(p.get("model", "nn"), data, cb)
    metrics = dualband.evaluate(model, cfg, dualband.midpoint_grid(cfg, p["grid_step"]), p["k"])
    write_csv(out, METRICS_HEADER, ([m.k, m.topk_rate, m.mean_gain_loss_db, m.p95_gain_loss_db, m.mean_slots]
                                    for m in metrics))
    return [out]


def cmd_energy(cfg, p):
    out = Path(p["out"])
    if p.get("serving_ru") is None:
        n = energy.active_set([ru.mode for ru in cfg.rus])
    else:
        n = energy.active_set(energy.modes_for_serving(len(cfg.rus), p["serving_ru"]))
    r = energy.report(energy.PowerModel(), n)
    write_csv(out, ENERGY_HEADER, [[r.n_active_rus, r.total_power_w, r.pj_per_bit]])
    return [out]


def cmd_reproduce_fig3(cfg, p):
    out_dir = Path(p["out_dir"])
    top, bottom = out_dir / "fig3_top.csv", out_dir / "fig3_bottom.csv"
    t0 = time.perf_counter()
    rep = rfchain.run_chain(cfg)
    write_csv(bottom, FIBER_HEADER, fiber_rows(cfg))
    write_csv(top, AIR_HEADER, air_rows(cfg, p["grid_step"]))
    elapsed = time.perf_counter() - t0
    cross = "none" if rep.crossover_m is None else f"{rep.crossover_m:.1f} m"
    print(f"noise->distortion crossover: {cross}")
    print(f"end-of-stripe SNDR: {rep.end.sndr_db:.2f} dB at {rep.end.position_m:.1f} m")
    print(f"runtime: {elapsed:.3f} s", file=sys.stderr)
    return [top, bottom]


def cmd_reproduce_fig4(cfg, p):
    out = Path(p["out_dir"]) / "fig4.csv"
    xs = x_grid(cfg, p["grid_step"])
    profiles = {name: airlink.end_to_end_gain_profile(cfg, xs, v) for name, v in FIG4_VARIANTS.items()}
    first = next(iter(profiles.values()))
    write_csv(out, FIG4_HEADER, (
        [x, first.serving_ru[i], first.direct_db[i]] + [profiles[n].stripe_db[i] for n in FIG4_VARIANTS]
        for i, x in enumerate(xs)))
    return [out]


COMMANDS = {
    "fiber": cmd_fiber,
    "air": cmd_air,
    "endtoend": cmd_endtoend,
    "dualband train": cmd_dualband_train,
    "dualband eval": cmd_dualband_eval,
    "energy": cmd_energy,
    "reproduce-fig3": cmd_reproduce_fig3,
    "reproduce-fig4": cmd_reproduce_fig4,
}


def _k_list(text: str) -> list[int]:
    try:
        ks = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid k list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("k values must be >= 1")
    return ks


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stripe-sim", description="Sub-THz radio stripe simulator.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="scenario TOML file (defaults if omitted)")
        sp.add_argument("--seed", type=int, help="overrides the seed in the config")
        if out_required:
            sp.add_argument("--out", required=True, help="output CSV path")
        return sp

    sp = common(sub.add_parser("fiber", help="signal/noise/IMD budget along the fiber"))
    sp.add_argument("--launch-dbm", type=float)

    sp = common(sub.add_parser("air", help="over-the-air path gain profile"))
    sp.add_argument("--grid-step", type=float, default=0.05)

    sp = common(sub.add_parser("endtoend", help="fiber + air gain against a direct link"))
    sp.add_argument("--fiber-atten", type=float, required=True, help="dB/m")
    sp.add_argument("--coupler-loss", type=float, required=True, help="dB per coupler")
    sp.add_argument("--booster-gain", type=float, help="dB; omit for unity hop gain, 0 for passive RUs")
    sp.add_argument("--grid-step", type=float, default=0.05)

    db = sub.add_parser("dualband", help="low-band assisted RU/beam selection")
    dsub = db.add_subparsers(dest="action", required=True, parser_class=_Parser)
    sp = common(dsub.add_parser("train", help="build and write the training dataset"))
    sp.add_argument("--grid-step", type=float, default=0.25)
    sp = common(dsub.add_parser("eval", help="train, then score on the midpoint test grid"))
    sp.add_argument("--grid-step", type=float, default=0.25)
    sp.add_argument("--k", type=_k_list, default=[1, 3, 5])
    sp.add_argument("--model", choices=["nn", "ffn"], default="nn")
    sp.add_argument("--dataset", help="dataset CSV from 'dualband train' (rebuilt if omitted)")

    sp = common(sub.add_parser("energy", help="stripe power and energy per bit"))
    sp.add_argument("--serving-ru", type=int, help="0-based; RUs past it are disabled")

    for name, step in (("reproduce-fig3", 0.05), ("reproduce-fig4", 0.05)):
        sp = common(sub.add_parser(name, help=f"write the CSVs behind {name[10:]}"), out_required=False)
        sp.add_argument("--out-dir", default=".")
        sp.add_argument("--grid-step", type=float, default=step)

    sp = sub.add_parser("replay", help="re-run a .manifest.json")
    sp.add_argument("manifest")
    sp.add_argument("--into", help="write outputs into this directory instead of the recorded paths")
    return parser


def _resolve_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig() if args.config is None else load_scenario(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    return cfg


def _params(args) -> dict:
    skip = {"command", "action", "config", "seed"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def run(command: str, cfg: ScenarioConfig, params: dict) -> list[Path]:
    outputs = COMMANDS[command](cfg, params)
    anchor = outputs[0] if command.startswith("reproduce") else Path(params["out"])
    write_manifest(anchor, command, params, cfg, outputs)
    return outputs


def replay(manifest_path: str, into: str | None = None) -> list[Path]:
    m = json.loads(Path(manifest_path).read_text())
    params = dict(m["params"])
    if into is not None:
        for key in ("out", "out_dir"):
            if key in params:
                params[key] = str(Path(into) / Path(params[key]).name) if key == "out" else into
    return run(m["command"], loads(m["config"]), params)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"stripe-sim: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE

    try:
        if args.command == "replay":
            replay(args.manifest, args.into)
            return EXIT_OK
        command = args.command if args.command != "dualband" else f"dualband {args.action}"
        run(command, _resolve_config(args), _params(args))
    except FileNotFoundError as exc:
        print(f"stripe-sim: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_RUNTIME
    except ParseError as exc:
        print(f"stripe-sim: config parse error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ValidationError as exc:
        print(f"stripe-sim: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, RuntimeError) as exc:
        print(f"stripe-sim: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
