import argparse
import json
import logging
import sys
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.baselines.wknn import WknnLocalizer
from src.evaluation.manifest import build_run_manifest, record_files, write_manifest
from src.evaluation.metrics import cdf_table, compute_metrics
from src.fusion.filters import FilterConfig
from src.fusion.methods import FusionInputs, MethodRegistry, run_method
from src.fusion.prior_map import build_prior, load_prior, save_prior
from src.localizer.checkpoint import load_checkpoint, save_checkpoint
from src.localizer.config import TRAIN_CONFIG_KEYS, configs_from_mapping, load_training_config
from src.localizer.inference import export_embeddings, localize_many
from src.localizer.training import fit_localizer
from src.radio.errors import EmptyFingerprintError
from src.radio.io import load_radio_map, save_radio_map, write_table
from src.runtime.config import Config
from src.simulation.crowdsource import crowdsource_radio_map
from src.simulation.stream import load_stream, online_stream
from src.simulation.trajectory import corrupt_odometry, generate_trajectory
from src.simulation.world import WorldSpec, generate_world

import numpy as np
import pandas as pd


ENTRYPOINT = "scripts/pipeline/main.py"
RADIO_MAP_FILE = "radio_map.jsonl"
STREAM_FILE = "stream.csv"
TRUTH_FILE = "truth.csv"
CHECKPOINT_FILE = "localizer.joblib"
PRIOR_FILE = "prior_map.joblib"


def attach_log_file(out_dir: Path, command: str) -> Path:
    log_path = out_dir / "logs" / f"{command}.log"
    log_path.parent.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(log_path, mode="w", encoding="utf-8")
    handler.setFormatter(logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s"))
    logging.getLogger().addHandler(handler)
    return log_path


def finish(command: str, out_dir: Path, config: dict, seed, files) -> Path:
    manifest = build_run_manifest(command, config, seed=seed, entrypoint=ENTRYPOINT)
    record_files(manifest, files, root=out_dir)
    path = write_manifest(out_dir / f"{command}.manifest.json", manifest)
    for name in sorted(manifest.files):
        print(f"[INFO] wrote {out_dir / name}")
    print(f"[INFO] manifest {path}")
    return path


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = WorldSpec.from_file(Path(args.spec)) if args.spec else WorldSpec(seed=args.seed)
    world = generate_world(spec)
    radio_map = crowdsource_radio_map(world, args.n_samples, args.loc_noise, args.dropout, args.seed)
    traj = generate_trajectory(world, args.duration, args.speed, seed=args.seed, kidnap_at=args.kidnap_at)
    odometry = corrupt_odometry(traj, args.scale_error, args.heading_drift, args.odometry_noise, seed=args.seed)
    stream = online_stream(world, traj, args.fingerprint_period, seed=args.seed, odometry=odometry)

    (out / "world.json").write_text(json.dumps(world.to_dict(), indent=2, sort_keys=True), encoding="utf-8")
    save_radio_map(radio_map, out / RADIO_MAP_FILE)
    stream.save(out / STREAM_FILE, out / TRUTH_FILE)
    print(f"[INFO] world {spec.area_w:g}x{spec.area_h:g} m, {len(world.aps)} APs, map {len(radio_map)} samples")
    files = [out / "world.json", out / RADIO_MAP_FILE, out / STREAM_FILE, out / TRUTH_FILE]
    finish("simulate", out, {**spec.to_dict(), **_flags(args)}, args.seed, files)
    return 0


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    radio_map = load_radio_map(Path(args.map))
    if args.config:
        localizer_config, training_config, raw = load_training_config(Path(args.config))
    else:
        raw = {"seed": args.seed}
        localizer_config, training_config = configs_from_mapping(raw)
    model, history = fit_localizer(
        radio_map,
        localizer_config,
        training_config,
        val_ratio=float(raw.get("val_ratio", Config.TRAIN_VAL_RATIO)),
        split_seed=int(raw.get("seed", args.seed)),
        cell_size=raw.get("cell_size"),
    )
    save_checkpoint(model, out / CHECKPOINT_FILE, metadata={"radio_map": str(Path(args.map).name)})
    write_table(history.to_frame(), out / "training_history.csv")
    summary = history.summary()
    print(f"[INFO] best epoch {summary.get('best_epoch')}, val mean error {summary.get('best_val_mean_err', float('nan')):.3f} m")
    finish("train", out, {**raw, "map": str(args.map)}, raw.get("seed"), [out / CHECKPOINT_FILE, out / "training_history.csv"])
    return 0


def cmd_localize(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.queries:
        queries = load_radio_map(Path(args.queries))
        fingerprints = list(queries.fingerprints)
        truth = queries.locations()
    else:
        truth_path = Path(args.truth) if args.truth else Path(args.stream).with_name(TRUTH_FILE)
        stream = load_stream(Path(args.stream), truth_path)
        fingerprints = stream.fingerprints
        truth = np.array([stream.truth_at(fp.timestamp) for fp in fingerprints]).reshape(-1, 2)

    if args.method == "wknn":
        if not args.map:
            raise ValueError("Localize failed: --map is required for method=wknn")
        wknn = WknnLocalizer(load_radio_map(Path(args.map)), k=args.k)
        fixes = []
        for fp in fingerprints:
            try:
                fixes.append(wknn.localize(fp))
            except EmptyFingerprintError:
                fixes.append(None)
    else:
        if not args.checkpoint:
            raise ValueError("Localize failed: --checkpoint is required for method=localizer")
        fixes = localize_many(load_checkpoint(Path(args.checkpoint)), fingerprints)

    rows = []
    for i, (fp, fix) in enumerate(zip(fingerprints, fixes)):
        row = {"t": fp.timestamp, "est_x": np.nan, "est_y": np.nan, "sigma": np.nan}
        if fix is not None:
            row.update(est_x=fix.mu.x, est_y=fix.mu.y, sigma=fix.sigma)
        if truth is not None:
            row.update(true_x=truth[i, 0], true_y=truth[i, 1])
        rows.append(row)
    frame = pd.DataFrame(rows)
    if truth is not None:
        frame["err"] = ((frame["est_x"] - frame["true_x"]) ** 2 + (frame["est_y"] - frame["true_y"]) ** 2) ** 0.5
    path = write_table(frame, out / f"localize_{args.method}.csv")
    missing = sum(fix is None for fix in fixes)
    if missing:
        print(f"[WARN] {missing} fingerprints had no MAC known to the model")
    finish("localize", out, _flags(args), None, [path])
    return 0


def cmd_prior_map(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prior = build_prior(load_radio_map(Path(args.map)), args.bandwidth, args.beta, args.cell_size, args.normalization)
    save_prior(prior, out / PRIOR_FILE)
    write_table(prior.to_frame(), out / "prior_map.csv")
    print(f"[INFO] prior grid {prior.shape[0]}x{prior.shape[1]} cells of {prior.cell_size:g} m")
    finish("prior-map", out, _flags(args), None, [out / PRIOR_FILE, out / "prior_map.csv"])
    return 0


def cmd_fuse(args) -> int:
    world_dir = Path(args.world)
    out = Path(args.out) if args.out else world_dir
    out.mkdir(parents=True, exist_ok=True)
    config = FilterConfig.from_file(Path(args.config)) if args.config else FilterConfig.from_mapping({})
    if args.seed is not None:
        config = FilterConfig.from_mapping({**config.to_dict(), "seed": args.seed})
    method = args.method or config.method
    MethodRegistry.get_method(method)

    radio_map = load_radio_map(world_dir / RADIO_MAP_FILE)
    stream = load_stream(world_dir / STREAM_FILE, world_dir / TRUTH_FILE)
    checkpoint = Path(args.checkpoint) if args.checkpoint else world_dir / CHECKPOINT_FILE
    localizer = load_checkpoint(checkpoint, mac_table=radio_map.mac_table) if checkpoint.exists() else None
    prior = load_prior(Path(args.prior)) if args.prior else None
    inputs = FusionInputs(stream=stream, radio_map=radio_map, localizer=localizer, prior=prior)

    trajectory = run_method(method, inputs, config)
    path = write_table(trajectory, out / "trajectories" / f"{method}.csv")
    if len(trajectory):
        print(f"[INFO] {method}: {len(trajectory)} estimates, mean error {trajectory['err'].mean():.3f} m (no warmup)")
    finish("fuse", out, {**config.to_dict(), "method": method}, config.seed, [path])
    return 0


def cmd_eval(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    est = pd.read_csv(args.est)
    truth = pd.read_csv(args.truth)
    report = compute_metrics(est, truth, warmup=args.warmup, method=args.method or Path(args.est).stem)
    metrics_path = write_table(pd.DataFrame([report.summary()]), out / "metrics.csv")
    cdf_path = write_table(cdf_table(report), out / "cdf.csv")
    print(json.dumps(report.summary(), sort_keys=True))
    finish("eval", out, _flags(args), None, [metrics_path, cdf_path])
    return 0


def cmd_export_embeddings(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = load_checkpoint(Path(args.checkpoint))
    path = write_table(export_embeddings(model), out / "embeddings.csv")
    finish("export-embeddings", out, _flags(args), None, [path])
    return 0


def _flags(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in {"handler", "command"}}


def build_argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Radio-map localization and EKPF fusion pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Generate a world, a crowdsourced radio map and one sensor stream")
    p.add_argument("--spec", default=None, help="Flat YAML world spec (area_w, area_h, n_aps, ...)")
    p.add_argument("--out", required=True, help="Output directory")
    p.add_argument("--seed", type=int, default=Config.SEED)
    p.add_argument("--n-samples", type=int, default=2000, help="Radio map size")
    p.add_argument("--loc-noise", type=float, default=1.0, help="Crowdsourced location noise sigma (m)")
    p.add_argument("--dropout", type=float, default=0.1, help="Per-AP scan dropout probability")
    p.add_argument("--duration", type=float, default=300.0, help="Walk duration (s)")
    p.add_argument("--speed", type=float, default=1.2, help="Walking speed (m/s)")
    p.add_argument("--fingerprint-period", type=float, default=2.0, help="Seconds between WiFi scans")
    p.add_argument("--kidnap-at", type=float, default=None, help="Teleport the walker at this time (s)")
    p.add_argument("--scale-error", type=float, default=0.05, help="Odometry step-length bias")
    p.add_argument("--heading-drift", type=float, default=0.001, help="Odometry heading drift (rad/s)")
    p.add_argument("--odometry-noise", type=float, default=0.01, help="Per-step odometry noise sigma (m)")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("train", help="Train the uncertainty-aware localizer on a radio map")
    p.add_argument("--map", required=True, help="Radio map JSONL")
    p.add_argument("--config", default=None, help=f"Flat YAML training config ({', '.join(TRAIN_CONFIG_KEYS)})")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=Config.SEED)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("localize", help="Localize fingerprints with the trained model or WKNN")
    p.add_argument("--method", choices=["localizer", "wknn"], default="localizer")
    p.add_argument("--checkpoint", default=None, help="Localizer checkpoint (method=localizer)")
    p.add_argument("--map", default=None, help="Radio map JSONL (method=wknn)")
    p.add_argument("--k", type=int, default=Config.WKNN_K)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--queries", default=None, help="Radio map JSONL whose fingerprints are localized")
    group.add_argument("--stream", default=None, help="Stream CSV whose fingerprints are localized")
    p.add_argument("--truth", default=None, help="Truth CSV paired with --stream")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_localize)

    p = sub.add_parser("prior-map", help="Build the KDE prior map from a radio map")
    p.add_argument("--map", required=True)
    p.add_argument("--bandwidth", type=float, default=Config.KDE_BANDWIDTH)
    p.add_argument("--beta", type=float, default=Config.BETA)
    p.add_argument("--cell-size", type=float, default=Config.PRIOR_CELL_SIZE)
    p.add_argument("--normalization", choices=["max", "mass", "none"], default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_prior_map)

    p = sub.add_parser("fuse", help="Run a fusion method over a simulated stream")
    p.add_argument("--world", required=True, help="Directory written by simulate")
    p.add_argument("--method", choices=MethodRegistry.list_methods(), default=None)
    p.add_argument("--config", default=None, help="Flat YAML filter config")
    p.add_argument("--checkpoint", default=None, help=f"Localizer checkpoint (default <world>/{CHECKPOINT_FILE})")
    p.add_argument("--prior", default=None, help="Prebuilt prior map (default: built from the radio map)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="Output directory (default: --world)")
    p.set_defaults(handler=cmd_fuse)

    p = sub.add_parser("eval", help="Error metrics of an estimated trajectory against truth")
    p.add_argument("--est", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--warmup", type=float, default=Config.WARMUP_SECONDS)
    p.add_argument("--method", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("export-embeddings", help="Write the learned per-MAC embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=cmd_export_embeddings)
    return parser


def main(argv=None) -> int:
    Config.load_env()
    Config.validate_runtime_environment()
    args = build_argument_parser().parse_args(argv)
    out = getattr(args, "out", None) or getattr(args, "world", None)
    if out:
        attach_log_file(Path(out), args.command)
    try:
        return args.handler(args)
    except Exception as exc:
        logging.getLogger(__name__).exception("Command %s failed", args.command)
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
