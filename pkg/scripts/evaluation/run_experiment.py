import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

PROJECT_ROOT = Path(__file__).resolve().parents[2]
if str(PROJECT_ROOT) not in sys.path:
    sys.path.insert(0, str(PROJECT_ROOT))

from src.evaluation.benchmark import ablation_config, benchmark_config, kidnap_config
from src.evaluation.experiment import ExperimentConfig, rerun_experiment, run_experiment
from src.runtime.config import Config


ENTRYPOINT = "scripts/evaluation/run_experiment.py"
BENCHMARKS = {
    "benchmark": benchmark_config,
    "ablation": ablation_config,
    "kidnap": kidnap_config,
}


def build_argument_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Run a multi-trial fusion experiment and write Eval_Summary.xlsx")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", default=None, help="Flat YAML experiment config")
    source.add_argument("--benchmark", choices=sorted(BENCHMARKS), default=None, help="Pinned synthetic benchmark")
    source.add_argument("--from-manifest", default=None, help="Replay the config stored in a run_manifest.json")
    parser.add_argument("--out", default=None, help="Run directory (default Runs/<name>/seed<seed>)")
    parser.add_argument("--trials", type=int, default=None, help="Override n_trials")
    return parser


def main(argv=None) -> int:
    Config.load_env()
    Config.validate_runtime_environment()
    args = build_argument_parser().parse_args(argv)
    out = Path(args.out) if args.out else None
    try:
        if args.from_manifest:
            if out is None:
                raise ValueError("--out is required with --from-manifest")
            result = rerun_experiment(Path(args.from_manifest), out, entrypoint=ENTRYPOINT)
        else:
            if args.config:
                config = ExperimentConfig.from_file(Path(args.config))
            else:
                config = BENCHMARKS[args.benchmark]()
            if args.trials is not None:
                if args.trials < 1:
                    raise ValueError(f"Invalid --trials: {args.trials}")
                config = replace(config, n_trials=args.trials)
            result = run_experiment(config, out, entrypoint=ENTRYPOINT)
    except Exception as exc:
        logging.getLogger(__name__).exception("Experiment failed")
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1

    if not result.comparison.empty:
        print(result.comparison.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    for failure in result.manifest.failures:
        print(f"[WARN] {failure['stage']} failed: {failure['error']}: {failure['message']}")
    print(f"[INFO] status {result.manifest.status}, outputs in {result.paths.run_dir}")
    return 0 if result.manifest.status == "ok" else 1


if __name__ == "__main__":
    sys.exit(main())
