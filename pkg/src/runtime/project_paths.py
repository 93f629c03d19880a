from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path


PROJECT_ROOT = Path(__file__).resolve().parents[2]
DEFAULT_RUNS_DIR_NAME = "Runs"


def _existing_child_case_insensitive(parent: Path, name: str) -> Path | None:
    if not parent.exists():
        return None
    expected = name.lower()
    for child in parent.iterdir():
        if child.name.lower() == expected:
            return child
    return None


def runs_root(project_root: Path = PROJECT_ROOT) -> Path:
    existing = _existing_child_case_insensitive(project_root, DEFAULT_RUNS_DIR_NAME)
    if existing:
        return existing
    return project_root / DEFAULT_RUNS_DIR_NAME


@dataclass(frozen=True)
class RunPaths:
    experiment: str
    tag: str
    run_dir: Path
    world_dir: Path
    model_dir: Path
    trajectory_dir: Path
    report_dir: Path
    log_dir: Path

    @property
    def radio_map_file(self) -> Path:
        return self.world_dir / "radio_map.jsonl"

    @property
    def world_file(self) -> Path:
        return self.world_dir / "world.json"

    @property
    def checkpoint_file(self) -> Path:
        return self.model_dir / "localizer.joblib"

    @property
    def prior_file(self) -> Path:
        return self.model_dir / "prior_map.joblib"

    def eval_summary_file(self) -> Path:
        return self.report_dir / "Eval_Summary.xlsx"

    def metrics_file(self) -> Path:
        return self.report_dir / "metrics.csv"

    def manifest_file(self) -> Path:
        return self.run_dir / "run_manifest.json"

    def log_file(self) -> Path:
        return self.log_dir / f"{self.experiment}_{self.tag}.log"


def run_paths(
    experiment: str,
    tag: str,
    project_root: Path = PROJECT_ROOT,
    root: Path | None = None,
) -> RunPaths:
    base = Path(root) if root is not None else runs_root(project_root)
    run_dir = base / experiment / tag
    return RunPaths(
        experiment=experiment,
        tag=tag,
        run_dir=run_dir,
        world_dir=run_dir / "world",
        model_dir=run_dir / "models",
        trajectory_dir=run_dir / "trajectories",
        report_dir=run_dir / "reports",
        log_dir=run_dir / "logs",
    )


def run_paths_at(run_dir: Path) -> RunPaths:
    """Layout rooted at an explicit directory, e.g. a CLI ``--out`` argument."""
    run_dir = Path(run_dir)
    return RunPaths(
        experiment=run_dir.parent.name or "run",
        tag=run_dir.name,
        run_dir=run_dir,
        world_dir=run_dir / "world",
        model_dir=run_dir / "models",
        trajectory_dir=run_dir / "trajectories",
        report_dir=run_dir / "reports",
        log_dir=run_dir / "logs",
    )


def ensure_run_layout(paths: RunPaths) -> None:
    paths.world_dir.mkdir(parents=True, exist_ok=True)
    paths.model_dir.mkdir(parents=True, exist_ok=True)
    paths.trajectory_dir.mkdir(parents=True, exist_ok=True)
    paths.report_dir.mkdir(parents=True, exist_ok=True)
    paths.log_dir.mkdir(parents=True, exist_ok=True)
