from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional


MANIFEST_VERSION = "1.0"
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "scikit-learn", "joblib", "pyyaml")


@dataclass
class RunManifest:
    manifest_version: str
    generated_at: str
    entrypoint: str
    command: str
    seed: Optional[int]
    config: Dict[str, Any]
    config_sha256: str
    runtime: Dict[str, Any]
    files: Dict[str, str] = field(default_factory=dict)
    failures: List[Dict[str, Any]] = field(default_factory=list)
    status: str = "ok"


def utc_now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def config_sha256(config: Dict[str, Any]) -> str:
    return sha256_text(json.dumps(config, ensure_ascii=False, sort_keys=True, default=str))


def package_versions(packages: Iterable[str] = TRACKED_PACKAGES) -> Dict[str, str]:
    versions = {}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = ""
    return versions


def build_run_manifest(
    command: str,
    config: Dict[str, Any],
    seed: Optional[int] = None,
    entrypoint: str = "",
    runtime_context: Optional[Dict[str, Any]] = None,
) -> RunManifest:
    runtime = {
        "python_version": f"{sys.version_info[0]}.{sys.version_info[1]}.{sys.version_info[2]}",
        "python_executable": sys.executable,
        "packages": package_versions(),
    }
    for key, value in dict(runtime_context or {}).items():
        runtime.setdefault(key, value)
    config = json.loads(json.dumps(config, default=str))
    return RunManifest(
        manifest_version=MANIFEST_VERSION,
        generated_at=utc_now_iso(),
        entrypoint=entrypoint,
        command=command,
        seed=seed,
        config=config,
        config_sha256=config_sha256(config),
        runtime=runtime,
    )


def record_files(manifest: RunManifest, paths: Iterable[Path], root: Optional[Path] = None) -> RunManifest:
    for path in paths:
        path = Path(path)
        if not path.is_file():
            continue
        key = str(path.relative_to(root)) if root is not None and path.is_relative_to(root) else str(path)
        manifest.files[key.replace("\\", "/")] = sha256_file(path)
    return manifest


def record_failure(manifest: RunManifest, stage: str, exc: BaseException, **context: Any) -> RunManifest:
    manifest.failures.append({"stage": stage, "error": type(exc).__name__, "message": str(exc), **context})
    manifest.status = "partial"
    return manifest


def write_manifest(path: Path, manifest: RunManifest) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(
        json.dumps(asdict(manifest), ensure_ascii=False, indent=2, sort_keys=True),
        encoding="utf-8",
    )
    return path


def load_manifest(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Manifest does not exist: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def reproducibility_signature(manifest: Dict[str, Any]) -> str:
    """Hash of the manifest content that must match across reruns; timestamps and paths excluded."""
    payload = {
        "command": manifest.get("command"),
        "config_sha256": manifest.get("config_sha256"),
        "seed": manifest.get("seed"),
        "files": manifest.get("files"),
    }
    return sha256_text(json.dumps(payload, sort_keys=True))


__all__ = [
    "MANIFEST_VERSION",
    "RunManifest",
    "build_run_manifest",
    "config_sha256",
    "load_manifest",
    "package_versions",
    "record_failure",
    "record_files",
    "reproducibility_signature",
    "sha256_file",
    "sha256_text",
    "utc_now_iso",
    "write_manifest",
]
