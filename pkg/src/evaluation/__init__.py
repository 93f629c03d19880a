"""Trajectory metrics, run manifests and experiment orchestration."""
