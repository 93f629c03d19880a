"""Trajectory error metrics, CDF tables and cross-method comparison."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional

import numpy as np
import pandas as pd

from ..radio.errors import NoOverlapError
from ..runtime.config import Config


logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = ["method", "trials", "n", "mean", "median", "max", "p95", "improvement_pct"]


def nearest_rank(sorted_errors: np.ndarray, q: float) -> float:
    """Smallest value with at least ``q`` of the sample at or below it."""
    n = len(sorted_errors)
    rank = max(int(math.ceil(q * n - 1e-12)), 1)
    return float(sorted_errors[min(rank, n) - 1])


@dataclass(frozen=True, eq=False)
class ErrorReport:
    times: np.ndarray
    errors: np.ndarray
    mean: float
    median: float
    max: float
    p95: float
    warmup_cutoff: float
    method: str = ""

    @classmethod
    def from_errors(
        cls,
        errors: np.ndarray,
        times: Optional[np.ndarray] = None,
        warmup_cutoff: float = 0.0,
        method: str = "",
    ) -> "ErrorReport":
        errors = np.asarray(errors, dtype=float)
        if errors.size == 0:
            raise NoOverlapError("Metric computation failed: no errors to summarize")
        ordered = np.sort(errors)
        return cls(
            times=np.arange(errors.size, dtype=float) if times is None else np.asarray(times, dtype=float),
            errors=errors,
            mean=float(errors.mean()),
            median=float(np.median(errors)),
            max=float(ordered[-1]),
            p95=nearest_rank(ordered, 0.95),
            warmup_cutoff=float(warmup_cutoff),
            method=method,
        )

    @property
    def n(self) -> int:
        return int(self.errors.size)

    @property
    def cdf(self) -> np.ndarray:
        """``(n, 2)`` array of sorted errors and cumulative fractions ending at 1."""
        ordered = np.sort(self.errors)
        return np.column_stack([ordered, np.arange(1, ordered.size + 1) / ordered.size])

    def summary(self) -> Dict[str, float]:
        return {
            "method": self.method,
            "n": self.n,
            "mean": self.mean,
            "median": self.median,
            "max": self.max,
            "p95": self.p95,
            "warmup_cutoff": self.warmup_cutoff,
        }


def trajectory_xy(frame: pd.DataFrame) -> np.ndarray:
    """Estimated positions of a trajectory table, or plain ``x, y`` for a truth table."""
    for cols in (("est_x", "est_y"), ("x", "y")):
        if set(cols) <= set(frame.columns):
            return frame[list(cols)].to_numpy(dtype=float)
    raise ValueError(f"Trajectory table needs est_x/est_y or x/y columns, found {list(frame.columns)}")


def align_trajectories(
    est: pd.DataFrame,
    truth: pd.DataFrame,
    tolerance: float = Config.TIME_ALIGN_TOLERANCE,
) -> pd.DataFrame:
    """Nearest-in-time match of every estimate to a truth row within ``tolerance`` seconds."""
    est_xy, true_xy = trajectory_xy(est), trajectory_xy(truth)
    left = pd.DataFrame({"t": est["t"].to_numpy(dtype=float), "ex": est_xy[:, 0], "ey": est_xy[:, 1]})
    right = pd.DataFrame({"t": truth["t"].to_numpy(dtype=float), "tx": true_xy[:, 0], "ty": true_xy[:, 1]})
    merged = pd.merge_asof(
        left.sort_values("t", kind="mergesort"),
        right.sort_values("t", kind="mergesort"),
        on="t",
        direction="nearest",
        tolerance=tolerance,
    )
    return merged.dropna(subset=["tx", "ty"]).reset_index(drop=True)


def compute_metrics(
    est: pd.DataFrame,
    truth: pd.DataFrame,
    warmup: float = Config.WARMUP_SECONDS,
    method: str = "",
) -> ErrorReport:
    merged = align_trajectories(est, truth)
    start = float(truth["t"].min()) if len(truth) else 0.0
    cutoff = start + warmup
    merged = merged[merged["t"] >= cutoff - 1e-9]
    if merged.empty:
        raise NoOverlapError(
            f"Metric computation failed: no aligned rows after warmup, warmup={warmup:g}s, "
            f"est_rows={len(est)}, truth_rows={len(truth)}"
        )
    errors = np.hypot(merged["ex"] - merged["tx"], merged["ey"] - merged["ty"]).to_numpy()
    return ErrorReport.from_errors(errors, merged["t"].to_numpy(), warmup_cutoff=cutoff, method=method)


def pool_reports(reports: Iterable[ErrorReport], method: str = "") -> ErrorReport:
    reports = list(reports)
    if not reports:
        raise NoOverlapError(f"Metric pooling failed: no reports for method={method!r}")
    return ErrorReport.from_errors(
        np.concatenate([r.errors for r in reports]),
        np.concatenate([r.times for r in reports]),
        warmup_cutoff=reports[0].warmup_cutoff,
        method=method or reports[0].method,
    )


def recovery_time(
    trajectory: pd.DataFrame,
    since: float,
    threshold: float = 3.0,
    hold: float = 5.0,
) -> Optional[float]:
    """Seconds after ``since`` until the error drops below ``threshold`` and stays there for ``hold`` seconds."""
    after = trajectory[trajectory["t"] >= since].sort_values("t", kind="mergesort")
    times = after["t"].to_numpy(dtype=float)
    good = after["err"].to_numpy(dtype=float) < threshold
    for i in np.flatnonzero(good):
        window = (times >= times[i]) & (times <= times[i] + hold)
        if times[-1] - times[i] >= hold and good[window].all():
            return float(times[i] - since)
    return None


def cdf_table(report: ErrorReport) -> pd.DataFrame:
    cdf = report.cdf
    return pd.DataFrame({"error": cdf[:, 0], "fraction": cdf[:, 1]})


def summarize_methods(reports: Mapping[str, ErrorReport], trials: Optional[Mapping[str, int]] = None) -> pd.DataFrame:
    """One row per method; ``improvement_pct`` is relative to the best mean among the other methods."""
    rows: List[Dict[str, float]] = []
    means = {name: report.mean for name, report in reports.items()}
    for name, report in reports.items():
        others = [m for other, m in means.items() if other != name]
        best_other = min(others) if others else float("nan")
        improvement = 100.0 * (best_other - report.mean) / best_other if others and best_other > 0 else float("nan")
        rows.append(
            {
                "method": name,
                "trials": int((trials or {}).get(name, 1)),
                "n": report.n,
                "mean": report.mean,
                "median": report.median,
                "max": report.max,
                "p95": report.p95,
                "improvement_pct": improvement,
            }
        )
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


__all__ = [
    "ErrorReport",
    "SUMMARY_COLUMNS",
    "align_trajectories",
    "cdf_table",
    "compute_metrics",
    "nearest_rank",
    "pool_reports",
    "summarize_methods",
    "trajectory_xy",
]
