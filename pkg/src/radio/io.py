from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping

import pandas as pd

from ..runtime.config import Config
from .errors import EmptyRadioMapError, RadioMapError, RadioMapParseError, RssValidationError
from .types import Fingerprint, Location, RadioMap


logger = logging.getLogger(__name__)


def _parse_record(record: Any, line_number: int):
    if not isinstance(record, Mapping):
        raise RadioMapParseError("record must be a JSON object", line_number)
    if "fp" not in record or "loc" not in record:
        raise RadioMapParseError("record requires keys 'fp' and 'loc'", line_number)
    raw_fp = record["fp"]
    raw_loc = record["loc"]
    if not isinstance(raw_fp, list) or any(not isinstance(e, list) or len(e) != 2 for e in raw_fp):
        raise RadioMapParseError("'fp' must be a list of [mac, rss] pairs", line_number)
    if not isinstance(raw_loc, list) or len(raw_loc) != 2:
        raise RadioMapParseError("'loc' must be [x, y]", line_number)
    try:
        location = Location(float(raw_loc[0]), float(raw_loc[1]))
        rss_values = [(str(mac), float(rss)) for mac, rss in raw_fp]
    except (TypeError, ValueError) as exc:
        raise RadioMapParseError(str(exc), line_number) from exc
    try:
        fingerprint = Fingerprint(tuple(rss_values), float(record.get("t", 0.0) or 0.0))
    except RssValidationError as exc:
        raise RssValidationError(f"line={line_number}: {exc}") from exc
    except RadioMapError as exc:
        raise RadioMapParseError(str(exc), line_number) from exc
    return fingerprint, location


def load_radio_map(path: Path, format: str = "jsonl") -> RadioMap:
    """Read a JSON Lines radio map. MAC indices follow first appearance in the file."""
    if format != "jsonl":
        raise ValueError(f"Unsupported radio map format: {format}")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Radio map file does not exist: {path}")

    samples = []
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                record = json.loads(text)
            except json.JSONDecodeError as exc:
                raise RadioMapParseError(exc.msg, line_number) from exc
            samples.append(_parse_record(record, line_number))

    if not samples:
        raise EmptyRadioMapError(f"Radio map file is empty: {path}")
    radio_map = RadioMap.from_samples(samples)
    logger.info("Loaded radio map %s: N=%d, A=%d", path.name, len(radio_map), len(radio_map.mac_table))
    return radio_map


def radio_map_records(radio_map: RadioMap) -> List[Dict[str, Any]]:
    return [
        {
            "fp": [[mac, rss] for mac, rss in fp.entries],
            "loc": [loc.x, loc.y],
            "t": fp.timestamp,
        }
        for fp, loc in radio_map.samples
    ]


def save_radio_map(radio_map: RadioMap, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as handle:
        for record in radio_map_records(radio_map):
            handle.write(json.dumps(record, separators=(",", ":")))
            handle.write("\n")
    return path


def write_table(frame: pd.DataFrame, path: Path) -> Path:
    """Byte-stable CSV writer used for every tabular artifact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=Config.CSV_FLOAT_FORMAT, lineterminator="\n")
    return path


__all__ = ["load_radio_map", "radio_map_records", "save_radio_map", "write_table"]
