import json

import numpy as np
import pytest

from src.radio.errors import (
    DegenerateBoundsError,
    EmptyRadioMapError,
    RadioMapError,
    RadioMapParseError,
    RssValidationError,
    UnknownMacError,
)
from src.radio.io import load_radio_map, radio_map_records, save_radio_map
from src.radio.types import Bounds, Fingerprint, Location, MacTable, RadioMap, canonical_mac, normalize_rss


def _write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")
    return path


def test_canonical_mac_strips_separators_and_lowercases():
    assert canonical_mac("AA:BB:CC:DD:EE:FF") == "aabbccddeeff"
    assert canonical_mac("aa-bb-cc-dd-ee-ff") == "aabbccddeeff"
    with pytest.raises(RadioMapError):
        canonical_mac("not-a-mac")


def test_fingerprint_rejects_out_of_range_rss_and_duplicates():
    assert Fingerprint((("AA:BB:CC:DD:EE:FF", -50.0),)).as_dict() == {"aabbccddeeff": -50.0}
    with pytest.raises(RssValidationError):
        Fingerprint((("aabbccddeeff", 5.0),))
    with pytest.raises(RssValidationError):
        Fingerprint((("aabbccddeeff", -121.0),))
    with pytest.raises(RssValidationError):
        Fingerprint((("aabbccddeeff", -50.0), ("AA:BB:CC:DD:EE:FF", -60.0)))


def test_mac_table_keeps_first_appearance_order():
    table = MacTable.from_macs(["bbbbbbbbbbbb", "aaaaaaaaaaaa", "bbbbbbbbbbbb"])
    assert table.macs == ("bbbbbbbbbbbb", "aaaaaaaaaaaa")
    assert table.index_of("aaaaaaaaaaaa") == 1
    with pytest.raises(UnknownMacError):
        table.index_of("cccccccccccc")
    with pytest.raises(KeyError):
        table.index_of("cccccccccccc")
    assert table.mac_id("bbbbbbbbbbbb").index == 0


def test_single_record_file(tmp_path):
    path = _write_jsonl(tmp_path / "map.jsonl", [{"fp": [["aabbccddeeff", -50]], "loc": [0, 0]}])
    radio_map = load_radio_map(path)
    assert len(radio_map) == 1
    assert len(radio_map.mac_table) == 1
    assert radio_map.bounds == Bounds(0.0, 0.0, 0.0, 0.0)


def test_shared_mac_is_deduplicated(tmp_path):
    path = _write_jsonl(
        tmp_path / "map.jsonl",
        [
            {"fp": [["aabbccddeeff", -50]], "loc": [0, 0]},
            {"fp": [["AA:BB:CC:DD:EE:FF", -70]], "loc": [3, 4]},
        ],
    )
    radio_map = load_radio_map(path)
    assert len(radio_map) == 2
    assert len(radio_map.mac_table) == 1


def test_malformed_line_reports_line_number(tmp_path):
    path = tmp_path / "map.jsonl"
    path.write_text('{"fp": [["aabbccddeeff", -50]], "loc": [0, 0]}\n{not json}\n', encoding="utf-8")
    with pytest.raises(RadioMapParseError) as excinfo:
        load_radio_map(path)
    assert excinfo.value.line_number == 2
    assert "line=2" in str(excinfo.value)


def test_missing_loc_is_a_parse_error(tmp_path):
    path = _write_jsonl(tmp_path / "map.jsonl", [{"fp": [["aabbccddeeff", -50]]}])
    with pytest.raises(RadioMapParseError):
        load_radio_map(path)


def test_empty_file_raises(tmp_path):
    path = tmp_path / "map.jsonl"
    path.write_text("\n\n", encoding="utf-8")
    with pytest.raises(EmptyRadioMapError):
        load_radio_map(path)


def test_rss_outside_range_in_file_raises(tmp_path):
    path = _write_jsonl(tmp_path / "map.jsonl", [{"fp": [["aabbccddeeff", 3]], "loc": [0, 0]}])
    with pytest.raises(RssValidationError):
        load_radio_map(path)


def test_save_load_preserves_records(tmp_path, small_map):
    path = save_radio_map(small_map, tmp_path / "map.jsonl")
    loaded = load_radio_map(path)
    assert radio_map_records(loaded) == radio_map_records(small_map)
    assert loaded.mac_table.macs == small_map.mac_table.macs
    assert loaded.bounds == small_map.bounds


def test_from_samples_rejects_macs_outside_given_table():
    fp = Fingerprint((("aaaaaaaaaaaa", -50.0),))
    table = MacTable.from_macs(["bbbbbbbbbbbb"])
    with pytest.raises(UnknownMacError):
        RadioMap.from_samples([(fp, Location(0.0, 0.0))], mac_table=table)
    with pytest.raises(EmptyRadioMapError):
        RadioMap.from_samples([])


def test_degenerate_bounds_and_rss_normalization():
    with pytest.raises(DegenerateBoundsError):
        Bounds.from_points(np.array([[0.0, 1.0], [5.0, 1.0]])).require_non_degenerate()
    np.testing.assert_allclose(normalize_rss([-120.0, -60.0, 0.0]), [0.0, 0.5, 1.0])
