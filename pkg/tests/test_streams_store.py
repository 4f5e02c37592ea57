"""Datastore: schemas, ingestion, range queries, coverage, persistence."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sensemaker.store import SensorStore
from sensemaker.streams import (
    PayloadError,
    StreamKind,
    UnknownStreamError,
    describe_databases,
    validate_payload,
)
from sensemaker.timeutil import TimeRange, format_instant, parse_instant


def line(user, stream, ts, **payload):
    return json.dumps({"user_id": user, "stream": stream, "timestamp": ts,
                       "payload": payload})


APP_LINES = [
    line("u1", "app_usage", 100, app_name="Maps", event="open"),
    line("u1", "app_usage", 200, app_name="Maps", event="close"),
    line("u1", "app_usage", 300, app_name="Mail", event="open"),
]


class TestSchemas:
    def test_exactly_eleven_streams(self):
        assert len(StreamKind) == 11

    def test_unknown_stream_is_fatal(self):
        with pytest.raises(UnknownStreamError):
            StreamKind.parse("ppg")

    @pytest.mark.parametrize("stream,payload", [
        (StreamKind.LOCATION, {"latitude": 91.0, "longitude": 0.0, "altitude": 0.0}),
        (StreamKind.LOCATION, {"latitude": 0.0, "longitude": -200.0, "altitude": 0.0}),
        (StreamKind.GARMIN_HEART_RATE, {"bpm": 0.0}),
        (StreamKind.STRESS_PREDICTION, {"probability": 1.5}),
        (StreamKind.ACTIVITY, {"kind": "swimming"}),
        (StreamKind.APP_USAGE, {"app_name": "Maps", "event": "minimize"}),
        (StreamKind.BATTERY, {"level": 120.0, "state": "charging"}),
        (StreamKind.PHONE_STEPS, {"steps": -1, "distance": 0.0,
                                  "floors_up": 0, "floors_down": 0}),
    ])
    def test_invariant_violations_rejected(self, stream, payload):
        with pytest.raises(PayloadError):
            validate_payload(stream, payload)

    def test_wifi_ssid_optional_when_disconnected(self):
        assert validate_payload(StreamKind.WIFI, {"connected": False}) == {
            "connected": False}

    def test_activity_includes_automotive(self):
        assert validate_payload(StreamKind.ACTIVITY, {"kind": "automotive"})

    def test_catalog_covers_all_streams(self):
        from sensemaker.streams import STREAM_CATALOG
        text = describe_databases()
        for kind in StreamKind:
            assert STREAM_CATALOG[kind].title + ":" in text
        assert "Device: Phone" in text
        assert "Device: Garmin Smartwatch" in text
        assert text.count("Info:") == 11


class TestIngestion:
    def test_three_valid_events(self):
        store = SensorStore()
        report = store.ingest_stream(StreamKind.APP_USAGE, APP_LINES)
        assert report.accepted == 3
        assert report.rejected == 0

    def test_empty_sequence(self):
        store = SensorStore()
        assert store.ingest_stream(StreamKind.APP_USAGE, []).accepted == 0

    def test_record_missing_user_id_is_reported_with_line(self):
        bad = json.dumps({"stream": "app_usage", "timestamp": 50,
                          "payload": {"app_name": "X", "event": "open"}})
        store = SensorStore()
        report = store.ingest_stream(StreamKind.APP_USAGE,
                                     [APP_LINES[0], bad, APP_LINES[1]])
        assert report.accepted == 2
        assert report.rejected == 1
        assert report.rejections[0].line == 2
        assert "user_id" in report.rejections[0].reason

    def test_nonfinite_timestamp_rejected(self):
        store = SensorStore()
        bad = '{"user_id": "u1", "stream": "wifi", "timestamp": 1e999, ' \
              '"payload": {"connected": false}}'
        report = store.ingest_stream(StreamKind.WIFI, [bad])
        assert report.accepted == 0
        assert "finite" in report.rejections[0].reason

    def test_malformed_json_skipped_not_fatal(self):
        store = SensorStore()
        report = store.ingest_stream(StreamKind.APP_USAGE,
                                     ["{not json", APP_LINES[0]])
        assert report.accepted == 1
        assert "invalid JSON" in report.rejections[0].reason

    def test_wall_clock_timestamps_accepted(self):
        store = SensorStore()
        report = store.ingest_stream(StreamKind.WIFI, [
            line("u1", "wifi", "2024-07-15 08:00:00", connected=False)])
        assert report.accepted == 1
        rec = store.query_records("u1", StreamKind.WIFI,
                                  TimeRange(0, 4e9))[0]
        assert format_instant(rec.timestamp) == "2024-07-15 08:00:00"

    def test_idempotent_reingestion(self):
        store = SensorStore()
        first = store.ingest_stream(StreamKind.APP_USAGE, APP_LINES)
        second = store.ingest_stream(StreamKind.APP_USAGE, APP_LINES)
        assert first.accepted == 3
        assert second.accepted == 0
        assert second.duplicates == 3
        full = store.query_records("u1", StreamKind.APP_USAGE, TimeRange(0, 1e9))
        assert len(full) == 3

    def test_declared_stream_mismatch_rejected(self):
        store = SensorStore()
        report = store.ingest_stream(StreamKind.WIFI, [APP_LINES[0]])
        assert report.accepted == 0
        assert "declares stream" in report.rejections[0].reason


class TestQueries:
    def test_half_open_range(self):
        store = SensorStore()
        store.ingest_stream(StreamKind.LOCATION, [
            line("u1", "location", t, latitude=1.0, longitude=2.0, altitude=0.0)
            for t in (100, 200, 300)])
        hits = store.query_records("u1", StreamKind.LOCATION, TimeRange(150, 301))
        assert [r.timestamp for r in hits] == [200, 300]

    def test_empty_interval(self):
        store = SensorStore()
        store.ingest_stream(StreamKind.LOCATION, [
            line("u1", "location", 0, latitude=0.0, longitude=0.0, altitude=0.0)])
        assert store.query_records("u1", StreamKind.LOCATION, TimeRange(0, 0)) == []

    def test_unknown_user_distinguishable(self, fixture_store):
        result = fixture_store.query_records("nobody", StreamKind.ACTIVITY,
                                             TimeRange(0, 4e9))
        assert result == [] and result.user_seen is False

    def test_known_user_empty_stream_day(self, fixture_store):
        # present user, a day with no activity records: empty but user_seen
        day = TimeRange(parse_instant("2024-07-12"), parse_instant("2024-07-13"))
        result = fixture_store.query_records("test004", StreamKind.ACTIVITY, day)
        assert result == [] and result.user_seen is True

    def test_sorted_ascending_and_stable(self):
        store = SensorStore()
        store.ingest_stream(StreamKind.APP_USAGE, [
            line("u1", "app_usage", 100, app_name="B", event="open"),
            line("u1", "app_usage", 100, app_name="A", event="open"),
            line("u1", "app_usage", 50, app_name="C", event="open"),
        ])
        hits = store.query_records("u1", StreamKind.APP_USAGE, TimeRange(0, 1e9))
        assert [r.payload["app_name"] for r in hits] == ["C", "B", "A"]


class TestCoverage:
    def test_counts_match_full_range_query(self):
        store = SensorStore()
        store.ingest_stream(StreamKind.WIFI, [
            line("u1", "wifi", t, connected=False) for t in range(5)])
        store.ingest_stream(StreamKind.BATTERY, [
            line("u1", "battery", t, level=50.0, state="discharging")
            for t in (10, 20)])
        cov = store.coverage("u1")
        assert set(cov) == {StreamKind.WIFI, StreamKind.BATTERY}
        assert cov[StreamKind.WIFI].count == 5
        assert cov[StreamKind.BATTERY].count == 2
        # recount through query_records over the full range
        for kind, entry in cov.items():
            full = store.query_records("u1", kind,
                                       TimeRange(entry.earliest, entry.latest + 1))
            assert len(full) == entry.count

    def test_unknown_user_empty_report(self):
        assert SensorStore().coverage("ghost") == {}

    def test_single_record_earliest_equals_latest(self):
        store = SensorStore()
        store.ingest_stream(StreamKind.GARMIN_STEPS,
                            [line("u1", "garmin_steps", 42, steps=7)])
        entry = store.coverage("u1")[StreamKind.GARMIN_STEPS]
        assert entry.earliest == entry.latest == 42
        assert entry.count == 1


class TestPersistence:
    def test_roundtrip_through_disk(self, tmp_path):
        store = SensorStore(tmp_path / "data")
        store.ingest_stream(StreamKind.APP_USAGE, APP_LINES)
        reopened = SensorStore(tmp_path / "data")
        hits = reopened.query_records("u1", StreamKind.APP_USAGE, TimeRange(0, 1e9))
        assert len(hits) == 3
        assert reopened.ingest_stream(StreamKind.APP_USAGE, APP_LINES).accepted == 0

    def test_manifest_ingestion(self, tmp_path, data_dir):
        store = SensorStore(tmp_path / "data")
        reports = store.ingest_manifest(data_dir / "manifest.json")
        assert sum(r.accepted for r in reports.values()) > 20
        assert store.user_seen("test010")


@st.composite
def record_batches(draw):
    n = draw(st.integers(min_value=0, max_value=40))
    rows = []
    for i in range(n):
        ts = draw(st.integers(min_value=0, max_value=1000))
        rows.append(line(f"u{draw(st.integers(0, 2))}", "garmin_steps", ts,
                         steps=draw(st.integers(0, 500))))
    return rows


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(record_batches())
    def test_roundtrip_returns_exactly_ingested_records(self, rows):
        store = SensorStore()
        report = store.ingest_stream(StreamKind.GARMIN_STEPS, rows)
        total = sum(len(store.query_records(u, StreamKind.GARMIN_STEPS,
                                            TimeRange(0, 2000)))
                    for u in ("u0", "u1", "u2"))
        assert total == report.accepted
        for u in ("u0", "u1", "u2"):
            hits = store.query_records(u, StreamKind.GARMIN_STEPS, TimeRange(0, 2000))
            assert [r.timestamp for r in hits] == sorted(r.timestamp for r in hits)

    @settings(max_examples=60, deadline=None)
    @given(record_batches(), st.integers(min_value=0, max_value=1000))
    def test_partition_at_split_point(self, rows, split):
        store = SensorStore()
        store.ingest_stream(StreamKind.GARMIN_STEPS, rows)
        for u in ("u0", "u1", "u2"):
            left = store.query_records(u, StreamKind.GARMIN_STEPS, TimeRange(0, split))
            right = store.query_records(u, StreamKind.GARMIN_STEPS, TimeRange(split, 2000))
            whole = store.query_records(u, StreamKind.GARMIN_STEPS, TimeRange(0, 2000))
            combined = [(r.timestamp, json.dumps(r.payload, sort_keys=True))
                        for r in list(left) + list(right)]
            expected = [(r.timestamp, json.dumps(r.payload, sort_keys=True))
                        for r in whole]
            assert combined == expected
