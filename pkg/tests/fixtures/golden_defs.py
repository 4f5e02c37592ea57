"""Shared definitions for the golden runs: queries, scripted responses, expectations.

The goldens are produced by running the engine against a ScriptedBackend
wrapped in a recorder (see make_goldens.py); tests then replay the recorded
cassettes and compare against the committed traces and answers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

DATA_DIR = Path(__file__).parent / "data"
GOLDENS_DIR = Path(__file__).parent / "goldens"


def _json_block(obj) -> str:
    return "```json\n" + json.dumps(obj) + "\n```"


def _py_block(code: str) -> str:
    return "```python\n" + code.strip() + "\n```"


@dataclass
class GoldenDef:
    name: str
    query: str
    instructions: str
    responses: list[str]
    expect_status: str
    expect_memory: int
    run_id: str = ""

    def __post_init__(self):
        self.run_id = self.run_id or f"golden-{self.name}"


HAPPY_PATH = GoldenDef(
    name="happy-path",
    query=("Which apps did test010 use on 2024-07-15 between 17:00:00 "
           "and 20:00:00?"),
    instructions="answer clearly and concisely",
    expect_status="answered",
    expect_memory=1,
    responses=[
        _json_block({
            "answerable": True,
            "steps": [
                "Retrieve app usage blocks for test010 on 2024-07-15 between "
                "17:00:00 and 20:00:00.",
                "Summarize which apps were used and for how long."],
            "rationale": "The app usage database records open and close "
                         "events with app names, which answers this directly."}),
        _json_block({
            "request": "Fetch app usage blocks for user test010 between "
                       "2024-07-15 17:00:00 and 2024-07-15 20:00:00.",
            "streams": ["app_usage"]}),
        _py_block('''
blocks = get_app_usage_blocks(uid="test010", start_time="2024-07-15 17:00:00", end_time="2024-07-15 20:00:00")
emit_result({"blocks": blocks, "total_blocks": len(blocks)})
'''),
        ("In that window on 2024-07-15, test010 used SnapChat from 17:38:57 "
         "to 18:13:32 for 2075.0 seconds and iMessage from 19:07:34 to "
         "19:08:12 for 38.0 seconds, 2 app usage blocks in total."),
        _json_block({
            "narrative": "test010 used two apps in the requested window on "
                         "2024-07-15: SnapChat from 17:38:57 to 18:13:32 "
                         "(2075.0 seconds) and iMessage from 19:07:34 to "
                         "19:08:12 (38.0 seconds).",
            "needs": [],
            "failure_note": None}),
        _json_block({
            "verdict": "halt_answered",
            "reason": "The understanding names every app used in the window "
                      "with its duration."}),
        ("test010 used two apps in that window on 2024-07-15: SnapChat for "
         "2075.0 seconds (17:38:57 to 18:13:32) and iMessage for 38.0 "
         "seconds (19:07:34 to 19:08:12)."),
    ])


PPG = GoldenDef(
    name="ppg",
    query="What was the average PPG value for test006 on 2024-09-28?",
    instructions="answer clearly and concisely",
    expect_status="unanswerable",
    expect_memory=0,
    responses=[
        _json_block({
            "answerable": False,
            "steps": [],
            "rationale": "The query asks for PPG data, but none of the "
                         "available databases contain PPG signals; they cover "
                         "location, activity, app usage, steps, lock/unlock, "
                         "Wi-Fi, calls, battery, Garmin steps, heart rate, "
                         "and stress predictions only."}),
    ])


MISSING_DATA = GoldenDef(
    name="missing-data",
    query=("What was the total duration of each activity type for test004 "
           "on 2024-07-12?"),
    instructions="answer clearly and concisely",
    expect_status="halted_failure",
    expect_memory=1,
    responses=[
        _json_block({
            "answerable": True,
            "steps": [
                "Retrieve activity intervals for test004 on 2024-07-12.",
                "Total the duration per activity type."],
            "rationale": "The activity database stores activity intervals, "
                         "from which per-type durations can be totaled."}),
        _json_block({
            "request": "Fetch activity intervals for user test004 between "
                       "2024-07-12 00:00:00 and 2024-07-13 00:00:00.",
            "streams": ["activity"]}),
        _py_block('''
blocks = get_activity_blocks(uid="test004", start_time="2024-07-12 00:00:00", end_time="2024-07-13 00:00:00")
emit_result({"blocks": blocks, "count": len(blocks)})
'''),
        ("No activity records were found for test004 between 2024-07-12 "
         "00:00:00 and 2024-07-13 00:00:00; the result holds 0 intervals."),
        _json_block({
            "narrative": "No activity data was found for test004 on "
                         "2024-07-12, so the total duration per activity "
                         "type cannot be computed for that day.",
            "needs": [],
            "failure_note": "activity: no records for test004 on 2024-07-12"}),
        ("There is no recorded activity data for test004 on 2024-07-12, so "
         "I cannot total the durations per activity type for that day. The "
         "data may be missing or was never collected; if it becomes "
         "available, the query can be revisited."),
    ])


def _cutoff_responses() -> list[str]:
    responses = [
        _json_block({
            "answerable": True,
            "steps": ["Collect heart rate probe windows for test010 on "
                      "2024-07-15 until the pattern is clear."],
            "rationale": "Heart rate data exists for the user; repeated "
                         "probes can characterize the day."}),
    ]
    for i in range(1, 6):
        if i > 1:
            responses.append(_json_block({
                "verdict": "continue",
                "reason": "More probe windows are still needed."}))
        responses.append(_json_block({
            "request": f"Fetch heart rate probe window {i} for test010 "
                       "on 2024-07-15.",
            "streams": ["garmin_heart_rate"]}))
        responses.append(_py_block(f'emit_result({{"marker": {i}}})'))
        responses.append(f"Probe window {i} returned marker {i}.")
        responses.append(_json_block({
            "narrative": f"Probe windows up to {i} have been collected for "
                         "test010; the pattern is still unresolved.",
            "needs": ["more probe windows"],
            "failure_note": None}))
    responses.append(
        "The probing did not converge within the iteration limit; five "
        "probe windows were collected for test010 on 2024-07-15 and the "
        "pattern remained unresolved.")
    return responses


CUTOFF = GoldenDef(
    name="cutoff",
    query="Probe the heart rate pattern of test010 on 2024-07-15.",
    instructions="answer clearly and concisely",
    expect_status="cutoff",
    expect_memory=5,
    responses=_cutoff_responses())


ALL_GOLDENS = [HAPPY_PATH, PPG, MISSING_DATA, CUTOFF]
