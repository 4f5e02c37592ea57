"""Numeric grounding checks behind the anti-hallucination gates."""

from sensemaker.textnum import extract_tokens, ungrounded_tokens

RESULT = ('{"blocks": [{"app": "SnapChat", "open": "2024-07-15 17:38:57", '
          '"close": "2024-07-15 18:13:32", "duration": 2075.0}], '
          '"total_steps": 9325}')


def test_extract_keeps_times_atomic():
    tokens = extract_tokens("between 17:38:57 and 18:13:32 for 2075.0 seconds")
    assert "17:38:57" in tokens and "18:13:32" in tokens and "2075.0" in tokens
    assert "38" not in tokens  # no bare fragments of the clock times


def test_grounded_summary_passes():
    summary = ("On 2024-07-15 the user spent 2075.0 seconds in SnapChat, "
               "taking 9325 steps overall.")
    assert ungrounded_tokens(summary, RESULT) == []


def test_thousands_separator_normalization():
    assert ungrounded_tokens("a total of 9,325 steps", RESULT) == []
    assert ungrounded_tokens("a total of 2,075 seconds", RESULT) == []


def test_invented_number_detected():
    assert ungrounded_tokens("the user took 7777 steps", RESULT) == ["7777"]


def test_invented_time_detected():
    missing = ungrounded_tokens("usage started at 03:59:59", RESULT)
    assert missing == ["03:59:59"]


def test_date_from_source_grounds_date_tokens():
    assert ungrounded_tokens("on 2024-07-15 everything was fine", RESULT) == []
    assert ungrounded_tokens("on 2024-07-16 everything was fine", RESULT) == \
        ["2024-07-16"]


def test_value_match_across_formatting():
    # 2075 matches 2075.0 by numeric value
    assert ungrounded_tokens("about 2075 seconds", RESULT) == []


def test_substring_fallback_for_ids():
    # "test010" carries digits that must ground against an id in the source
    assert ungrounded_tokens("user test010 was active", "uid=test010") == []
    assert ungrounded_tokens("user test999 was active", "uid=test010") == ["999"]
