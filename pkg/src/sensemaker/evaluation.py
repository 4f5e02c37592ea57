"""Accuracy/consistency evaluation over query corpora, plus the significance stats.

Accuracy labels are supplied by humans (or per-query verification scripts);
the harness stores labels and provenance, it never auto-judges. Percentages
are rendered by truncation to two decimals, which is the only rule that
reproduces all published-style tallies consistently (e.g. 111/210 -> 52.85).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

from .timeutil import TimeRange, parse_instant

QUERY_CATEGORIES = ("objective", "subjective", "mixed")
SYSTEMS = ("engine", "rag")
RATING_DIMENSIONS = ("relevance", "interpretation", "domain_knowledge",
                     "logic", "clarity")


class EvalError(Exception):
    pass


@dataclass
class QuerySpec:
    id: str
    text: str
    category: str
    user_id: str
    range: TimeRange
    presentation_instructions: str = ""

    def __post_init__(self):
        if self.category not in QUERY_CATEGORIES:
            raise ValueError(f"category must be one of {QUERY_CATEGORIES}, "
                             f"got {self.category!r}")

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "category": self.category,
                "user_id": self.user_id, "start": self.range.start,
                "end": self.range.end,
                "presentation_instructions": self.presentation_instructions}

    @classmethod
    def from_dict(cls, obj: dict, tz: str = "UTC") -> "QuerySpec":
        rng = TimeRange(parse_instant(obj["start"], tz), parse_instant(obj["end"], tz))
        return cls(obj["id"], obj["text"], obj["category"], obj["user_id"],
                   rng, obj.get("presentation_instructions", ""))


@dataclass
class RunOutcome:
    query_id: str
    system: str
    answers: list[str] = field(default_factory=list)
    accuracy_label: str = "unjudged"  # correct | incorrect | unjudged
    consistent: Optional[bool] = None
    error: Optional[str] = None
    provenance: Optional[str] = None  # e.g. cassette id

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {SYSTEMS}")
        if self.accuracy_label not in ("correct", "incorrect", "unjudged"):
            raise ValueError(f"bad accuracy label {self.accuracy_label!r}")
        if len(self.answers) < 3:
            self.consistent = None  # defined only with >= 3 repetitions

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "system": self.system,
                "answers": list(self.answers),
                "accuracy_label": self.accuracy_label,
                "consistent": self.consistent, "error": self.error,
                "provenance": self.provenance}

    @classmethod
    def from_dict(cls, obj: dict) -> "RunOutcome":
        out = cls(obj["query_id"], obj["system"], list(obj.get("answers", [])),
                  obj.get("accuracy_label", "unjudged"), None,
                  obj.get("error"), obj.get("provenance"))
        if len(out.answers) >= 3:
            out.consistent = obj.get("consistent")
        return out


@dataclass
class SubjectiveRating:
    query_id: str
    system: str
    relevance: bool
    interpretation: bool
    domain_knowledge: bool
    logic: bool
    clarity: bool
    overall: int

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"system must be one of {SYSTEMS}")
        if not 1 <= self.overall <= 5:
            raise ValueError(f"overall rating {self.overall} outside [1, 5]")


# -- consistency --------------------------------------------------------------


def normalized_answer(text: str) -> str:
    return " ".join(text.split()).casefold()


def default_comparator(a: str, b: str) -> bool:
    """Whitespace- and case-normalized exact match (an equivalence relation)."""
    return normalized_answer(a) == normalized_answer(b)


@dataclass
class ConsistencyResult:
    consistent: Optional[bool]  # None when any repetition errored
    answers: list[str]
    errors: list[str] = field(default_factory=list)


def measure_consistency(query: QuerySpec, runner: Callable[[QuerySpec], str],
                        repetitions: int = 3,
                        comparator: Callable[[str, str], bool] = default_comparator,
                        ) -> ConsistencyResult:
    """Run the query `repetitions` times; consistent iff all answers compare equal."""
    if repetitions < 2:
        raise EvalError("consistency needs at least 2 repetitions")
    answers: list[str] = []
    errors: list[str] = []
    for _ in range(repetitions):
        try:
            answers.append(runner(query))
        except Exception as exc:
            errors.append(f"{type(exc).__name__}: {exc}")
    if errors:
        return ConsistencyResult(None, answers, errors)
    first = answers[0]
    consistent = all(comparator(first, other) for other in answers[1:])
    return ConsistencyResult(consistent, answers)


# -- metric arithmetic -----------------------------------------------------------


def percent_2dp(numerator: int, denominator: int) -> str:
    """Percentage truncated (not rounded) to two decimals, as a string."""
    if denominator <= 0:
        raise EvalError("percentage undefined for zero denominator")
    basis = Fraction(numerator, denominator) * 10000
    return f"{math.floor(basis) / 100:.2f}"


@dataclass
class SystemMetrics:
    system: str
    accuracy_percent: Optional[str]
    accuracy_correct: int
    accuracy_judged: int
    consistency_percent: Optional[str]
    consistent_count: int
    consistency_defined: int

    def to_dict(self) -> dict:
        return vars(self).copy()


def compute_metrics(outcomes: Iterable[RunOutcome]) -> dict[str, SystemMetrics]:
    """Accuracy = correct/judged, consistency = consistent/defined, per system."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EvalError("no outcomes to compute metrics over")
    result: dict[str, SystemMetrics] = {}
    for system in SYSTEMS:
        group = [o for o in outcomes if o.system == system]
        if not group:
            continue
        judged = [o for o in group if o.accuracy_label != "unjudged"]
        correct = sum(1 for o in judged if o.accuracy_label == "correct")
        defined = [o for o in group if o.consistent is not None]
        consistent = sum(1 for o in defined if o.consistent)
        result[system] = SystemMetrics(
            system=system,
            accuracy_percent=percent_2dp(correct, len(judged)) if judged else None,
            accuracy_correct=correct, accuracy_judged=len(judged),
            consistency_percent=percent_2dp(consistent, len(defined)) if defined else None,
            consistent_count=consistent, consistency_defined=len(defined))
    return result


# -- significance statistics --------------------------------------------------------


@dataclass
class TTestResult:
    t: float
    degrees_of_freedom: int

    def to_dict(self) -> dict:
        return {"t": self.t, "degrees_of_freedom": self.degrees_of_freedom}


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """t = mean(a-b) / (sd(a-b)/sqrt(n)) with the n-1 standard deviation."""
    if len(a) != len(b):
        raise EvalError(f"paired samples differ in length: {len(a)} vs {len(b)}")
    n = len(a)
    if n < 2:
        raise EvalError("paired t-test needs at least 2 pairs")
    diffs = [float(x) - float(y) for x, y in zip(a, b)]
    mean = sum(diffs) / n
    ss = sum((d - mean) ** 2 for d in diffs)
    if ss == 0.0:
        raise EvalError("difference variance is zero; t undefined")
    sd = math.sqrt(ss / (n - 1))
    return TTestResult(mean / (sd / math.sqrt(n)), n - 1)


def chi_squared_2x2(table: Sequence[Sequence[float]]) -> float:
    """Pearson chi-squared on a 2x2 table (1 degree of freedom, no correction)."""
    if len(table) != 2 or any(len(row) != 2 for row in table):
        raise EvalError("table must be 2x2")
    rows = [float(table[i][0]) + float(table[i][1]) for i in range(2)]
    cols = [float(table[0][j]) + float(table[1][j]) for j in range(2)]
    total = rows[0] + rows[1]
    if any(m <= 0 for m in rows + cols):
        raise EvalError("all row and column marginals must be positive")
    stat = 0.0
    for i in range(2):
        for j in range(2):
            expected = rows[i] * cols[j] / total
            stat += (float(table[i][j]) - expected) ** 2 / expected
    return stat


# -- subjective ratings ------------------------------------------------------------


@dataclass
class RatingsSummary:
    proportions: dict[str, dict[str, float]]  # system -> dimension -> fraction true
    mean_overall: dict[str, float]
    counts: dict[str, int]

    def to_rows(self) -> list[dict]:
        rows = []
        for system in sorted(self.proportions):
            row = {"system": system, "n": self.counts[system],
                   "mean_overall": self.mean_overall[system]}
            row.update({dim: self.proportions[system][dim]
                        for dim in RATING_DIMENSIONS})
            rows.append(row)
        return rows


def summarize_ratings(ratings: Iterable[SubjectiveRating]) -> RatingsSummary:
    ratings = list(ratings)
    if not ratings:
        raise EvalError("no ratings to summarize")
    proportions: dict[str, dict[str, float]] = {}
    mean_overall: dict[str, float] = {}
    counts: dict[str, int] = {}
    for system in sorted({r.system for r in ratings}):
        group = [r for r in ratings if r.system == system]
        counts[system] = len(group)
        proportions[system] = {
            dim: sum(1 for r in group if getattr(r, dim)) / len(group)
            for dim in RATING_DIMENSIONS}
        mean_overall[system] = sum(r.overall for r in group) / len(group)
    return RatingsSummary(proportions, mean_overall, counts)


def rating_dimension_tables(ratings: Iterable[SubjectiveRating]
                            ) -> dict[str, list[list[int]]]:
    """Per-dimension 2x2 tables (system x positive/negative) for chi-squared."""
    ratings = list(ratings)
    tables = {}
    for dim in RATING_DIMENSIONS:
        table = []
        for system in SYSTEMS:
            group = [r for r in ratings if r.system == system]
            positive = sum(1 for r in group if getattr(r, dim))
            table.append([positive, len(group) - positive])
        tables[dim] = table
    return tables


# -- corpus / outcomes / ratings files ------------------------------------------------


def load_corpus(path, tz: str = "UTC") -> list[QuerySpec]:
    specs = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            specs.append(QuerySpec.from_dict(json.loads(line), tz))
    ids = [s.id for s in specs]
    if len(ids) != len(set(ids)):
        raise EvalError("corpus has duplicate query ids")
    return specs


def save_outcomes(outcomes: Iterable[RunOutcome], path) -> None:
    lines = [json.dumps(o.to_dict(), sort_keys=True) for o in outcomes]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def load_outcomes(path) -> list[RunOutcome]:
    return [RunOutcome.from_dict(json.loads(line))
            for line in Path(path).read_text().splitlines() if line.strip()]


def load_ratings(path) -> list[SubjectiveRating]:
    """Ratings CSV: query_id, system, the five 0/1 dimensions, overall 1-5."""
    ratings = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            ratings.append(SubjectiveRating(
                row["query_id"], row["system"],
                *(row[dim] in ("1", "true", "True") for dim in RATING_DIMENSIONS),
                overall=int(row["overall"])))
    return ratings


def apply_labels(outcomes: list[RunOutcome], labels: dict) -> None:
    """Attach human accuracy labels keyed by (query_id, system)."""
    for outcome in outcomes:
        label = labels.get((outcome.query_id, outcome.system))
        if label is not None:
            if label not in ("correct", "incorrect"):
                raise EvalError(f"bad label {label!r} for {outcome.query_id}")
            outcome.accuracy_label = label


def run_corpus(corpus: Sequence[QuerySpec],
               runners: dict[str, Callable[[QuerySpec], str]],
               repetitions: int = 3,
               comparator: Callable[[str, str], bool] = default_comparator,
               jobs: int = 1) -> list[RunOutcome]:
    """Run every query through every system; repetitions for one query run
    sequentially, distinct queries optionally in parallel."""
    from concurrent.futures import ThreadPoolExecutor

    def one(spec: QuerySpec, system: str) -> RunOutcome:
        runner = runners[system]
        result = measure_consistency(spec, runner, repetitions, comparator)
        outcome = RunOutcome(spec.id, system, result.answers)
        if len(result.answers) >= 3 and result.consistent is not None:
            outcome.consistent = result.consistent
        if result.errors:
            outcome.error = "; ".join(result.errors)
        return outcome

    tasks = [(spec, system) for spec in corpus for system in runners]
    if jobs <= 1:
        return [one(spec, system) for spec, system in tasks]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda t: one(*t), tasks))


# -- report --------------------------------------------------------------------------


def build_report(outcomes: list[RunOutcome],
                 ratings: Optional[list[SubjectiveRating]] = None) -> dict:
    """Deterministic structured report: metrics, paired stats, ratings."""
    metrics = compute_metrics(outcomes)
    report: dict = {
        "metrics": {system: m.to_dict() for system, m in sorted(metrics.items())},
        "provenance": {
            o.query_id + "/" + o.system: o.provenance
            for o in sorted(outcomes, key=lambda o: (o.query_id, o.system))
            if o.provenance},
    }
    stats: dict = {}
    if all(s in metrics for s in SYSTEMS):
        paired = _paired_binary(outcomes, lambda o: {
            "correct": 1.0, "incorrect": 0.0}.get(o.accuracy_label))
        if paired:
            a, b = paired
            try:
                stats["accuracy_t_test"] = paired_t_test(a, b).to_dict()
            except EvalError as exc:
                stats["accuracy_t_test"] = {"undefined": str(exc)}
        paired = _paired_binary(outcomes, lambda o: None if o.consistent is None
                                else float(o.consistent))
        if paired:
            a, b = paired
            try:
                stats["consistency_t_test"] = paired_t_test(a, b).to_dict()
            except EvalError as exc:
                stats["consistency_t_test"] = {"undefined": str(exc)}
    if ratings:
        summary = summarize_ratings(ratings)
        report["ratings"] = {
            "summary": summary.to_rows(),
            "chi_squared": {},
        }
        for dim, table in rating_dimension_tables(ratings).items():
            try:
                report["ratings"]["chi_squared"][dim] = chi_squared_2x2(table)
            except EvalError as exc:
                report["ratings"]["chi_squared"][dim] = f"undefined: {exc}"
    else:
        report["ratings"] = None
        report["notes"] = ["no subjective ratings supplied; ratings section omitted"]
    report["stats"] = stats
    return report


def _paired_binary(outcomes: list[RunOutcome], value) -> Optional[tuple[list, list]]:
    by_key = {(o.query_id, o.system): value(o) for o in outcomes}
    ids = sorted({o.query_id for o in outcomes})
    a, b = [], []
    for qid in ids:
        va, vb = by_key.get((qid, "engine")), by_key.get((qid, "rag"))
        if va is None or vb is None:
            continue
        a.append(va)
        b.append(vb)
    return (a, b) if len(a) >= 2 else None


def export_report(outcomes: list[RunOutcome],
                  ratings: Optional[list[SubjectiveRating]],
                  out_dir) -> dict:
    """Write metrics.csv, ratings.csv (when given), and report.json; returns the report."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = build_report(outcomes, ratings)

    metrics_path = out_dir / "metrics.csv"
    fields = ["system", "accuracy_percent", "accuracy_correct", "accuracy_judged",
              "consistency_percent", "consistent_count", "consistency_defined"]
    with open(metrics_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        for system in sorted(report["metrics"]):
            writer.writerow(report["metrics"][system])

    if ratings:
        summary_rows = report["ratings"]["summary"]
        with open(out_dir / "ratings.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(summary_rows[0]))
            writer.writeheader()
            writer.writerows(summary_rows)

    (out_dir / "report.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n")
    return report
