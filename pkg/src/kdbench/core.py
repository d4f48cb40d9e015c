"""Domain data model, raw keystroke log parsing, and dataset validation.

A raw log is a stream of press/release events with millisecond Unix
timestamps. Events are grouped into sessions, sessions into subjects, and
subjects (optionally annotated with age group and gender) into a dataset
that the protocol and feature stages consume.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping

from .errors import ParseError


class AgeGroup(Enum):
    """The six age bins used for demographic grouping."""

    A10_13 = "10-13"
    A14_17 = "14-17"
    A18_26 = "18-26"
    A27_35 = "27-35"
    A36_44 = "36-44"
    A45_79 = "45-79"


class Gender(Enum):
    MALE = "M"
    FEMALE = "F"


@dataclass(frozen=True, slots=True)
class Demographics:
    age_group: AgeGroup
    gender: Gender

    def label(self) -> str:
        return f"{self.age_group.value}/{self.gender.value}"


# Canonical ordering of the 12 (age, gender) groups. Group-indexed
# configuration (generator weights, fairness tables) follows this order.
ALL_GROUPS: tuple[Demographics, ...] = tuple(
    Demographics(age, gender) for age in AgeGroup for gender in Gender
)


@dataclass(frozen=True, slots=True)
class KeyEvent:
    """One key press/release pair.

    Timestamps are integer Unix epoch milliseconds; a key cannot be
    released before it is pressed, and codes must fit the ASCII range.
    """

    ascii_code: int
    press_ms: int
    release_ms: int

    def __post_init__(self) -> None:
        if not 0 <= self.ascii_code <= 255:
            raise ValueError(f"ascii_code {self.ascii_code} outside [0, 255]")
        if self.release_ms < self.press_ms:
            raise ValueError(
                f"release {self.release_ms} precedes press {self.press_ms}"
            )


# Deterministic event ordering: press time, then release, then key code.
def event_sort_key(event: KeyEvent) -> tuple[int, int, int]:
    return (event.press_ms, event.release_ms, event.ascii_code)


@dataclass(frozen=True)
class Session:
    """One acquisition session: an ordered sequence of key events.

    The container itself is permissive (an empty or unsorted session can be
    represented so that validation can report it); `issues` enumerates
    invariant violations.
    """

    session_id: str
    events: tuple[KeyEvent, ...]

    def issues(self) -> list[str]:
        problems = []
        if not self.events:
            problems.append(f"session {self.session_id}: no events")
        presses = [e.press_ms for e in self.events]
        if any(b < a for a, b in zip(presses, presses[1:])):
            problems.append(f"session {self.session_id}: press times not sorted")
        return problems

    def start_ms(self) -> int:
        if not self.events:
            raise ValueError(f"session {self.session_id} is empty")
        return self.events[0].press_ms


@dataclass(frozen=True)
class Subject:
    subject_id: str
    demographics: Demographics | None
    sessions: tuple[Session, ...]

    def session_ids(self) -> list[str]:
        return [s.session_id for s in self.sessions]


class DatasetLabel(Enum):
    DEVELOPMENT = "development"
    EVALUATION = "evaluation"


@dataclass(frozen=True)
class Dataset:
    """A collection of subjects, optionally tagged with its protocol role."""

    subjects: tuple[Subject, ...]
    label: DatasetLabel | None = None

    def __post_init__(self) -> None:
        ids = [s.subject_id for s in self.subjects]
        if len(ids) != len(set(ids)):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate subject ids: {dupes}")

    def __len__(self) -> int:
        return len(self.subjects)

    def subject_map(self) -> dict[str, Subject]:
        return {s.subject_id: s for s in self.subjects}

    def n_sessions(self) -> int:
        return sum(len(s.sessions) for s in self.subjects)


class RawLogFormat(Enum):
    """Column layout of the raw log TSV.

    PLAIN lines carry `subject_id  session_id  ascii  press_ms  release_ms`;
    WITH_DEMOGRAPHICS appends `age_group  gender` sidecar columns to every line.
    """

    PLAIN = 5
    WITH_DEMOGRAPHICS = 7


@dataclass(frozen=True)
class ValidationResult:
    eligible: bool
    issues: tuple[str, ...] = ()


REQUIRED_SESSIONS = 15


def _parse_demographics_fields(age_token: str, gender_token: str, lineno: int) -> Demographics:
    try:
        age = AgeGroup(age_token)
    except ValueError:
        raise ParseError(f"unknown age group {age_token!r}", lineno) from None
    try:
        gender = Gender(gender_token)
    except ValueError:
        raise ParseError(f"unknown gender {gender_token!r}", lineno) from None
    return Demographics(age, gender)


def parse_raw_log(
    lines: Iterable[str], fmt: RawLogFormat = RawLogFormat.PLAIN
) -> Dataset:
    """Parse a raw log TSV stream into a Dataset.

    Events are grouped by (subject_id, session_id) in order of first
    appearance and sorted by (press, release, ascii code) within each
    session. Raises ParseError with the offending line number on malformed
    lines, invariant violations, or duplicated events.
    """
    events: dict[str, dict[str, list[KeyEvent]]] = {}
    demographics: dict[str, Demographics] = {}
    seen: set[tuple[str, str, int, int, int]] = set()

    for lineno, raw_line in enumerate(lines, start=1):
        line = raw_line.rstrip("\n")
        if not line:
            continue
        fields = line.split("\t")
        if len(fields) != fmt.value:
            raise ParseError(
                f"expected {fmt.value} tab-separated fields, got {len(fields)}",
                lineno,
            )
        subject_id, session_id = fields[0], fields[1]
        try:
            code = int(fields[2])
            press = int(fields[3])
            release = int(fields[4])
        except ValueError:
            raise ParseError(f"non-integer event field in {fields[2:5]!r}", lineno) from None
        if not 0 <= code <= 255:
            raise ParseError(f"key code {code} outside [0, 255]", lineno)
        if release < press:
            raise ParseError(f"release {release} precedes press {press}", lineno)

        triple = (subject_id, session_id, code, press, release)
        if triple in seen:
            raise ParseError(f"duplicate event {triple!r}", lineno)
        seen.add(triple)

        if fmt is RawLogFormat.WITH_DEMOGRAPHICS:
            demo = _parse_demographics_fields(fields[5], fields[6], lineno)
            prior = demographics.setdefault(subject_id, demo)
            if prior != demo:
                raise ParseError(
                    f"conflicting demographics for subject {subject_id!r}", lineno
                )

        events.setdefault(subject_id, {}).setdefault(session_id, []).append(
            KeyEvent(code, press, release)
        )

    subjects = []
    for subject_id, sessions in events.items():
        built = tuple(
            Session(session_id, tuple(sorted(evts, key=event_sort_key)))
            for session_id, evts in sessions.items()
        )
        subjects.append(Subject(subject_id, demographics.get(subject_id), built))
    return Dataset(tuple(subjects))


def validate_subject(
    subject: Subject, required_sessions: int = REQUIRED_SESSIONS
) -> ValidationResult:
    """Check protocol eligibility: session count and per-session invariants.

    Issues are reported, never raised.
    """
    issues: list[str] = []
    n = len(subject.sessions)
    if n != required_sessions:
        issues.append(f"session count {n} < {required_sessions}" if n < required_sessions
                      else f"session count {n} > {required_sessions}")
    ids = subject.session_ids()
    if len(ids) != len(set(ids)):
        issues.append("duplicate session ids")
    for session in subject.sessions:
        issues.extend(session.issues())
    return ValidationResult(eligible=not issues, issues=tuple(issues))


def filter_eligible(
    dataset: Dataset, required_sessions: int = REQUIRED_SESSIONS
) -> Dataset:
    """Keep exactly the eligible subjects, preserving their original order."""
    kept = tuple(
        s for s in dataset.subjects if validate_subject(s, required_sessions).eligible
    )
    return Dataset(kept, label=dataset.label)


def attach_demographics(
    dataset: Dataset,
    mapping: Mapping[str, Demographics],
    require_all: bool = False,
) -> Dataset:
    """Return a copy of the dataset with demographics from `mapping` attached.

    Subjects absent from the mapping keep their existing annotation; with
    `require_all` every subject must be covered.
    """
    missing = [s.subject_id for s in dataset.subjects if s.subject_id not in mapping]
    if require_all and missing:
        raise ParseError(f"demographics missing for subjects: {missing[:5]}")
    subjects = tuple(
        replace(s, demographics=mapping.get(s.subject_id, s.demographics))
        for s in dataset.subjects
    )
    return Dataset(subjects, label=dataset.label)
