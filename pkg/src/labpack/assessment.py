"""Replication assessments: incidents, rubric ratings, effort, PRE/POST means.

Assessments live in ``assessments/<replication-id>.json`` inside a package
root. Usability scores are Likert values in half-point steps; the other
rubrics are ordinal chains declared worst to best (error severity is
declared by magnitude: Slight < Medium < Serious, and Slight is best).
"""

from __future__ import annotations

import json
import math
import os
import re
import tempfile
from dataclasses import dataclass, field, replace
from decimal import Decimal, InvalidOperation
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Protocol

from labpack import _json
from labpack.errors import (
    AssessmentError,
    EmptyPartition,
    InvalidRating,
    MixedChains,
    UnknownCategory,
    UnknownReplication,
)

_REPLICATION_ID = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")
_SLUG = re.compile(r"^[a-z0-9]+(?:-[a-z0-9]+)*$")


def _norm(text: str) -> str:
    return re.sub(r"[^a-z0-9]", "", str(text).lower())


def check_replication_id(replication_id: str) -> str:
    if not isinstance(replication_id, str) or not _REPLICATION_ID.match(replication_id):
        raise AssessmentError(
            f"replication id {replication_id!r} must be a file-name safe token, e.g. 'UPM-2011'"
        )
    return replication_id


# -- incidents ---------------------------------------------------------------


class IncidentCategory(str, Enum):
    COMMUNICATION = "Communication"
    EXPERIMENTAL_DESIGN = "ExperimentalDesign"
    TRAINING = "Training"
    MATERIAL_PREPARATION = "MaterialPreparation"
    OPERATION = "Operation"
    DATA_ANALYSIS = "DataAnalysis"
    RESEARCH_PROCESS = "ResearchProcess"

    @classmethod
    def parse(cls, text) -> "IncidentCategory":
        if isinstance(text, cls):
            return text
        wanted = _norm(text)
        for member in cls:
            if _norm(member.value) == wanted:
                return member
        raise UnknownCategory(str(text))


@dataclass(frozen=True)
class IncidentRecord:
    replication_id: str
    category: IncidentCategory
    code: str
    description: str = ""

    def __post_init__(self):
        check_replication_id(self.replication_id)
        object.__setattr__(self, "category", IncidentCategory.parse(self.category))
        if not isinstance(self.code, str) or not _SLUG.match(self.code):
            raise AssessmentError(f"incident code {self.code!r} must be a non-empty slug")

    def to_dict(self) -> dict:
        return {"category": self.category.value, "code": self.code, "description": self.description}


_C = IncidentCategory

# Seed code list, one entry per incident type observed across replications.
# New codes are allowed; this list only gives recorders a shared vocabulary.
SEED_INCIDENTS: tuple[tuple[IncidentCategory, str, str], ...] = (
    (_C.COMMUNICATION, "no-communication", "No communication"),
    (_C.COMMUNICATION, "communication-without-direct-contact", "Communication without direct contact"),
    (_C.COMMUNICATION, "limited-or-late-communication", "Limited or after-the-event communication"),
    (_C.COMMUNICATION, "no-design-validation-meeting", "No meeting held to validate design"),
    (_C.COMMUNICATION, "no-in-person-session-observation", "No in-person observation of sessions"),
    (_C.COMMUNICATION, "replicator-felt-cut-off", "Replicator felt cut off"),
    (_C.COMMUNICATION, "many-misgivings", "There were a lot of misgivings"),
    (_C.EXPERIMENTAL_DESIGN, "experiment-hard-to-understand", "Experiment is hard to understand"),
    (_C.EXPERIMENTAL_DESIGN, "less-time-for-one-treatment", "Less time assigned to one of the treatments"),
    (_C.EXPERIMENTAL_DESIGN, "factor-crossing-error", "Factor crossing error"),
    (_C.EXPERIMENTAL_DESIGN, "non-randomized-subgroup-assignment", "Non-randomized assignment of subgroups"),
    (_C.EXPERIMENTAL_DESIGN, "unbalanced-groups", "Unbalanced experimental groups"),
    (_C.TRAINING, "design-change-misgivings", "Misgivings about the impact of the design change"),
    (_C.TRAINING, "underestimated-adaptation-workload", "Underestimated experiment adaptation workload"),
    (_C.TRAINING, "reduced-training-time", "Reduced training time"),
    (_C.TRAINING, "other-training-material", "Other material used in training"),
    (_C.TRAINING, "training-treatment-mismatch", "Training received did not match the treatment"),
    (_C.MATERIAL_PREPARATION, "functional-technique-misunderstood", "A treatment (functional technique) was misunderstood"),
    (_C.MATERIAL_PREPARATION, "structural-technique-misunderstood", "A treatment (structural technique) was misunderstood"),
    (_C.MATERIAL_PREPARATION, "too-much-material-one-treatment", "Too much material for one treatment"),
    (_C.MATERIAL_PREPARATION, "supplementary-sheet-removed", "The supplementary sheet was removed"),
    (_C.MATERIAL_PREPARATION, "line-numbers-added", "Line numbers were added to the source code"),
    (_C.MATERIAL_PREPARATION, "program-not-compilable", "One of the programs could not be compiled on the platform"),
    (_C.MATERIAL_PREPARATION, "material-preparation-support-needed", "Support from other people was required to prepare the material"),
    (_C.MATERIAL_PREPARATION, "underestimated-material-workload", "Underestimated material preparation workload"),
    (_C.OPERATION, "material-contingency-fear", "Fear that material contingencies would affect session time"),
    (_C.OPERATION, "complex-time-consuming-activity", "Complex, time-consuming activity"),
    (_C.OPERATION, "many-participant-questions", "Participants ask a lot of questions"),
    (_C.OPERATION, "material-not-read", "Participants do not read all the material"),
    (_C.OPERATION, "researcher-unfamiliar-with-objects", "Researcher is unfamiliar with objects and cannot answer questions"),
    (_C.OPERATION, "limited-session-time", "Limited session time"),
    (_C.OPERATION, "rigorous-session-atmosphere", "Rigorous atmosphere of session"),
    (_C.DATA_ANALYSIS, "participant-fatigue", "Effect of fatigue on participants"),
    (_C.DATA_ANALYSIS, "wrong-treatment-applied", "Some participants apply wrong treatment"),
    (_C.DATA_ANALYSIS, "no-analysis", "No analysis was conducted"),
    (_C.DATA_ANALYSIS, "analysis-postponed", "Analysis was postponed"),
    (_C.DATA_ANALYSIS, "analysis-support-needed", "Support from another person was required to complete analysis"),
    (_C.DATA_ANALYSIS, "experimenter-defined-correctness", "Correctness criterion defined by experimenter"),
    (_C.DATA_ANALYSIS, "ambiguous-participant-artifacts", "Test cases and faults written by participants are ambiguous"),
    (_C.DATA_ANALYSIS, "correction-too-complicated", "Correction was perceived as very complicated"),
    (_C.DATA_ANALYSIS, "no-analysis-guidelines", "No guidelines or examples were available for the analysis"),
    (_C.DATA_ANALYSIS, "no-previous-data", "No previous data were available to compare results"),
    (_C.RESEARCH_PROCESS, "fault-description-not-integrated", "Fault description was not integrated into the laboratory package"),
    (_C.RESEARCH_PROCESS, "fault-description-not-detailed", "Fault description was not detailed enough"),
    (_C.RESEARCH_PROCESS, "fault-description-errors", "Errors in the fault/failure description"),
    (_C.RESEARCH_PROCESS, "replication-notes-destroyed", "Notes taken on the replication were destroyed"),
    (_C.RESEARCH_PROCESS, "reporting-postponed", "Replication reporting was postponed"),
    (_C.RESEARCH_PROCESS, "research-cycle-incomplete", "Research cycle was incomplete"),
    (_C.RESEARCH_PROCESS, "experiment-not-evolved", "Experiment was not evolved"),
)


def seed_code(code: str) -> tuple[IncidentCategory, str, str] | None:
    for row in SEED_INCIDENTS:
        if row[1] == code:
            return row
    return None


# -- usability ---------------------------------------------------------------


class UsabilityAttribute(str, Enum):
    EASE_OF_APPLICATION = "EaseOfApplication"
    EASE_OF_UNDERSTANDING = "EaseOfUnderstanding"
    EASE_OF_SEARCH = "EaseOfSearch"


class UsabilityComponent(str, Enum):
    TASK_ORIENTATION = "TaskOrientation"
    ACCURACY = "Accuracy"
    COMPLETENESS = "Completeness"
    CLARITY = "Clarity"
    CONCRETION = "Concretion"
    STYLE = "Style"
    ORGANIZATION = "Organization"
    RETRIEVABILITY = "Retrievability"
    VISUAL_EFFECTIVENESS = "VisualEffectiveness"

    @property
    def attribute(self) -> UsabilityAttribute:
        return _COMPONENT_ATTRIBUTE[self]

    @classmethod
    def parse(cls, text) -> "UsabilityComponent":
        if isinstance(text, cls):
            return text
        wanted = _norm(text)
        for member in cls:
            if _norm(member.value) == wanted:
                return member
        raise InvalidRating(f"unknown usability component {text!r}")


_COMPONENT_ATTRIBUTE = {
    UsabilityComponent.TASK_ORIENTATION: UsabilityAttribute.EASE_OF_APPLICATION,
    UsabilityComponent.ACCURACY: UsabilityAttribute.EASE_OF_APPLICATION,
    UsabilityComponent.COMPLETENESS: UsabilityAttribute.EASE_OF_APPLICATION,
    UsabilityComponent.CLARITY: UsabilityAttribute.EASE_OF_UNDERSTANDING,
    UsabilityComponent.CONCRETION: UsabilityAttribute.EASE_OF_UNDERSTANDING,
    UsabilityComponent.STYLE: UsabilityAttribute.EASE_OF_UNDERSTANDING,
    UsabilityComponent.ORGANIZATION: UsabilityAttribute.EASE_OF_SEARCH,
    UsabilityComponent.RETRIEVABILITY: UsabilityAttribute.EASE_OF_SEARCH,
    UsabilityComponent.VISUAL_EFFECTIVENESS: UsabilityAttribute.EASE_OF_SEARCH,
}

LIKERT_MIN = Decimal(1)
LIKERT_MAX = Decimal(5)


def likert(value) -> Decimal:
    """Coerce ``value`` to a Likert score in [1, 5] with half-point steps."""
    if isinstance(value, bool):
        raise InvalidRating(f"score {value!r} is not a number")
    try:
        score = value if isinstance(value, Decimal) else Decimal(str(value))
    except InvalidOperation:
        raise InvalidRating(f"score {value!r} is not a number") from None
    if not score.is_finite() or not LIKERT_MIN <= score <= LIKERT_MAX or (score * 2) % 1 != 0:
        raise InvalidRating(f"score {value!r} is not in 1..5 in steps of 0.5")
    return score


@dataclass(frozen=True)
class UsabilityScore:
    replication_id: str
    values: Mapping[UsabilityComponent, Decimal] = field(hash=False)

    def __post_init__(self):
        check_replication_id(self.replication_id)
        parsed = {UsabilityComponent.parse(k): likert(v) for k, v in self.values.items()}
        missing = [c.value for c in UsabilityComponent if c not in parsed]
        if missing:
            raise InvalidRating(f"usability score for {self.replication_id} lacks {', '.join(missing)}")
        object.__setattr__(self, "values", {c: parsed[c] for c in UsabilityComponent})

    def to_dict(self) -> dict:
        return {c.value: _number(v) for c, v in self.values.items()}


def _number(value: Decimal):
    return int(value) if value == value.to_integral_value() else float(value)


# -- ordinal chains ----------------------------------------------------------


class Ordering(str, Enum):
    LESS = "less"
    EQUAL = "equal"
    GREATER = "greater"
    INCOMPARABLE = "incomparable"


class OrdinalChain(str, Enum):
    """An enum whose declaration order is its chain order.

    Members with ``value == "NA"`` sit outside the chain.
    """

    @property
    def rank(self) -> int | None:
        if self.value == "NA":
            return None
        chain = [m for m in type(self) if m.value != "NA"]
        return chain.index(self)

    @classmethod
    def chain(cls) -> list:
        return [m for m in cls if m.value != "NA"]

    @classmethod
    def higher_is_better(cls) -> bool:
        return True

    @classmethod
    def parse(cls, text):
        if isinstance(text, cls):
            return text
        wanted = _norm(text)
        for member in cls:
            if wanted == _norm(member.value) or wanted in _ALIASES.get(member, ()):
                return member
        raise InvalidRating(f"{text!r} is not a {cls.__name__} value")


class InstructionLevel(OrdinalChain):
    MATERIALS_ONLY = "MaterialsOnly"
    BASIC = "Basic"
    DETAILED = "Detailed"
    DETAILED_GROUNDED = "DetailedGrounded"


class Adaptability(OrdinalChain):
    UNCHANGEABLE = "Unchangeable"
    PARTIALLY_ADAPTABLE = "PartiallyAdaptable"
    ADAPTABLE = "Adaptable"


class ReplicationReported(OrdinalChain):
    NO = "No"
    LATE = "Late"
    YES = "Yes"


class AggregatedResults(OrdinalChain):
    NO = "No"
    PARTIAL = "Partial"
    YES = "Yes"


class VersionControl(OrdinalChain):
    NO = "No"
    CURRENT_VERSION_ONLY = "CurrentVersionOnly"
    LOG = "Log"
    RETRIEVABLE_VERSIONS = "RetrievableVersions"


class QuestionAnswering(OrdinalChain):
    LOW = "Low"
    MEDIUM = "Medium"
    HIGH = "High"
    COMPLETE = "Complete"


class EnvironmentReproduction(OrdinalChain):
    NA = "NA"
    LOW = "Low"
    MEDIUM = "Medium"
    COMPLETE = "Complete"


class ErrorSeverity(OrdinalChain):
    SLIGHT = "Slight"
    MEDIUM = "Medium"
    SERIOUS = "Serious"

    @classmethod
    def higher_is_better(cls) -> bool:
        return False


_ALIASES = {
    Adaptability.PARTIALLY_ADAPTABLE: ("partiallyadapt", "partialadapt"),
    Adaptability.ADAPTABLE: ("adapt",),
    EnvironmentReproduction.NA: ("na", "notapplicable"),
}

ORDINAL_CHAINS: tuple[type[OrdinalChain], ...] = (
    InstructionLevel,
    Adaptability,
    ReplicationReported,
    AggregatedResults,
    VersionControl,
    QuestionAnswering,
    EnvironmentReproduction,
    ErrorSeverity,
)


def compare_ordinal(a: OrdinalChain, b: OrdinalChain) -> Ordering:
    """Compare two values of the same chain by chain position."""
    if type(a) is not type(b):
        raise MixedChains(a, b)
    ra, rb = a.rank, b.rank
    if ra is None or rb is None:
        return Ordering.INCOMPARABLE
    if ra < rb:
        return Ordering.LESS
    if ra > rb:
        return Ordering.GREATER
    return Ordering.EQUAL


def is_better(a: OrdinalChain, b: OrdinalChain) -> bool:
    """True when ``a`` is a strictly better rating than ``b``."""
    order = compare_ordinal(a, b)
    if order is Ordering.INCOMPARABLE:
        return False
    if type(a).higher_is_better():
        return order is Ordering.GREATER
    return order is Ordering.LESS


class Scope(str, Enum):
    TRAINING = "Training"
    DESIGN = "Design"
    OPERATIONAL = "Operational"
    COMPLETE = "Complete"

    @classmethod
    def parse(cls, text) -> "Scope":
        if isinstance(text, cls):
            return text
        for member in cls:
            if _norm(member.value) == _norm(text):
                return member
        raise InvalidRating(f"{text!r} is not a scope element")


@dataclass(frozen=True)
class CompletenessRating:
    replication_id: str
    scope: frozenset[Scope]
    instruction_level: InstructionLevel
    adaptability: Adaptability
    replication_reported: ReplicationReported
    aggregated_results: AggregatedResults
    version_control: VersionControl

    def __post_init__(self):
        check_replication_id(self.replication_id)
        scope = frozenset(Scope.parse(s) for s in self.scope)
        if not scope:
            raise InvalidRating("scope must name at least one element")
        if Scope.COMPLETE in scope and len(scope) > 1:
            raise InvalidRating("Complete scope cannot be combined with partial scope elements")
        object.__setattr__(self, "scope", scope)
        for name, chain in _COMPLETENESS_FIELDS.items():
            object.__setattr__(self, name, chain.parse(getattr(self, name)))

    def to_dict(self) -> dict:
        out = {"scope": [s.value for s in Scope if s in self.scope]}
        for name in _COMPLETENESS_FIELDS:
            out[name] = getattr(self, name).value
        return out


_COMPLETENESS_FIELDS = {
    "instruction_level": InstructionLevel,
    "adaptability": Adaptability,
    "replication_reported": ReplicationReported,
    "aggregated_results": AggregatedResults,
    "version_control": VersionControl,
}


@dataclass(frozen=True)
class EfficacyRating:
    replication_id: str
    question_answering: QuestionAnswering
    environment_reproduction: EnvironmentReproduction
    mean_error_severity: ErrorSeverity

    def __post_init__(self):
        check_replication_id(self.replication_id)
        for name, chain in _EFFICACY_FIELDS.items():
            object.__setattr__(self, name, chain.parse(getattr(self, name)))

    def to_dict(self) -> dict:
        return {name: getattr(self, name).value for name in _EFFICACY_FIELDS}


_EFFICACY_FIELDS = {
    "question_answering": QuestionAnswering,
    "environment_reproduction": EnvironmentReproduction,
    "mean_error_severity": ErrorSeverity,
}


class EffortActivity(str, Enum):
    INSTANTIATION = "Instantiation"
    REPLICATION = "Replication"


@dataclass(frozen=True)
class EffortRecord:
    activity: EffortActivity
    person_hours: Decimal

    def __post_init__(self):
        try:
            activity = EffortActivity(self.activity) if not isinstance(self.activity, EffortActivity) else self.activity
        except ValueError:
            raise InvalidRating(f"unknown effort activity {self.activity!r}") from None
        try:
            hours = Decimal(str(self.person_hours))
        except InvalidOperation:
            raise InvalidRating(f"person_hours {self.person_hours!r} is not a number") from None
        if not hours.is_finite() or hours < 0:
            raise InvalidRating("person_hours must be a non-negative number")
        object.__setattr__(self, "activity", activity)
        object.__setattr__(self, "person_hours", hours)

    def to_dict(self) -> dict:
        return {"activity": self.activity.value, "person_hours": str(self.person_hours)}


# -- per-replication record --------------------------------------------------


@dataclass(frozen=True)
class Assessment:
    replication_id: str
    incidents: tuple[IncidentRecord, ...] = ()
    usability: UsabilityScore | None = None
    completeness: CompletenessRating | None = None
    efficacy: EfficacyRating | None = None
    effort: tuple[EffortRecord, ...] = ()

    def to_dict(self) -> dict:
        return {
            "incidents": [i.to_dict() for i in self.incidents],
            "usability": self.usability.to_dict() if self.usability else {},
            "completeness": self.completeness.to_dict() if self.completeness else {},
            "efficacy": self.efficacy.to_dict() if self.efficacy else {},
            "effort": [e.to_dict() for e in self.effort],
        }

    def dumps(self) -> str:
        return _json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, replication_id: str, data: Mapping) -> "Assessment":
        if not isinstance(data, Mapping):
            raise InvalidRating("assessment file must hold a JSON object")
        unknown = set(data) - {"incidents", "usability", "completeness", "efficacy", "effort"}
        if unknown:
            raise InvalidRating(f"unknown assessment keys: {', '.join(sorted(unknown))}")
        incidents = tuple(
            IncidentRecord(
                replication_id,
                _get(row, "category"),
                _get(row, "code"),
                row.get("description", ""),
            )
            for row in _list(data.get("incidents", []), "incidents")
        )
        usability = data.get("usability") or None
        completeness = data.get("completeness") or None
        efficacy = data.get("efficacy") or None
        return cls(
            replication_id=replication_id,
            incidents=incidents,
            usability=UsabilityScore(replication_id, usability) if usability else None,
            completeness=CompletenessRating(
                replication_id,
                scope=frozenset(_list(_get(completeness, "scope"), "scope")),
                **{k: _get(completeness, k) for k in _COMPLETENESS_FIELDS},
            )
            if completeness
            else None,
            efficacy=EfficacyRating(replication_id, **{k: _get(efficacy, k) for k in _EFFICACY_FIELDS})
            if efficacy
            else None,
            effort=tuple(
                EffortRecord(_get(row, "activity"), _get(row, "person_hours"))
                for row in _list(data.get("effort", []), "effort")
            ),
        )

    @classmethod
    def loads(cls, replication_id: str, text: str) -> "Assessment":
        return cls.from_dict(replication_id, json.loads(text, parse_float=Decimal))


def _get(obj, key):
    if not isinstance(obj, Mapping) or key not in obj:
        raise InvalidRating(f"missing field {key!r}")
    return obj[key]


def _list(value, name):
    if not isinstance(value, list):
        raise InvalidRating(f"{name} must be a list")
    return value


# -- storage -----------------------------------------------------------------


class AssessmentSource(Protocol):
    def assessment(self, replication_id: str) -> Assessment | None: ...


class AssessmentStore:
    """Read/append access to ``assessments/*.json`` under a package root."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.directory = self.root / "assessments"

    def path(self, replication_id: str) -> Path:
        return self.directory / f"{check_replication_id(replication_id)}.json"

    def ids(self) -> list[str]:
        if not self.directory.is_dir():
            return []
        return sorted(p.stem for p in self.directory.glob("*.json"))

    def assessment(self, replication_id: str) -> Assessment | None:
        path = self.path(replication_id)
        if not path.is_file():
            return None
        return Assessment.loads(replication_id, path.read_text(encoding="utf-8"))

    def load(self, replication_id: str) -> Assessment:
        found = self.assessment(replication_id)
        if found is None:
            raise UnknownReplication(replication_id)
        return found

    def all(self) -> list[Assessment]:
        return [self.load(rid) for rid in self.ids()]

    def _update(self, replication_id: str, change) -> Assessment:
        from labpack.store import package_lock

        with package_lock(self.root):
            current = self.assessment(replication_id) or Assessment(replication_id)
            updated = change(current)
            self.directory.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
            try:
                with os.fdopen(fd, "wb") as fh:
                    fh.write(updated.dumps().encode("utf-8"))
                os.replace(tmp, self.path(replication_id))
            except BaseException:
                Path(tmp).unlink(missing_ok=True)
                raise
        return updated

    def record_incident(self, record: IncidentRecord) -> Assessment:
        return self._update(
            record.replication_id, lambda a: replace(a, incidents=a.incidents + (record,))
        )

    def record_usability(self, score: UsabilityScore) -> Assessment:
        return self._update(score.replication_id, lambda a: replace(a, usability=score))

    def record_completeness(self, rating: CompletenessRating) -> Assessment:
        return self._update(rating.replication_id, lambda a: replace(a, completeness=rating))

    def record_efficacy(self, rating: EfficacyRating) -> Assessment:
        return self._update(rating.replication_id, lambda a: replace(a, efficacy=rating))

    def record_effort(self, replication_id: str, effort: EffortRecord) -> Assessment:
        return self._update(replication_id, lambda a: replace(a, effort=a.effort + (effort,)))

    def query(
        self,
        category: IncidentCategory | str | None = None,
        replication_id: str | None = None,
    ) -> list[IncidentRecord]:
        wanted = IncidentCategory.parse(category) if category is not None else None
        ids = [replication_id] if replication_id is not None else self.ids()
        out = []
        for rid in ids:
            found = self.assessment(rid)
            if found is None:
                continue
            out.extend(i for i in found.incidents if wanted is None or i.category is wanted)
        return out

    def usability_scores(self) -> list[UsabilityScore]:
        return [a.usability for a in self.all() if a.usability is not None]


def record_incident(store: AssessmentStore, record: IncidentRecord) -> None:
    store.record_incident(record)


# -- PRE/POST means ----------------------------------------------------------


class MeanPair(NamedTuple):
    pre: Fraction
    post: Fraction

    def rounded(self, places: int = 1) -> tuple[Decimal, Decimal]:
        return round_half_up(self.pre, places), round_half_up(self.post, places)


def round_half_up(value: Fraction | Decimal | int, places: int = 1) -> Decimal:
    """Round an exact value half away from zero to ``places`` decimals."""
    exact = Fraction(value)
    scaled = abs(exact) * 10**places
    digits = math.floor(scaled + Fraction(1, 2))
    sign = -1 if exact < 0 else 1
    return Decimal(sign * digits).scaleb(-places)


def summarize_pre_post(
    scores: Iterable[UsabilityScore], post_ids: Iterable[str]
) -> dict[UsabilityComponent, MeanPair]:
    """Exact per-component means of the PRE (not in ``post_ids``) and POST groups."""
    scores = list(scores)
    post = set(post_ids)
    ids = [s.replication_id for s in scores]
    if len(set(ids)) != len(ids):
        raise AssessmentError("each replication may contribute only one usability score")
    unknown = post - set(ids)
    if unknown:
        raise UnknownReplication(sorted(unknown)[0])
    pre_group = [s for s in scores if s.replication_id not in post]
    post_group = [s for s in scores if s.replication_id in post]
    if not pre_group:
        raise EmptyPartition("PRE")
    if not post_group:
        raise EmptyPartition("POST")

    def mean(group: list[UsabilityScore], component: UsabilityComponent) -> Fraction:
        total = sum((Fraction(s.values[component]) for s in group), Fraction(0))
        return total / len(group)

    return {c: MeanPair(mean(pre_group, c), mean(post_group, c)) for c in UsabilityComponent}


def pre_post_table(summary: Mapping[UsabilityComponent, MeanPair]) -> dict:
    """JSON-ready rendering of :func:`summarize_pre_post` (one decimal, half-up)."""
    rows = []
    for component, pair in summary.items():
        pre, post = pair.rounded()
        rows.append(
            {
                "attribute": component.attribute.value,
                "component": component.value,
                "mean_pre": str(pre),
                "mean_post": str(post),
                "exact_pre": f"{pair.pre.numerator}/{pair.pre.denominator}",
                "exact_post": f"{pair.post.numerator}/{pair.post.denominator}",
            }
        )
    return {"components": rows}


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class AssessmentReport:
    replication_id: str
    data: dict = field(hash=False)

    def to_dict(self) -> dict:
        return self.data

    def dumps(self) -> str:
        return _json.dumps(self.data)

    def render_text(self) -> str:
        d = self.data
        lines = [f"Assessment of replication {self.replication_id}", ""]
        lines.append(f"Incidents ({d['incident_count']}):")
        for block in d["incidents"]:
            if not block["incidents"]:
                continue
            lines.append(f"  {block['category']} ({len(block['incidents'])})")
            for inc in block["incidents"]:
                text = f"    - {inc['code']}"
                if inc["description"]:
                    text += f": {inc['description']}"
                lines.append(text)
        lines.append("")
        lines.append("Usability:")
        if d["usability"]:
            for row in d["usability"]:
                lines.append(f"  {row['attribute']:<20} {row['component']:<20} {row['score']}")
        else:
            lines.append("  (not rated)")
        lines.append("Completeness:")
        if d["completeness"]:
            for key, value in d["completeness"].items():
                shown = ", ".join(value) if isinstance(value, list) else value
                lines.append(f"  {key:<22} {shown}")
        else:
            lines.append("  (not rated)")
        lines.append("Efficacy:")
        if d["efficacy"]:
            for key, value in d["efficacy"].items():
                lines.append(f"  {key:<26} {value}")
        else:
            lines.append("  (not rated)")
        lines.append("Effort:")
        if d["effort"]:
            for row in d["effort"]:
                lines.append(f"  {row['activity']:<14} {row['person_hours']} h")
            lines.append(f"  {'total':<14} {d['effort_total_hours']} h")
        else:
            lines.append("  (not logged)")
        return "\n".join(lines) + "\n"


def assessment_report(store: AssessmentSource, replication_id: str) -> AssessmentReport:
    found = store.assessment(replication_id)
    if found is None:
        raise UnknownReplication(replication_id)
    incidents = []
    for category in IncidentCategory:
        rows = sorted(
            (i.to_dict() for i in found.incidents if i.category is category),
            key=lambda r: (r["code"], r["description"]),
        )
        incidents.append({"category": category.value, "incidents": rows})
    usability = []
    if found.usability:
        usability = [
            {"attribute": c.attribute.value, "component": c.value, "score": str(found.usability.values[c])}
            for c in UsabilityComponent
        ]
    total = sum((e.person_hours for e in found.effort), Decimal(0))
    data = {
        "replication_id": replication_id,
        "incident_count": len(found.incidents),
        "incidents": incidents,
        "usability": usability,
        "completeness": found.completeness.to_dict() if found.completeness else {},
        "efficacy": found.efficacy.to_dict() if found.efficacy else {},
        "effort": [e.to_dict() for e in found.effort],
        "effort_total_hours": str(total),
    }
    return AssessmentReport(replication_id, data)
