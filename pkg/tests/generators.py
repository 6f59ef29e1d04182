"""Seeded generators of valid, varied packages."""

from __future__ import annotations

import random
import string
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from decimal import Decimal

from labpack.assessment import (
    Assessment,
    CompletenessRating,
    EfficacyRating,
    EffortRecord,
    IncidentCategory,
    IncidentRecord,
    UsabilityComponent,
    UsabilityScore,
)
from labpack.lifecycle import AggregationReport, ReplicationReport, add_aggregation, add_replication, scaffold_init
from labpack.model import Attachment, Contact, CoreSnapshot, Evidence, Manifest, ModuleKind, Package, Section

_TEXT_POOL = (
    string.ascii_letters + string.digits + "  \n\n\t#*-_[]()`>|" + "éñüßøçЖλ中文🙂 "
)


def random_text(rng: random.Random, max_len: int = 120) -> str:
    n = rng.randrange(max_len)
    text = "".join(rng.choice(_TEXT_POOL) for _ in range(n))
    if rng.random() < 0.1:
        text = text.replace("\n", "\r\n")
    return text


def random_instant(rng: random.Random) -> datetime:
    base = datetime(2000, 1, 1, tzinfo=timezone.utc)
    t = base + timedelta(seconds=rng.randrange(900_000_000))
    if rng.random() < 0.3:
        t = t.replace(microsecond=rng.randrange(1, 1_000_000))
    return t


def random_manifest(rng: random.Random) -> Manifest:
    slug = "-".join("".join(rng.choice("abcdefghij0123") for _ in range(rng.randint(1, 6))) for _ in range(rng.randint(1, 3)))
    contacts = tuple(
        Contact(f"Person {i} " + random_text(rng, 20).replace("\n", " ").strip(), f"user{i}@example.org") for i in range(rng.randint(0, 3))
    )
    return Manifest(
        package_id=slug,
        experiment_name="Experiment " + random_text(rng, 40),
        family=random_text(rng, 20),
        language_tag=rng.choice(["en", "es", "en-GB", "pt-BR"]),
        contacts=contacts,
        created=random_instant(rng),
    )


def _random_attachments(rng: random.Random, prefix: str = "") -> tuple[Attachment, ...]:
    paths = {f"{prefix}{rng.choice(['', 'data/', 'forms/a/'])}f{i}.{rng.choice(['bin', 'txt', 'csv'])}" for i in range(rng.randint(0, 3))}
    return tuple(Attachment(p, rng.randbytes(rng.randrange(64))) for p in sorted(paths))


def random_assessment(rng: random.Random, rid: str) -> Assessment:
    incidents = tuple(
        IncidentRecord(rid, rng.choice(list(IncidentCategory)), f"code-{rng.randrange(50)}", random_text(rng, 30))
        for _ in range(rng.randint(0, 4))
    )
    usability = None
    if rng.random() < 0.7:
        usability = UsabilityScore(rid, {c: Decimal(rng.randint(2, 10)) / 2 for c in UsabilityComponent})
    completeness = None
    if rng.random() < 0.5:
        completeness = CompletenessRating(
            rid,
            frozenset(rng.choice([["Complete"], ["Training", "Design"], ["Operational"]])),
            rng.choice(["MaterialsOnly", "Basic", "Detailed", "DetailedGrounded"]),
            rng.choice(["Unchangeable", "PartiallyAdaptable", "Adaptable"]),
            rng.choice(["No", "Late", "Yes"]),
            rng.choice(["No", "Partial", "Yes"]),
            rng.choice(["No", "CurrentVersionOnly", "Log", "RetrievableVersions"]),
        )
    efficacy = None
    if rng.random() < 0.5:
        efficacy = EfficacyRating(
            rid,
            rng.choice(["Low", "Medium", "High", "Complete"]),
            rng.choice(["NA", "Low", "Medium", "Complete"]),
            rng.choice(["Slight", "Medium", "Serious"]),
        )
    effort = tuple(
        EffortRecord(rng.choice(["Instantiation", "Replication"]), Decimal(rng.randrange(2000)) / 4)
        for _ in range(rng.randint(0, 2))
    )
    return Assessment(rid, incidents, usability, completeness, efficacy, effort)


def random_package(rng: random.Random) -> Package:
    package = scaffold_init(random_manifest(rng))
    for module in package.core_modules:
        for section in list(module.walk_sections()):
            if rng.random() < 0.6:
                module = module.replace_section(section.number, body=random_text(rng))
        if module.kind is not ModuleKind.EVOLUTION and rng.random() < 0.3:
            extra = Section(f"{module.number}.{len(module.sections) + 1}", "Extra " + random_text(rng, 10).strip().replace("\n", " ") or "Extra", random_text(rng))
            module = replace(module, sections=module.sections + (replace(extra, title=extra.title or "Extra"),))
        module = replace(
            module,
            attachments=_random_attachments(rng),
            evidence=tuple(
                Evidence(rng.choice(["RP", "ST", "NS", "XX"]), rng.randint(1, 4), rng.choice(["4.1.1", "1.2", "2", "1:x.txt"]))
                for _ in range(rng.randint(0, 3))
            ),
        )
        package = package.replace_module(module)
    snapshots: list[CoreSnapshot] = []
    for _ in range(rng.randint(0, 6)):
        op = rng.random()
        if op < 0.4:
            package = add_replication(
                package,
                ReplicationReport(random_text(rng), random_text(rng), random_text(rng), random_text(rng),
                                  random_text(rng, 30), _random_attachments(rng)),
                now=random_instant(rng),
            )
        elif op < 0.6:
            package = add_aggregation(
                package, AggregationReport(random_text(rng), random_text(rng), random_text(rng, 30)), now=random_instant(rng)
            )
        else:
            modules = tuple(replace(m, recorded_digest=m.content_digest) for m in package.core_modules)
            snapshots.append(
                CoreSnapshot(
                    len(snapshots) + 1, random_instant(rng), random_text(rng, 40), modules,
                    tuple(sorted((m.number, m.content_digest) for m in modules)),
                )
            )
            package = replace(package, version_history=tuple(snapshots))
    ids = sorted({f"R{rng.randrange(100)}-{rng.choice(['a', 'b'])}" for _ in range(rng.randint(0, 3))})
    package = replace(package, assessments=tuple(random_assessment(rng, rid) for rid in ids))
    return package
