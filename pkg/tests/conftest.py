from __future__ import annotations

from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import pytest

from labpack.lifecycle import ReplicationReport, add_replication, publish_core_version, scaffold_init
from labpack.model import Attachment, Contact, Evidence, Manifest, ModuleKind, Package

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN_DIR = FIXTURES / "golden"

T0 = datetime(2024, 3, 1, 9, 0, 0, tzinfo=timezone.utc)
T1 = datetime(2024, 4, 15, 14, 30, 0, tzinfo=timezone.utc)


def make_manifest(created: datetime = T0) -> Manifest:
    return Manifest(
        package_id="inspection-baseline",
        experiment_name="Code inspection versus testing",
        family="defect detection",
        language_tag="en",
        contacts=(Contact("Lena Ortiz", "lena.ortiz@example.org"),),
        created=created,
    )


# Bodies for every catalog section. Links avoid 4.1.x, 4.4.3 and 6.n.1 so that
# removing a checklist anchor never breaks an unrelated cross-reference.
CORE_BODIES = {
    "1.1": "This package lets an independent team repeat the baseline experiment.\n"
    "Start with the [theory](lp:2) and then read the [experiment](lp:4).\n",
    "1.2": "# Contents\n\n"
    "- [Theory](lp:2.1)\n- [Training](lp:3)\n- [Experiment](lp:4)\n- [Evolution](lp:5)\n\n"
    "Every page has a table of contents; use the browser search to find terms.\n",
    "1.3": "Write to the package owner listed in the manifest. Replies within a week.\n",
    "2.1": "Defect detection effectiveness is the share of seeded faults found. "
    "See [objectives](lp:4.2.1). References are listed in `references.md`.\n",
    "3.1": "Slides and exercises for a two-hour session, matching the "
    "[operating material](lp:4.4.2).\n",
    "4.1": "Plan the replication before recruiting subjects.\n",
    "4.1.1": "1. Adapt material\n2. Train subjects\n3. Run sessions\n4. Analyse data\n",
    "4.1.2": "| Activity | Hours |\n|---|---|\n| Adapt material | 20 |\n| Sessions | 12 |\n",
    "4.1.3": "Weeks 1 and 2 for adaptation, week 3 for training, week 4 for sessions.\n",
    "4.2": "What the study wants to learn.\n",
    "4.2.1": "Compare the effectiveness of inspection and functional testing.\n",
    "4.2.2": "H0: both techniques find the same share of faults.\n",
    "4.2.3": "Factor: technique. Response: effectiveness.\n",
    "4.2.4": "Subject experience and program size.\n",
    "4.3": "How subjects, programs and techniques are combined.\n",
    "4.3.1": "Factorial design with blocking by program; see [validation](lp:4.3.3).\n",
    "4.3.2": "Prefer the crossover design when fewer than twenty subjects take part.\n",
    "4.3.3": "Check that each subject applies each technique exactly once.\n",
    "4.4": "Running the experiment.\n",
    "4.4.1": "Print one form per subject and session.\n",
    "4.4.2": "Programs, fault lists and forms are attached to this module.\n",
    "4.4.3": "Each session lasts at most two and a half hours. Collect forms at the end.\n",
    "4.5": "From raw forms to conclusions.\n",
    "4.5.1": "Transcribe the forms into the attached spreadsheet template.\n",
    "4.5.2": "Two-way ANOVA; check normality first.\n",
    "4.5.3": "Read effect sizes next to [the hypotheses](lp:4.2.2).\n",
}

REPLICATION = ReplicationReport(
    description="Run at a second university with 24 students. Identification, "
    "characterization, results and lessons learned follow.\n",
    adapted_design="Same design, one program swapped.\n",
    data="Raw effectiveness values are in the attachment.\n",
    notes="Sessions ran over time once.\n",
    summary="First external replication",
    attachments=(Attachment("data/effectiveness.csv", b"subject,technique,score\n1,inspection,0.5\n"),),
)


def fill(package: Package, bodies: dict[str, str]) -> Package:
    for number, body in bodies.items():
        found = package.find_section(number)
        assert found is not None, number
        module, _ = found
        package = package.replace_module(module.replace_section(number, body=body))
    return package


def build_golden() -> Package:
    package = scaffold_init(make_manifest())
    package = fill(package, CORE_BODIES)
    intro = package.core(ModuleKind.INTRODUCTION)
    intro = replace(
        intro,
        attachments=(Attachment("references.md", b"- Inspection handbook, internal report 12\n"),),
        evidence=(
            Evidence("NS", 1, "1.2"),
            Evidence("NS", 3, "1:references.md"),
            Evidence("NS", 4, "1.2"),
        ),
    )
    experiment = package.core(ModuleKind.EXPERIMENT)
    experiment = replace(
        experiment,
        attachments=(Attachment("materials/form.txt", b"Subject id:\nFaults found:\n"),),
        evidence=(
            Evidence("RP", 1, "4.1.1"),
            Evidence("RP", 2, "4.1.2"),
            Evidence("RP", 3, "4.1.3"),
            Evidence("ST", 1, "4.4.3"),
            Evidence("ST", 2, "4.4.3"),
        ),
    )
    package = package.replace_module(intro).replace_module(experiment)
    package = publish_core_version(package, "Baseline experiment", now=T0)
    package = add_replication(package, REPLICATION, now=T1)
    return package


@pytest.fixture
def golden() -> Package:
    return build_golden()


@pytest.fixture
def golden_dir() -> Path:
    return GOLDEN_DIR


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import summary_lines

    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
