"""``lp``: command-line front end.

Exit codes: 0 success, 1 lint Errors (or checklist failures under
``--strict``), 2 usage errors and unreadable or invalid packages.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import click

from labpack import _json
from labpack.assessment import (
    AssessmentStore,
    CompletenessRating,
    EfficacyRating,
    EffortRecord,
    IncidentCategory,
    IncidentRecord,
    UsabilityComponent,
    UsabilityScore,
    assessment_report,
    pre_post_table,
    summarize_pre_post,
)
from labpack.errors import ExportRefused, LabpackError, LintErrorsPresent
from labpack.export import export_html
from labpack.findings import Severity
from labpack.lifecycle import (
    AggregationReport,
    Confidence,
    ReplicationReport,
    add_aggregation,
    add_replication,
    apply_gathered,
    gather_documents,
    missing_components,
    publish_core_version,
    scaffold_init,
)
from labpack.linter import LintReport, evaluate_checklist, lint
from labpack.model import Attachment, Contact, Manifest
from labpack.store import MANIFEST_FILE, parse_package, serialize_package, update_package
from labpack.templates import TemplateCatalog, builtin_catalog, load_catalog

# failures that mean "the package has problems", as opposed to bad input
_LINT_FAILURES = (LintErrorsPresent, ExportRefused)

_SEVERITY_COLOR = {Severity.ERROR: "red", Severity.WARNING: "yellow", Severity.INFO: "cyan"}


class CliFailure(click.ClickException):
    def __init__(self, message: str, exit_code: int = 2):
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class CliConfig:
    root: Path | None
    catalog_path: Path | None
    output_format: str
    color: str

    def require_root(self) -> Path:
        if self.root is None:
            raise click.UsageError("no package root: pass --root or set LABPACK_ROOT")
        return self.root

    def catalog(self) -> TemplateCatalog:
        if self.catalog_path is None:
            return builtin_catalog()
        return load_catalog(self.catalog_path)

    @property
    def json(self) -> bool:
        return self.output_format == "json"

    def echo(self, text: str = "", err: bool = False) -> None:
        color = {"on": True, "off": False}.get(self.color)
        click.echo(text, nl=False, err=err, color=color)


class LpGroup(click.Group):
    """Turns library errors into exit codes and one-line diagnostics."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except _LINT_FAILURES as exc:
            raise CliFailure(str(exc), exit_code=1) from exc
        except LabpackError as exc:
            raise CliFailure(str(exc)) from exc


pass_config = click.make_pass_decorator(CliConfig)


@click.group(cls=LpGroup)
@click.option("--root", type=click.Path(path_type=Path), envvar="LABPACK_ROOT", help="Package root directory.")
@click.option("--catalog", "catalog_path", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Template catalog extension file.")
@click.option("--format", "output_format", type=click.Choice(["text", "json"]), default="text", show_default=True)
@click.option("--color", type=click.Choice(["auto", "on", "off"]), default="auto", show_default=True)
@click.version_option(package_name="artifact", prog_name="lp")
@click.pass_context
def cli(ctx, root, catalog_path, output_format, color):
    """Build, check and evolve laboratory packages."""
    ctx.obj = CliConfig(root, catalog_path, output_format, color)


def _render_report(cfg: CliConfig, report: LintReport) -> None:
    if cfg.json:
        cfg.echo(report.dumps())
        return
    text = report.render_text()
    if cfg.color != "off":
        for f in report.findings:
            line = f.format()
            text = text.replace(line, click.style(line, fg=_SEVERITY_COLOR[f.severity]), 1)
    cfg.echo(text)


def _load(cfg: CliConfig):
    return parse_package(cfg.require_root())


# -- init / gather / missing -------------------------------------------------


def _contact(text: str) -> Contact:
    name, sep, rest = text.partition("<")
    if not sep or not rest.endswith(">"):
        raise click.BadParameter(f"{text!r} is not of the form 'Name <email>'")
    return Contact(name.strip(), rest[:-1].strip())


@cli.command()
@click.option("--id", "package_id", required=True, help="Package id (lowercase slug).")
@click.option("--name", "experiment_name", required=True, help="Experiment name.")
@click.option("--family", default="", help="Experiment family.")
@click.option("--language", "language_tag", default="en", show_default=True)
@click.option("--contact", "contacts", multiple=True, help="'Name <email>', repeatable.")
@pass_config
def init(cfg: CliConfig, package_id, experiment_name, family, language_tag, contacts):
    """Scaffold a new package with every template section."""
    root = cfg.require_root()
    if (root / MANIFEST_FILE).exists():
        raise CliFailure(f"{root} already holds a package")
    manifest = Manifest(
        package_id=package_id,
        experiment_name=experiment_name,
        family=family,
        language_tag=language_tag,
        contacts=tuple(_contact(c) for c in contacts),
        created=_json.utcnow().replace(microsecond=0),
    )
    package = scaffold_init(manifest, cfg.catalog())
    root.mkdir(parents=True, exist_ok=True)
    serialize_package(package, root)
    if cfg.json:
        cfg.echo(_json.dumps({"root": str(root), "modules": [m.number for m in package.modules]}))
    else:
        cfg.echo(f"initialized {package_id} in {root}\n")


@cli.command()
@click.argument("sources", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--apply", is_flag=True, help="Copy mapped sources into the package.")
@click.option("--accept-heuristics", is_flag=True, help="Apply heuristic matches without asking.")
@pass_config
def gather(cfg: CliConfig, sources, apply, accept_heuristics):
    """Map existing documents onto template sections."""
    catalog = cfg.catalog()
    mapping = gather_documents(sources, catalog)
    if not apply:
        cfg.echo(mapping.dumps() if cfg.json else mapping.render_text())
        return
    accepted: bool | set[str] = True
    if not accept_heuristics:
        accepted = {
            a.source
            for a in mapping.assignments
            if a.confidence is Confidence.HEURISTIC
            and click.confirm(f"map {a.source} to section {a.section}?", default=False, err=True)
        }
    applied = []

    def change(package):
        updated, done = apply_gathered(package, mapping, catalog, accepted)
        applied.extend(done)
        return updated

    update_package(cfg.require_root(), change)
    if cfg.json:
        cfg.echo(_json.dumps({"applied": [a.to_dict() for a in applied], **mapping.to_dict()}))
    else:
        cfg.echo(mapping.render_text())
        cfg.echo(f"applied {len(applied)} of {len(mapping.assignments)} source(s)\n")


@cli.command()
@pass_config
def missing(cfg: CliConfig):
    """List template sections that are absent or empty."""
    result = missing_components(_load(cfg), cfg.catalog())
    cfg.echo(result.dumps() if cfg.json else result.render_text())


# -- lint / checklist --------------------------------------------------------


def _checklist_failed(report: LintReport) -> bool:
    return any(f.rule_source.kind.value == "checklist" for f in report.findings)


@cli.command("lint")
@click.option("--strict", is_flag=True, help="Treat checklist warnings as failures.")
@pass_config
@click.pass_context
def lint_cmd(ctx, cfg: CliConfig, strict):
    """Run every rule and report findings."""
    catalog = cfg.catalog()
    report = lint(_load(cfg), catalog, catalog.checklist)
    _render_report(cfg, report)
    if report.errors or (strict and _checklist_failed(report)):
        ctx.exit(1)


@cli.command()
@click.option("--strict", is_flag=True, help="Fail unless every item is Satisfied.")
@pass_config
@click.pass_context
def checklist(ctx, cfg: CliConfig, strict):
    """Evaluate the packaging checklist."""
    report = evaluate_checklist(_load(cfg), cfg.catalog().checklist)
    _render_report(cfg, report)
    if strict and _checklist_failed(report):
        ctx.exit(1)


# -- studies -----------------------------------------------------------------


def _text(value: str | None, path: Path | None) -> str:
    if path is not None:
        try:
            return path.read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError) as exc:
            raise CliFailure(f"cannot read {path}: {exc}") from exc
    return value or ""


def _attachments(paths) -> tuple[Attachment, ...]:
    out = []
    for p in paths:
        try:
            out.append(Attachment(f"data/{p.name}", p.read_bytes()))
        except OSError as exc:
            raise CliFailure(f"cannot read {p}: {exc.strerror}") from exc
    return tuple(out)


_file = click.Path(exists=True, dir_okay=False, path_type=Path)


@cli.group()
def add():
    """Append a study module."""


@add.command("replication")
@click.option("--description", help="Description of the replication (Markdown).")
@click.option("--description-file", type=_file)
@click.option("--adapted-design-file", type=_file)
@click.option("--data-file", type=_file)
@click.option("--notes-file", type=_file)
@click.option("--summary", default="", help="One-line summary for the Evolution entry.")
@click.option("--attach", "attach", multiple=True, type=_file, help="Attach a file, repeatable.")
@pass_config
def add_replication_cmd(cfg: CliConfig, description, description_file, adapted_design_file, data_file, notes_file, summary, attach):
    """Add replication module 6.n."""
    report = ReplicationReport(
        description=_text(description, description_file),
        adapted_design=_text(None, adapted_design_file),
        data=_text(None, data_file),
        notes=_text(None, notes_file),
        summary=summary,
        attachments=_attachments(attach),
    )
    if not report.description.strip():
        raise click.UsageError("a replication needs --description or --description-file")
    catalog = cfg.catalog()
    package = update_package(cfg.require_root(), lambda p: add_replication(p, report, catalog))
    _added(cfg, package.replications[-1].number)


@add.command("aggregation")
@click.option("--protocol", help="Aggregation protocol (Markdown).")
@click.option("--protocol-file", type=_file)
@click.option("--results-file", type=_file)
@click.option("--summary", default="")
@click.option("--attach", "attach", multiple=True, type=_file)
@pass_config
def add_aggregation_cmd(cfg: CliConfig, protocol, protocol_file, results_file, summary, attach):
    """Add aggregation module 7.n."""
    report = AggregationReport(
        protocol=_text(protocol, protocol_file),
        results=_text(None, results_file),
        summary=summary,
        attachments=_attachments(attach),
    )
    if not report.protocol.strip():
        raise click.UsageError("an aggregation needs --protocol or --protocol-file")
    catalog = cfg.catalog()
    package = update_package(cfg.require_root(), lambda p: add_aggregation(p, report, catalog))
    _added(cfg, package.aggregations[-1].number)


def _added(cfg: CliConfig, module_id: str) -> None:
    cfg.echo(_json.dumps({"added": module_id}) if cfg.json else f"added module {module_id}\n")


# -- versions ----------------------------------------------------------------


@cli.group()
def version():
    """Publish and list core versions."""


@version.command("publish")
@click.option("--note", required=True, help="Change note for this version.")
@pass_config
def version_publish(cfg: CliConfig, note):
    """Freeze the core modules as the next version."""
    catalog = cfg.catalog()
    package = update_package(cfg.require_root(), lambda p: publish_core_version(p, note, catalog))
    vid = package.latest_version_id
    cfg.echo(_json.dumps({"version_id": vid}) if cfg.json else f"published core version {vid}\n")


@version.command("list")
@pass_config
def version_list(cfg: CliConfig):
    """Show the core version history."""
    package = _load(cfg)
    rows = [
        {
            "version_id": s.version_id,
            "timestamp": _json.format_instant(s.timestamp),
            "change_note": s.change_note,
            "digests": s.digests,
        }
        for s in sorted(package.version_history, key=lambda s: s.version_id)
    ]
    if cfg.json:
        cfg.echo(_json.dumps({"versions": rows}))
    elif not rows:
        cfg.echo("no published versions\n")
    else:
        cfg.echo("".join(f"v{r['version_id']}  {r['timestamp']}  {r['change_note']}\n" for r in rows))


# -- assessment --------------------------------------------------------------


@cli.group()
def assess():
    """Record and report replication assessments."""


def _store(cfg: CliConfig) -> AssessmentStore:
    root = cfg.require_root()
    if not (root / MANIFEST_FILE).is_file():
        raise CliFailure(f"{root} does not hold a package")
    return AssessmentStore(root)


def _recorded(cfg: CliConfig, assessment) -> None:
    cfg.echo(assessment.dumps() if cfg.json else f"recorded for {assessment.replication_id}\n")


@assess.group("record")
def assess_record():
    """Append assessment data for one replication."""


@assess_record.command("incident")
@click.argument("replication_id")
@click.argument("category")
@click.argument("code")
@click.option("--description", default="")
@pass_config
def record_incident_cmd(cfg: CliConfig, replication_id, category, code, description):
    """Log an incident (category: one of the seven process activities)."""
    record = IncidentRecord(replication_id, IncidentCategory.parse(category), code, description)
    _recorded(cfg, _store(cfg).record_incident(record))


@assess_record.command("usability")
@click.argument("replication_id")
@click.option("--score", "scores", multiple=True, required=True, help="Component=value, e.g. Clarity=4.5.")
@pass_config
def record_usability_cmd(cfg: CliConfig, replication_id, scores):
    """Record the nine usability component scores."""
    values = {}
    for item in scores:
        name, sep, value = item.partition("=")
        if not sep:
            raise click.BadParameter(f"{item!r} is not Component=value", param_hint="--score")
        values[UsabilityComponent.parse(name.strip())] = value.strip()
    _recorded(cfg, _store(cfg).record_usability(UsabilityScore(replication_id, values)))


@assess_record.command("completeness")
@click.argument("replication_id")
@click.option("--scope", "scope", multiple=True, required=True)
@click.option("--instruction-level", required=True)
@click.option("--adaptability", required=True)
@click.option("--replication-reported", required=True)
@click.option("--aggregated-results", required=True)
@click.option("--version-control", required=True)
@pass_config
def record_completeness_cmd(cfg: CliConfig, replication_id, scope, instruction_level, adaptability, replication_reported, aggregated_results, version_control):
    """Record a completeness rating."""
    rating = CompletenessRating(
        replication_id, frozenset(scope), instruction_level, adaptability,
        replication_reported, aggregated_results, version_control,
    )
    _recorded(cfg, _store(cfg).record_completeness(rating))


@assess_record.command("efficacy")
@click.argument("replication_id")
@click.option("--question-answering", required=True)
@click.option("--environment-reproduction", required=True)
@click.option("--mean-error-severity", required=True)
@pass_config
def record_efficacy_cmd(cfg: CliConfig, replication_id, question_answering, environment_reproduction, mean_error_severity):
    """Record an efficacy rating."""
    rating = EfficacyRating(replication_id, question_answering, environment_reproduction, mean_error_severity)
    _recorded(cfg, _store(cfg).record_efficacy(rating))


@assess_record.command("effort")
@click.argument("replication_id")
@click.argument("activity", type=click.Choice(["Instantiation", "Replication"]))
@click.argument("hours")
@pass_config
def record_effort_cmd(cfg: CliConfig, replication_id, activity, hours):
    """Log person-hours spent on an activity."""
    _recorded(cfg, _store(cfg).record_effort(replication_id, EffortRecord(activity, hours)))


@assess.command("report")
@click.argument("replication_id")
@pass_config
def assess_report(cfg: CliConfig, replication_id):
    """Show everything recorded for one replication."""
    report = assessment_report(_store(cfg), replication_id)
    cfg.echo(report.dumps() if cfg.json else report.render_text())


@assess.command("incidents")
@click.option("--category")
@click.option("--replication", "replication_id")
@pass_config
def assess_incidents(cfg: CliConfig, category, replication_id):
    """Query logged incidents."""
    rows = _store(cfg).query(category, replication_id)
    if cfg.json:
        cfg.echo(_json.dumps({"incidents": [{"replication_id": r.replication_id, **r.to_dict()} for r in rows]}))
    else:
        cfg.echo("".join(f"{r.replication_id:12} {r.category.value:20} {r.code}\n" for r in rows) or "no incidents\n")


# -- summary / export --------------------------------------------------------


@cli.group()
def summary():
    """Aggregate assessments across replications."""


@summary.command("pre-post")
@click.option("--post-ids", required=True, help="Comma-separated replication ids in the POST group.")
@pass_config
def summary_pre_post(cfg: CliConfig, post_ids):
    """Mean usability per component, before and after the structured package."""
    ids = [p.strip() for p in post_ids.split(",") if p.strip()]
    table = pre_post_table(summarize_pre_post(_store(cfg).usability_scores(), ids))
    if cfg.json:
        cfg.echo(_json.dumps(table))
        return
    lines = [f"{'Attribute':<22}{'Component':<22}{'PRE':>5}{'POST':>6}"]
    for row in table["components"]:
        lines.append(f"{row['attribute']:<22}{row['component']:<22}{row['mean_pre']:>5}{row['mean_post']:>6}")
    cfg.echo("\n".join(lines) + "\n")


@cli.command("export")
@click.argument("out_dir", type=click.Path(file_okay=False, path_type=Path))
@pass_config
def export_cmd(cfg: CliConfig, out_dir):
    """Write a static HTML site."""
    written = export_html(_load(cfg), out_dir, cfg.catalog())
    cfg.echo(_json.dumps({"files": written}) if cfg.json else f"wrote {len(written)} file(s) to {out_dir}\n")


def run(argv: list[str] | None = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        result = cli.main(args=argv, prog_name="lp", standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.Abort:
        click.echo("aborted", err=True)
        return 1
    return result if isinstance(result, int) else 0


def main() -> None:
    cli(prog_name="lp")


if __name__ == "__main__":
    main()
