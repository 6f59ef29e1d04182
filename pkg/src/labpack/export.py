"""Static HTML export: one page per module plus an index."""

from __future__ import annotations

import html
import shutil
from pathlib import Path

from markdown_it import MarkdownIt

from labpack._json import format_instant
from labpack.errors import ExportRefused, IoFailure, LintErrorsPresent
from labpack.findings import FindingCode
from labpack.linter import _LP_LINK, lint, strip_comments
from labpack.model import LPModule, ModuleKind, Package, Section
from labpack.templates import TemplateCatalog

SITE_MARKER = ".labpack-site"

_CSS = """body{font-family:sans-serif;max-width:52em;margin:2em auto;line-height:1.5}
nav ul{list-style:none;padding-left:1em}table{border-collapse:collapse}
td,th{border:1px solid #bbb;padding:.2em .5em}
"""


def page_name(module: LPModule) -> str:
    return f"module-{module.number}.html"


def _anchor(number: str) -> str:
    return f"s-{number}"


def _link_target(package: Package, target: str) -> str | None:
    found = package.find_section(target)
    if found is not None:
        return f"{page_name(found[0])}#{_anchor(target)}"
    module = package.module(target)
    if module is not None:
        return page_name(module)
    return None


def _markdown() -> MarkdownIt:
    return MarkdownIt("commonmark", {"html": False}).enable("table")


def _render_body(md: MarkdownIt, package: Package, module: LPModule, body: str) -> str:
    def rewrite(m):
        return f"]({_link_target(package, m.group(1))})"

    text = _LP_LINK.sub(rewrite, strip_comments(body))
    # attachment links are relative to the module directory
    for att in module.attachments:
        text = text.replace(f"]({att.path})", f"](attachments/{module.number}/{att.path})")
    return md.render(text)


def _page(title: str, package: Package, content: str) -> bytes:
    nav = "".join(
        f'<li><a href="{page_name(m)}">{m.number} {html.escape(m.kind.label)}</a></li>'
        for m in package.modules
    )
    doc = (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        f"<title>{html.escape(title)}</title>\n<style>{_CSS}</style>\n</head>\n<body>\n"
        f'<nav><a href="index.html">Contents</a><ul>{nav}</ul></nav>\n'
        f"<main>\n{content}</main>\n</body>\n</html>\n"
    )
    return doc.encode("utf-8")


def _toc(sections: tuple[Section, ...]) -> str:
    if not sections:
        return ""
    items = "".join(
        f'<li><a href="#{_anchor(s.number)}">{s.number} {html.escape(s.title)}</a>{_toc(s.children)}</li>'
        for s in sections
    )
    return f"<ul>{items}</ul>"


def _timeline(package: Package, module: LPModule) -> str:
    rows = []
    for snap in sorted(package.version_history, key=lambda s: s.version_id):
        rows.append(
            f"<tr><td>v{snap.version_id}</td><td>{format_instant(snap.timestamp)}</td>"
            f"<td>{html.escape(snap.change_note)}</td></tr>"
        )
    versions = (
        "<table><tr><th>Version</th><th>Published</th><th>Change note</th></tr>" + "".join(rows) + "</table>"
        if rows
        else "<p>No core version has been published yet.</p>"
    )
    rows = []
    for entry in module.entries:
        study = package.module(entry.study)
        link = f'<a href="{page_name(study)}">{entry.study}</a>' if study else entry.study
        version = f"v{entry.core_version}" if entry.core_version is not None else "unpublished"
        rows.append(
            f"<tr><td>{entry.date}</td><td>{link}</td><td>{version}</td><td>{html.escape(entry.summary)}</td></tr>"
        )
    studies = (
        "<table><tr><th>Date</th><th>Study</th><th>Core version</th><th>Summary</th></tr>" + "".join(rows) + "</table>"
        if rows
        else "<p>No studies recorded.</p>"
    )
    return f'<section id="timeline"><h2>Timeline</h2><h3>Core versions</h3>{versions}<h3>Studies</h3>{studies}</section>\n'


def render_site(package: Package) -> dict[str, bytes]:
    md = _markdown()
    files: dict[str, bytes] = {}
    for module in package.modules:
        parts = [f"<h1>{module.number} {html.escape(module.kind.label)}</h1>\n", f"<nav>{_toc(module.sections)}</nav>\n"]
        for section in module.walk_sections():
            depth = min(section.number.count(".") + 1, 6)
            depth = max(depth - (1 if module.kind.is_study else 0), 2)
            parts.append(
                f'<section id="{_anchor(section.number)}">'
                f"<h{depth}>{section.number} {html.escape(section.title)}</h{depth}>\n"
                f"{_render_body(md, package, module, section.body)}</section>\n"
            )
        if module.kind is ModuleKind.EVOLUTION:
            parts.append(_timeline(package, module))
        if module.attachments:
            items = "".join(
                f'<li><a href="attachments/{module.number}/{a.path}">{html.escape(a.path)}</a></li>'
                for a in sorted(module.attachments, key=lambda a: a.path)
            )
            parts.append(f"<h2>Attachments</h2><ul>{items}</ul>\n")
        files[page_name(module)] = _page(f"{module.number} {module.kind.label}", package, "".join(parts))
        for att in module.attachments:
            files[f"attachments/{module.number}/{att.path}"] = att.data
    m = package.manifest
    index = (
        f"<h1>{html.escape(m.experiment_name)}</h1>\n"
        f"<p>Family: {html.escape(m.family)}. Package id: {html.escape(m.package_id)}.</p>\n"
        "<h2>Table of contents</h2>\n<ul>"
        + "".join(
            f'<li><a href="{page_name(mod)}">{mod.number} {html.escape(mod.kind.label)}</a>{_toc_links(mod)}</li>'
            for mod in package.modules
        )
        + "</ul>\n"
    )
    files["index.html"] = _page(m.experiment_name, package, index)
    return files


def _toc_links(module: LPModule) -> str:
    toc = _toc(module.sections)
    return toc.replace('href="#', f'href="{page_name(module)}#')


def export_html(package: Package, out_dir: str | Path, catalog: TemplateCatalog | None = None) -> list[str]:
    """Write the static site; returns the written paths, sorted."""
    report = lint(package, catalog)
    broken = [f for f in report.findings if f.code is FindingCode.BROKEN_CROSS_REFERENCE]
    if broken:
        raise ExportRefused(broken)
    if report.errors:
        raise LintErrorsPresent(len(report.errors), report.errors)
    files = render_site(package)
    out = Path(out_dir)
    try:
        if out.exists():
            if (out / SITE_MARKER).exists():
                shutil.rmtree(out)
            elif any(out.iterdir()):
                raise IoFailure(out, "exists, is not empty and is not a previous export")
        out.mkdir(parents=True, exist_ok=True)
        for rel, data in sorted(files.items()):
            target = out / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(data)
        (out / SITE_MARKER).write_bytes(b"")
    except OSError as exc:
        raise IoFailure(out, exc.strerror or str(exc)) from exc
    return sorted(files)
