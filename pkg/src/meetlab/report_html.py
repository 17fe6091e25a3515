"""Static, self-contained HTML summaries of analyzed sessions.

The output is deterministic: no timestamps, no environment details, no
external assets. Rendering the same inputs twice gives identical bytes.
"""

from __future__ import annotations

import html
from typing import Sequence

from meetlab.coincidence import BUCKETS, VARIANTS, CrReport
from meetlab.simulate import Hypotheses, MeetingTruth, ledger_leak_rate

_STYLE = """
body { font-family: sans-serif; margin: 2em; color: #222; }
h1 { font-size: 1.4em; } h2 { font-size: 1.1em; margin-top: 1.5em; }
table { border-collapse: collapse; margin: 0.5em 0; }
td, th { border: 1px solid #999; padding: 0.25em 0.6em; text-align: right; }
th { background: #eee; }
td.label, th.label { text-align: left; }
"""


def _esc(value: object) -> str:
    return html.escape(str(value))


def _fmt_rate(value: float | None) -> str:
    return "n/a" if value is None else f"{value:.4f}"


def _overview_rows(truth: MeetingTruth) -> list[tuple[str, object]]:
    spec = truth.spec
    events = truth.ledger.events
    rows: list[tuple[str, object]] = [
        ("Session", spec.session_id),
        ("Speakers", spec.num_speakers),
        ("Utterances", len(truth.utterances)),
        ("Duration (s)", f"{truth.num_frames / 100:.2f}"),
        ("Target overlap ratio", f"{spec.overlap_ratio:.2f}"),
        ("Leak events (copy)", sum(1 for e in events if e.mode == "copy")),
        ("Leak events (move)", sum(1 for e in events if e.mode == "move")),
        ("Leaked frames", truth.ledger.num_frames),
    ]
    rate = ledger_leak_rate(truth)
    rows.append(("Ledger leak rate", _fmt_rate(rate)))
    return rows


def _report_table(report: CrReport) -> list[str]:
    title = f"{report.direction} / {report.hyp_kind}"
    out = [f"<h2>Coincidence: {_esc(title)}</h2>"]
    out.append("<table><tr><th class='label'>variant</th>")
    out.extend(f"<th>{_esc(b)}</th>" for b in BUCKETS)
    out.append("</tr>")
    for variant in VARIANTS:
        out.append(f"<tr><td class='label'>{_esc(variant)}</td>")
        for bucket in BUCKETS:
            cell = report.cells[(variant, bucket)]
            shown = _fmt_rate(cell.rate)
            out.append(f"<td title='{cell.num}/{cell.den}'>{_esc(shown)}</td>")
        out.append("</tr>")
    out.append("</table>")
    if report.skipped_segments:
        out.append(
            f"<p>Skipped segments (missing hypotheses): "
            f"{report.skipped_segments}</p>"
        )
    return out


def build_report(
    truth: MeetingTruth,
    hyps: Hypotheses | None = None,
    cr_reports: Sequence[CrReport] = (),
) -> str:
    """Render one session to a standalone HTML page."""
    parts = [
        "<!DOCTYPE html>",
        "<html><head><meta charset='utf-8'>",
        f"<title>{_esc(truth.spec.session_id)}</title>",
        f"<style>{_STYLE}</style></head><body>",
        f"<h1>Session {_esc(truth.spec.session_id)}</h1>",
        "<h2>Overview</h2><table>",
    ]
    for label, value in _overview_rows(truth):
        parts.append(
            f"<tr><td class='label'>{_esc(label)}</td><td>{_esc(value)}</td></tr>"
        )
    parts.append("</table>")
    if hyps is not None:
        parts.append("<h2>Recognition</h2><table>")
        for label, value in (
            ("Model", hyps.model),
            ("Substitution rate", hyps.sub_rate),
            ("Lattice density", hyps.lattice_density),
            ("Hypothesis sets", len(hyps.one_best)),
            ("Lattices", len(hyps.lattices)),
        ):
            parts.append(
                f"<tr><td class='label'>{_esc(label)}</td>"
                f"<td>{_esc(value)}</td></tr>"
            )
        parts.append("</table>")
    for report in cr_reports:
        parts.extend(_report_table(report))
    parts.append("<h2>Segments</h2><table>")
    parts.append(
        "<tr><th>#</th><th>channel</th><th>start</th><th>end</th>"
        "<th class='label'>speaker</th></tr>"
    )
    for k, seg in enumerate(truth.segments):
        parts.append(
            f"<tr><td>{k}</td><td>{seg.channel}</td>"
            f"<td>{seg.start:.2f}</td><td>{seg.end:.2f}</td>"
            f"<td class='label'>{_esc(seg.speaker or '')}</td></tr>"
        )
    parts.append("</table></body></html>")
    return "\n".join(parts) + "\n"
