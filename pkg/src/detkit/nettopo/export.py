"""Text layer table and DOT export."""
from __future__ import annotations

from typing import Optional

from .graph import NetGraph, ShapeReport, count_parameters, propagate_shapes

COLUMNS = ("Layer", "Activation", "Filters", "Size", "Repeat", "Output Size", "Table Size", "Params")


def _size(row) -> str:
    if row.kind != "conv":
        return "-"
    if row.stride == 1:
        return f"{row.kernel} × {row.kernel}"
    return f"{row.kernel} × {row.kernel} / {row.stride}"


def layer_rows(g: NetGraph, report: Optional[ShapeReport] = None) -> list[tuple[str, ...]]:
    report = report or propagate_shapes(g)
    params = count_parameters(g).per_row
    rows = [("Image", "-", "-", "-", "-", _hw(g.input_shape.height, g.input_shape.width), "-", "0")]
    for r in g.rows:
        outs = [report.shapes[o] for o in g.row_outputs[r.name]]
        computed = ", ".join(_hw(*s.spatial) for s in outs)
        filters = ", ".join(sorted({str(s.channels) for s in outs})) if r.kind == "head" else (
            str(r.filters) if r.filters else "-")
        rows.append((
            r.name,
            "SiLU" if r.activation == "silu" else "-",
            filters,
            _size(r),
            "-" if r.kind == "head" else str(r.repeat),
            computed,
            _hw(*r.table_size) if r.table_size else "-",
            str(params[r.name]),
        ))
    return rows


def _hw(h: int, w: int) -> str:
    return f"{h} × {w}"


def layer_table(g: NetGraph, report: Optional[ShapeReport] = None) -> str:
    """Fixed-width table in the column layout of the architecture table."""
    report = report or propagate_shapes(g)
    rows = [COLUMNS, *layer_rows(g, report)]
    widths = [max(len(r[i]) for r in rows) for i in range(len(COLUMNS))]
    lines = ["  ".join(c.ljust(wd) for c, wd in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * wd for wd in widths))
    return "\n".join(lines) + "\n"


def discrepancy_text(report: ShapeReport) -> str:
    if not report.discrepancies:
        return "shape discrepancies: none\n"
    lines = [f"shape discrepancies: {len(report.discrepancies)}"]
    lines += [f"  {d}" for d in report.discrepancies]
    return "\n".join(lines) + "\n"


def to_dot(g: NetGraph, report: Optional[ShapeReport] = None) -> str:
    report = report or propagate_shapes(g)
    lines = ["digraph net {", "  rankdir=TB;", '  node [shape=box, fontname="monospace"];']
    for n in g.nodes:
        s = report.shapes[n.name]
        detail = n.op if n.op != "conv" else f"conv {n.kernel}x{n.kernel}/{n.stride}"
        lines.append(f'  "{n.name}" [label="{n.name}\\n{detail}\\n{s}"];')
    for src, dst in g.edges:
        lines.append(f'  "{src}" -> "{dst}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
