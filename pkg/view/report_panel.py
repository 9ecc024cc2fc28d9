"""
Plain-text reports: benchmark tables and one-line run summaries.
"""

import math

_COLUMNS = (
    ("scenario", "Scenario", "{}"),
    ("mode", "Mode", "{}"),
    ("runs", "Runs", "{}"),
    ("success_rate", "Success (%)", "{:.0f}"),
    ("completion_rate", "Compl. (%)", "{:.0f}"),
    ("collision_free_rate", "Coll.-free (%)", "{:.0f}"),
    ("mean_path_length", "Path (m)", "{:.2f}"),
    ("mean_path_ratio", "Path ratio", "{:.2f}"),
    ("mean_total_time", "Time (s)", "{:.2f}"),
)


def _cell(fmt, value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "N/A"
    return fmt.format(value)


def format_table(rows):
    """Fixed-width text table of BenchRows."""
    header = [title for _, title, _ in _COLUMNS]
    body = [[_cell(fmt, getattr(r, key)) for key, _, fmt in _COLUMNS] for r in rows]
    widths = [max(len(h), *(len(line[i]) for line in body)) if body else len(h)
              for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    for line in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(line, widths)))
    return "\n".join(lines)


def format_run(metrics):
    status = "success" if metrics.success else (
        "completed with collision" if metrics.completion else f"failed ({metrics.end_reason})")
    return (f"[Run] {metrics.scenario} seed={metrics.seed} mode={metrics.mode}: {status}, "
            f"path {metrics.path_length:.2f} m (ratio {metrics.path_ratio:.2f}), "
            f"time {metrics.total_time:.1f} s, min clearance {metrics.min_clearance:.3f} m")


def format_certificate(cert):
    coef = ", ".join(f"{c:.6g}" for c in cert.poly.coef)
    return (f"[Separate] degree {cert.degree} certificate: coef = [{coef}], "
            f"margin A {cert.margin_a:.6g}, margin B {cert.margin_b:.6g}")
