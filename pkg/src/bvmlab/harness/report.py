"""CSV reports and the derived summary table.

Files written by :func:`write_outputs`:

``report.csv``
    one row per ``(n, replicate)`` with the columns in ``REPORT_COLUMNS``;
    a blank cell means "not applicable to this experiment".
``summary.csv``
    per-``n`` means and standard errors (``row = n``) and, when the schedule
    has at least two sizes, one ``row = trend`` line with the log-log slope
    and the pass/fail flags.  It is a pure function of ``report.csv``.
``metadata.txt``
    config echo, seed, stream rule and library versions.
``timing.txt``
    per-row wall time.  It is the only output that varies between reruns.

Floats are written with 17 significant digits, booleans as ``true/false``.
"""

from __future__ import annotations

import csv
import io
import math
import platform
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from .experiment import REPORT_COLUMNS, ConvergenceReport

SUMMARY_COLUMNS = (
    "row",
    "experiment",
    "n",
    "p",
    "replicates",
    "failed",
    "h2_mean",
    "h2_se",
    "h2_step_ok",
    "tail_mean",
    "tail_se",
    "tail_step_ok",
    "jensen_violations",
    "s_n_rate",
    "q_t_mean",
    "q_t_se",
    "q_t_target",
    "shift_mean",
    "shift_se",
    "h2_slope",
    "shift_slope",
    "h2_monotone",
    "h2_final_ok",
    "tail_monotone",
    "tail_final_ok",
    "jensen_ok",
    "q_t_ok",
    "shift_slope_ok",
)

H2_FINAL = {"gprior_fixed": 0.05, "gprior_unknown": 0.10, "pmom": 0.05}
TAIL_FINAL = 0.05
SHIFT_SLOPE_MAX = -2.0

_INT = {"n", "p", "replicate", "replicates", "failed", "jensen_violations"}
_BOOL = {"tail_degenerate", "s_n_member"}
_STR = {"experiment", "status", "row"}


def format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _parse(key, text):
    if text == "":
        return None
    if key in _STR:
        return text
    if key in _INT:
        return int(text)
    if key in _BOOL or text in ("true", "false"):
        return text == "true"
    return float(text)


def render_csv(rows, columns) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c)) for c in columns])
    return buf.getvalue()


def parse_csv(text: str) -> list[dict]:
    reader = csv.DictReader(io.StringIO(text))
    return [{k: _parse(k, v) for k, v in r.items()} for r in reader]


def read_report(path) -> list[dict]:
    return parse_csv(Path(path).read_text(encoding="utf-8"))


# -- summary ---------------------------------------------------------------


def _mean_se(values):
    vals = np.asarray([v for v in values if v is not None], dtype=float)
    if vals.size == 0:
        return None, None
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    return mean, se


def _step_ok(prev, cur, key_mean, key_se):
    if prev is None or prev[key_mean] is None or cur[key_mean] is None:
        return None
    pooled = math.hypot(prev[key_se], cur[key_se])
    return cur[key_mean] <= prev[key_mean] + 2.0 * pooled


def loglog_slope(ns, means) -> float | None:
    """Least-squares slope of ``log mean`` against ``log n``; ``None`` if undefined."""
    if len(ns) < 2 or any(m is None or not m > 0 for m in means):
        return None
    x = np.log(np.asarray(ns, dtype=float))
    y = np.log(np.asarray(means, dtype=float))
    xc = x - x.mean()
    return float(np.sum(xc * (y - y.mean())) / np.sum(xc * xc))


def summarize(rows) -> list[dict]:
    """Per-``n`` summaries plus the trend/acceptance row (needs >= 2 sizes)."""
    rows = sorted(rows, key=lambda r: (r["n"], r["replicate"]))
    if not rows:
        return []
    experiment = rows[0]["experiment"]
    out = []
    prev = None
    for n in sorted({r["n"] for r in rows}):
        group = [r for r in rows if r["n"] == n]
        ok = [r for r in group if r["status"] == "ok"]
        h2_mean, h2_se = _mean_se(r["h2_estimate"] for r in ok)
        tail_mean, tail_se = _mean_se(r["tail_prob"] for r in ok)
        q_mean, q_se = _mean_se(r["q_t"] for r in ok)
        shift_mean, shift_se = _mean_se(r["shift_quadform"] for r in ok)
        targets = [r["q_t_target"] for r in ok if r["q_t_target"] is not None]
        members = [r["s_n_member"] for r in ok if r["s_n_member"] is not None]
        violations = sum(
            1 for r in ok if r["jensen_bound"] is not None and r["jensen_bound"] < r["h2_estimate"] - 3.0 * r["h2_se"]
        )
        cur = dict.fromkeys(SUMMARY_COLUMNS)
        cur.update(
            row="n",
            experiment=experiment,
            n=n,
            p=group[0]["p"],
            replicates=len(group),
            failed=len(group) - len(ok),
            h2_mean=h2_mean,
            h2_se=h2_se,
            tail_mean=tail_mean,
            tail_se=tail_se,
            jensen_violations=violations if any(r["jensen_bound"] is not None for r in ok) else None,
            s_n_rate=(sum(members) / len(members)) if members else None,
            q_t_mean=q_mean,
            q_t_se=q_se,
            q_t_target=float(np.mean(targets)) if targets else None,
            shift_mean=shift_mean,
            shift_se=shift_se,
        )
        cur["h2_step_ok"] = _step_ok(prev, cur, "h2_mean", "h2_se")
        cur["tail_step_ok"] = _step_ok(prev, cur, "tail_mean", "tail_se")
        out.append(cur)
        prev = cur
    if len(out) >= 2:
        out.append(_trend_row(experiment, out))
    return out


def _all(values):
    vals = [v for v in values if v is not None]
    return all(vals) if vals else None


def _trend_row(experiment, per_n):
    ns = [r["n"] for r in per_n]
    last = per_n[-1]
    trend = dict.fromkeys(SUMMARY_COLUMNS)
    trend.update(row="trend", experiment=experiment, replicates=sum(r["replicates"] for r in per_n), failed=sum(r["failed"] for r in per_n))
    trend["h2_slope"] = loglog_slope(ns, [r["h2_mean"] for r in per_n])
    trend["h2_monotone"] = _all(r["h2_step_ok"] for r in per_n[1:])
    if last["h2_mean"] is not None:
        trend["h2_final_ok"] = last["h2_mean"] < H2_FINAL[experiment]
    if last["tail_mean"] is not None:
        trend["tail_monotone"] = _all(r["tail_step_ok"] for r in per_n[1:])
        trend["tail_final_ok"] = last["tail_mean"] < TAIL_FINAL
    if any(r["jensen_violations"] is not None for r in per_n):
        trend["jensen_ok"] = all((r["jensen_violations"] or 0) == 0 for r in per_n)
    if last["q_t_mean"] is not None:
        trend["q_t_ok"] = abs(last["q_t_mean"] - last["q_t_target"]) <= 3.0 * last["q_t_se"]
    if last["shift_mean"] is not None:
        trend["shift_slope"] = loglog_slope(ns, [r["shift_mean"] for r in per_n])
        if trend["shift_slope"] is not None:
            trend["shift_slope_ok"] = trend["shift_slope"] <= SHIFT_SLOPE_MAX
    return trend


# -- files -------------------------------------------------------------------


def metadata_text(report: ConvergenceReport) -> str:
    cfg = report.config
    lines = [
        "# run metadata",
        f"bvmlab = {__version__}",
        f"python = {platform.python_version()}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"seed = {cfg.seed}",
        "design_stream = SeedSequence(seed, spawn_key=(n, 0))",
        "replicate_stream = SeedSequence(seed, spawn_key=(n, 1, replicate, j)); j: 0 noise, 1 posterior MC, 2 moment constant",
        f"rows = {len(report.rows)}",
        f"failed_rows = {report.n_failed}",
        "",
        "# config echo",
        cfg.to_text(),
    ]
    return "\n".join(lines)


def timing_text(report: ConvergenceReport) -> str:
    lines = ["# wall time per row in seconds (not deterministic)", "n replicate seconds"]
    for (n, rep), wall in sorted(report.wall_times.items()):
        lines.append(f"{n} {rep} {wall:.6f}")
    return "\n".join(lines) + "\n"


def write_outputs(report: ConvergenceReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report_csv = render_csv(report.rows, REPORT_COLUMNS)
    # the summary is computed from the serialised report so it is derivable from it alone
    summary_csv = render_csv(summarize(parse_csv(report_csv)), SUMMARY_COLUMNS)
    paths = {
        "report": out / "report.csv",
        "summary": out / "summary.csv",
        "metadata": out / "metadata.txt",
        "timing": out / "timing.txt",
    }
    paths["report"].write_text(report_csv, encoding="utf-8")
    paths["summary"].write_text(summary_csv, encoding="utf-8")
    paths["metadata"].write_text(metadata_text(report), encoding="utf-8")
    paths["timing"].write_text(timing_text(report), encoding="utf-8")
    return paths
