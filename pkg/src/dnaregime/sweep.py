"""Parameter sweeps producing error-regime maps for both constraint families."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .channels import GrowthModel
from .gcbound import DPolicy, expected_error_distance, gv_rate_constrained, gv_rate_unconstrained, mean_substitution
from .homopolymer import (
    EstimatorConfig,
    achievable_rate_constrained,
    achievable_rate_unconstrained,
    average_estimates,
    build_hmm,
    estimate_output_entropy,
)

CSV_COLUMNS = ("family", "constraint", "kind", "alpha", "p", "n", "R_u", "R_c", "diff",
               "uncertainty", "d_u", "d_c")
NEUTRAL_BAND = 0.005

# Target values for the GC regime map at n = 60: constrained coding with
# eps = 0 wins by about 0.18 for 1.6 <= alpha <= 5.6; the largest gains for
# eps = 0 and eps = 0.05 are about 0.35 and 0.37.
GC_ANCHORS = {"region": (1.6, 5.6), "gain": 0.18, "max_gain": {0.0: 0.35, 0.05: 0.37}}


@dataclass
class RegimePoint:
    family: str
    constraint: float
    kind: str
    alpha: float
    p: float
    n: Optional[int]
    R_u: float
    R_c: float
    diff: float
    uncertainty: float = 0.0
    d_u: Optional[int] = None
    d_c: Optional[int] = None


def alpha_grid(start: float, stop: float, step: float, inclusive: bool = True) -> list[float]:
    """Grid start, start+step, ... rounded to kill accumulation error."""
    if step <= 0:
        raise ValueError("grid step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9))
    vals = [round(start + i * step, 12) for i in range(count + 1)]
    if not inclusive and vals and abs(vals[-1] - stop) < 1e-12:
        vals.pop()
    return vals


def parse_grid(text: str, inclusive: bool = True) -> list[float]:
    """``a:b:step`` or a comma-separated list."""
    if ":" in text:
        a, b, s = (float(v) for v in text.split(":"))
        return alpha_grid(a, b, s, inclusive=inclusive)
    return [float(v) for v in text.split(",") if v.strip()]


def point_seed(master: int, index: int, replicate: int = 0) -> int:
    """Seed for one grid cell, a function of (master, index, replicate) only."""
    ss = np.random.SeedSequence(entropy=master, spawn_key=(index, replicate))
    hi, lo = ss.generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


def _homopolymer_point(args):
    m, kind, alpha, p, config, seeds = args
    model = GrowthModel(kind, alpha, p)
    hmm = build_hmm(m, model)
    est = average_estimates([estimate_output_entropy(hmm, config, s) for s in seeds])
    rc = achievable_rate_constrained(m, model, est)
    ru = achievable_rate_unconstrained(model)
    point = RegimePoint(
        family="homopolymer", constraint=m, kind=model.kind, alpha=alpha, p=p, n=None,
        R_u=ru, R_c=rc.value, diff=ru - rc.value, uncertainty=rc.uncertainty,
    )
    return point, est


def _run_tasks(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        # map preserves task order whatever the completion order
        return list(pool.map(fn, tasks, chunksize=1))


def sweep_homopolymer(m_list: Sequence[int], growth_kind: str, alphas: Sequence[float], p: float,
                      estimator_config: Optional[EstimatorConfig] = None, seed: int = 0,
                      replicates: int = 1, threads: int = 1, return_estimates: bool = False):
    """One point per (m, alpha); R_c uses a fresh entropy estimate averaged
    over ``replicates`` seeds."""
    if not m_list or not alphas:
        raise ValueError("grids must be nonempty")
    if not 0 < p <= 0.75:
        raise ValueError(f"base substitution probability must lie in (0, 0.75], got {p}")
    config = estimator_config or EstimatorConfig()
    tasks = []
    for i, (m, a) in enumerate((m, a) for m in m_list for a in alphas):
        seeds = [point_seed(seed, i, r) for r in range(replicates)]
        tasks.append((int(m), growth_kind, float(a), float(p), config, seeds))
    results = _run_tasks(_homopolymer_point, tasks, threads)
    points = [r[0] for r in results]
    if return_estimates:
        return points, [r[1] for r in results]
    return points


def _gc_point(args):
    n, eps, alpha, p, policy = args
    model = GrowthModel("parabolic-gc", alpha, p)
    pu = mean_substitution(n, 0.5, model)
    pc = mean_substitution(n, eps, model)
    # a distance beyond n+1 cannot be met by two distinct words; rate is 0 there
    du = min(policy.distance(pu * n), n + 1)
    dc = min(policy.distance(pc * n), n + 1)
    ru = gv_rate_unconstrained(n, du).rate
    rc = gv_rate_constrained(n, dc, eps).rate
    return RegimePoint(family="gc", constraint=eps, kind=model.kind, alpha=alpha, p=p, n=n,
                       R_u=ru, R_c=rc, diff=ru - rc, uncertainty=0.0, d_u=du, d_c=dc)


def sweep_gc(n_list: Sequence[int], epsilon_list: Sequence[float], alphas: Sequence[float],
             p: float, dpolicy: Optional[DPolicy] = None, threads: int = 1) -> list[RegimePoint]:
    """Exact GV-bound comparison per (n, eps, alpha)."""
    if not n_list or not epsilon_list or not alphas:
        raise ValueError("grids must be nonempty")
    policy = dpolicy or DPolicy()
    tasks = [(int(n), float(e), float(a), float(p), policy)
             for n in n_list for e in epsilon_list for a in alphas]
    return _run_tasks(_gc_point, tasks, threads)


# -- crossings -----------------------------------------------------------

@dataclass(frozen=True)
class Crossing:
    alpha: float
    lo: float
    hi: float
    direction: str  # "down" when diff goes from positive to negative


def _zero_crossings(alphas, values):
    out = []
    last = None
    for a, v in zip(alphas, values):
        if v == 0:
            continue
        if last is not None and (last[1] > 0) != (v > 0):
            a0, v0 = last
            out.append((a0 + (a - a0) * v0 / (v0 - v), "down" if v0 > 0 else "up"))
        last = (a, v)
    return out


def find_crossing(alphas: Sequence[float], diffs: Sequence[float],
                  uncertainties: Optional[Sequence[float]] = None) -> list[Crossing]:
    """Sign changes of ``diffs`` by linear interpolation.  The interval spans
    the crossings of diff - u and diff + u nearest to each crossing."""
    a = np.asarray(alphas, dtype=float)
    if np.any(np.diff(a) < 0):
        raise ValueError("series must be sorted by alpha")
    d = np.asarray(diffs, dtype=float)
    u = np.zeros_like(d) if uncertainties is None else np.asarray(uncertainties, dtype=float)
    centre = _zero_crossings(a, d)
    bands = [c for c, _ in _zero_crossings(a, d - u)] + [c for c, _ in _zero_crossings(a, d + u)]
    result = []
    for x, direction in centre:
        near = [b for b in bands if abs(b - x) <= (a[-1] - a[0])] or [x]
        # the nearest band crossing on either side, else the centre itself
        left = [b for b in near if b <= x]
        right = [b for b in near if b >= x]
        lo = max(left) if left else x
        hi = min(right) if right else x
        result.append(Crossing(alpha=float(x), lo=float(min(lo, x)), hi=float(max(hi, x)),
                               direction=direction))
    return result


def crossings_by_constraint(points: Iterable[RegimePoint]) -> dict:
    groups: dict = {}
    for pt in points:
        groups.setdefault((pt.family, pt.n, pt.constraint), []).append(pt)
    out = {}
    for (family, n, c), pts in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or 0, kv[0][2])):
        pts.sort(key=lambda q: q.alpha)
        xs = find_crossing([q.alpha for q in pts], [q.diff for q in pts], [q.uncertainty for q in pts])
        key = f"{family}:n={n}:constraint={c:g}" if n else f"{family}:constraint={c:g}"
        out[key] = [asdict(x) for x in xs]
    return out


# -- output ----------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def points_to_csv(points: Sequence[RegimePoint], header_comment: Optional[str] = None) -> str:
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for pt in points:
        writer.writerow([_fmt(getattr(pt, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _parse_value(name: str, text: str):
    if text == "":
        return None
    if name in ("family", "kind"):
        return text
    if name in ("n", "d_u", "d_c"):
        return int(text)
    if name == "constraint":
        v = float(text)
        return int(v) if v.is_integer() and "." not in text else v
    return float(text)


def read_points_csv(text: str) -> list[RegimePoint]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV columns {reader.fieldnames}")
    return [RegimePoint(**{k: _parse_value(k, row[k]) for k in CSV_COLUMNS}) for row in reader]


def _cell_color(diff: float, unc: float, scale: float) -> str:
    if abs(diff) <= max(unc, NEUTRAL_BAND):
        return "#bdbdbd"
    t = min(1.0, abs(diff) / scale) if scale > 0 else 1.0
    # purple: unconstrained wins (diff > 0); orange: constrained wins
    base = (118, 42, 131) if diff > 0 else (230, 97, 1)
    r, g, b = (round(255 + (c - 255) * (0.25 + 0.75 * t)) for c in base)
    return f"#{r:02x}{g:02x}{b:02x}"


def points_to_svg(points: Sequence[RegimePoint], cell: int = 12) -> str:
    """Self-contained heatmap: one row per constraint, one column per alpha."""
    if not points:
        raise ValueError("no points to render")
    rows = sorted({(pt.family, pt.n or 0, pt.constraint) for pt in points})
    cols = sorted({pt.alpha for pt in points})
    ri = {r: i for i, r in enumerate(rows)}
    ci = {c: i for i, c in enumerate(cols)}
    scale = max(abs(pt.diff) for pt in points)
    left, top = 110, 20
    width = left + cell * len(cols) + 20
    height = top + cell * len(rows) + 40
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    for (family, n, c), i in ri.items():
        label = f"{'m' if family == 'homopolymer' else 'eps'}={c:g}" + (f" n={n}" if n else "")
        y = top + i * cell + cell * 0.75
        out.append(f'<text x="{left - 4}" y="{y:.1f}" text-anchor="end">{label}</text>')
    for pt in points:
        x = left + ci[pt.alpha] * cell
        y = top + ri[(pt.family, pt.n or 0, pt.constraint)] * cell
        color = _cell_color(pt.diff, pt.uncertainty, scale)
        out.append(f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" fill="{color}">'
                   f'<title>alpha={pt.alpha:g} diff={pt.diff:.5f}</title></rect>')
    yb = top + len(rows) * cell + 14
    out.append(f'<text x="{left}" y="{yb}">alpha {cols[0]:g}</text>')
    out.append(f'<text x="{left + cell * len(cols)}" y="{yb}" text-anchor="end">{cols[-1]:g}</text>')
    out.append(f'<text x="{left}" y="{yb + 14}">purple: unconstrained higher, orange: constrained higher, '
               f'grey: within max(uncertainty, {NEUTRAL_BAND})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_map(points: Sequence[RegimePoint], path, fmt: str = "", header_comment: Optional[str] = None) -> Path:
    """Write points as csv (default), json or svg heatmap."""
    if not points:
        raise ValueError("no points to write")
    fmt = (fmt or "csv").lower()
    path = Path(path)
    if fmt == "csv":
        text = points_to_csv(points, header_comment)
    elif fmt == "json":
        payload = {"points": [asdict(p) for p in points]}
        if header_comment:
            payload["meta"] = header_comment
        text = json.dumps(payload, indent=1, sort_keys=True) + "\n"
    elif fmt in ("svg", "svg-heatmap"):
        text = points_to_svg(points)
    else:
        raise ValueError(f"unknown map format {fmt!r}")
    path.write_text(text)
    return path


# -- d-policy calibration ---------------------------------------------------

def _gain_summary(points: Sequence[RegimePoint]) -> dict:
    pts = sorted(points, key=lambda q: q.alpha)
    wins = [q for q in pts if q.diff < 0]
    lo_a, hi_a = GC_ANCHORS["region"]
    inside = [-q.diff for q in pts if lo_a <= q.alpha <= hi_a]
    return {
        "win_region": [wins[0].alpha, wins[-1].alpha] if wins else None,
        "mean_gain_in_anchor_region": float(np.mean(inside)) if inside else None,
        "max_gain": max([-q.diff for q in pts] + [0.0]),
    }


def calibrate_dpolicy(n: int = 60, p: float = 0.01, alphas: Optional[Sequence[float]] = None,
                      scales: Sequence[float] = (1.0, 1.5, 2.0, 2.5, 3.0)) -> dict:
    """Compare d-policies against the reference GC anchors at length n.

    The scaled policy is reported for every c in ``scales``; the best c is
    the one with the smallest anchor score.
    """
    alphas = list(alphas) if alphas is not None else alpha_grid(0.0, 10.0, 0.1, inclusive=False)
    lo_a, hi_a = GC_ANCHORS["region"]
    policies = [DPolicy("correct"), DPolicy("detect")] + [DPolicy("scaled", c) for c in scales]
    table = []
    for pol in policies:
        entry = {"policy": pol.describe()}
        score = 0.0
        for eps in (0.0, 0.05):
            s = _gain_summary(sweep_gc([n], [eps], alphas, p, pol))
            entry[f"eps={eps:g}"] = s
            score += abs(s["max_gain"] - GC_ANCHORS["max_gain"][eps])
            if eps == 0.0:
                if s["win_region"] is None:
                    score += 10.0
                else:
                    score += abs(s["win_region"][0] - lo_a) / 10 + abs(s["win_region"][1] - hi_a) / 10
                score += abs((s["mean_gain_in_anchor_region"] or 0.0) - GC_ANCHORS["gain"])
        entry["score"] = score
        table.append(entry)
    best = min(table, key=lambda e: e["score"])
    return {"n": n, "p": p, "anchors": {"region": list(GC_ANCHORS["region"]), "gain": GC_ANCHORS["gain"],
                                         "max_gain": {f"eps={k:g}": v for k, v in GC_ANCHORS["max_gain"].items()}},
            "policies": table, "best": best["policy"]}


def calibration_markdown(report: dict) -> str:
    lines = [f"# d-policy calibration (n={report['n']}, p={report['p']})", "",
             "Anchors: eps=0 wins on alpha in "
             f"[{report['anchors']['region'][0]}, {report['anchors']['region'][1]}] with gain "
             f"{report['anchors']['gain']}; max gains {report['anchors']['max_gain']}.", "",
             "| policy | eps=0 win region | eps=0 mean gain on anchor region | eps=0 max gain | eps=0.05 max gain | score |",
             "|---|---|---|---|---|---|"]
    for e in report["policies"]:
        a, b = e["eps=0"], e["eps=0.05"]
        mg = a["mean_gain_in_anchor_region"]
        lines.append(f"| {e['policy']} | {a['win_region']} | {mg:.3f} | {a['max_gain']:.3f} | "
                     f"{b['max_gain']:.3f} | {e['score']:.3f} |")
    lines += ["", f"Best-matching policy: **{report['best']}** (lowest score)."]
    return "\n".join(lines) + "\n"
