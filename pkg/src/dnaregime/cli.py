"""Command-line entry point.

Parameter precedence, lowest to highest: built-in defaults, top-level keys of
the ``--config`` TOML file, the file's table for the subcommand (for example
``[regime-map.gc]``), then flags given on the command line.  Config keys are
flag names with dashes replaced by underscores.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np
import tomli

from . import __version__
from .channels import GrowthModel
from .gcbound import DPolicy, gv_rate_constrained, gv_rate_unconstrained, hamming_ball_bruteforce, hamming_ball_constrained, mean_substitution
from .homopolymer import (
    EstimatorConfig,
    achievable_rate_constrained,
    achievable_rate_unconstrained,
    average_estimates,
    build_hmm,
    estimate_output_entropy,
)
from . import sweep as sweep_mod
from . import simulate as sim

OUT_ENV = "DNAREGIME_OUT"
DEFAULT_OUT = "dnaregime-out"
# runtime-only settings; they never change results and stay out of the hash
UNHASHED = ("out", "threads", "config", "log_level")

log = logging.getLogger("dnaregime")
log.addHandler(logging.NullHandler())
log.propagate = False


class InputError(Exception):
    """Bad flags, config or input files (exit code 1)."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


# -- option tables ------------------------------------------------------------

def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text) -> int:
    if isinstance(text, bool):
        raise ValueError("expected an integer")
    if isinstance(text, int):
        return text
    v = float(text)
    if not v.is_integer():
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def _pair(text) -> tuple:
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = str(text).split(",")
    if len(vals) != 2:
        raise ValueError(f"expected two comma-separated integers, got {text!r}")
    return (_int(vals[0]), _int(vals[1]))


def _grid(text) -> str:
    if isinstance(text, (list, tuple)):
        return ",".join(repr(float(v)) for v in text)
    return str(text)


ESTIMATOR = [
    ("steps", _int, 1_000_000, "fixed number of estimator steps; 0 uses the convergence rule"),
    ("conv_thresh", float, 1e-9, "running-mean change threshold of the convergence rule"),
    ("stab_req", _int, 1000, "consecutive stable steps required by the convergence rule"),
    ("max_steps", _int, 10 ** 8, "step cap of the convergence rule"),
    ("min_steps", _int, 0, "steps taken before the convergence rule is consulted"),
    ("replicates", _int, 1, "independent seeds averaged per estimate"),
]
GROWTH = [
    ("growth", str, "linear", "growth law: linear, exponential, logarithmic or parabolic"),
    ("alpha", float, 0.0, "growth factor"),
    ("p", float, 0.01, "base substitution probability"),
]
SEED = [("seed", _int, 0, "master seed")]

OPTIONS: dict[str, list] = {
    "rates homopolymer": [("m", _int, 1, "maximum run-length of the constrained code")] + GROWTH + ESTIMATOR + SEED,
    "rates gc": [
        ("n", _int, 60, "code length"),
        ("epsilon", float, 0.0, "GC window half-width"),
        ("alpha", float, 0.0, "parabolic growth factor"),
        ("p", float, 0.01, "substitution probability of balanced sequences"),
        ("dpolicy", str, "correct", "d-policy: correct, detect or scaled(c=...)"),
    ],
    "entropy": [("m", _int, 1, "maximum run-length of the input chain")] + GROWTH + ESTIMATOR + SEED,
    "regime-map homopolymer": [
        ("m", str, "1,2,3,4", "comma-separated m values"),
        ("growth", str, "linear", "growth law over run-length"),
        ("alpha", _grid, "0:0.3:0.005", "alpha grid start:stop:step (inclusive) or a list"),
        ("p", float, 0.01, "base substitution probability"),
    ] + [o if o[0] != "replicates" else ("replicates", _int, 3, o[3]) for o in ESTIMATOR] + SEED + [
        ("format", str, "csv,svg", "comma-separated outputs among csv, json, svg"),
    ],
    "regime-map gc": [
        ("n", str, "60,120", "comma-separated code lengths"),
        ("epsilon", str, "0,0.05,0.1", "comma-separated GC window half-widths"),
        ("alpha", _grid, "0:10:0.1", "alpha grid start:stop:step (stop excluded) or a list"),
        ("p", float, 0.01, "substitution probability of balanced sequences"),
        ("dpolicy", str, "correct", "d-policy: correct, detect or scaled(c=...)"),
        ("format", str, "csv,svg", "comma-separated outputs among csv, json, svg"),
        ("calibrate", _bool, False, "also write the d-policy calibration report"),
    ],
    "ball-volume": [
        ("n", _int, 4, "sequence length"),
        ("d", _int, 2, "minimum distance (ball radius d-1)"),
        ("epsilon", float, 0.5, "GC window half-width"),
        ("w", _int, None, "GC content of the centre (default: n//2)"),
        ("oracle", _bool, False, "also count by brute-force enumeration (n <= 12)"),
    ],
    "simulate": [
        ("constraint", str, "none", "none, m=<int> or eps=<float>"),
        ("n", _int, 110, "sequence length"),
        ("count", _int, 10000, "number of codewords"),
    ] + GROWTH + SEED + [
        ("margin", _int, 12, "positions this close to either end are excluded from run statistics"),
        ("compare_hmm", _bool, False, "also sample the marginalized chain channel (run constraints)"),
        ("write_codebook", _bool, False, "write the codewords to codebook.txt"),
    ],
    "synth-dataset": [
        ("n", _int, 110, "reference length"),
        ("count", _int, 1000, "number of references"),
        ("constraint", str, "none", "reference constraint: none, m=<int> or eps=<float>"),
        ("depth", str, "fixed", "read depth law: fixed, poisson or gc-biased"),
        ("depth_mean", float, 10.0, "mean reads per reference"),
        ("depth_beta", float, 0.0, "gc-biased depth: exp(-beta (g - 1/2)^2) factor"),
        ("sub_growth", str, "linear", "substitution law"),
        ("sub_alpha", float, 0.0, "substitution growth factor"),
        ("sub_p", float, 0.01, "substitution base rate"),
        ("ins_growth", str, "linear", "insertion law"),
        ("ins_alpha", float, 0.0, "insertion growth factor"),
        ("ins_p", float, 0.0, "insertion base rate"),
        ("del_growth", str, "linear", "deletion law"),
        ("del_alpha", float, 0.0, "deletion growth factor"),
        ("del_p", float, 0.0, "deletion base rate"),
        ("insertion_symbol", str, "uniform", "uniform, or distinct from the preceding base"),
        ("format", str, "fasta", "fasta or lines"),
    ] + SEED,
    "profile": [
        ("references", str, None, "reference file (FASTA or one sequence per line, optionally gzip)"),
        ("reads", str, None, "read file (FASTQ, FASTA or lines, optionally gzip)"),
        ("ref_format", str, "auto", "auto, fasta or lines"),
        ("read_format", str, "auto", "auto, fastq, fasta or lines"),
        ("primer_trim", _pair, (0, 0), "prefix,suffix lengths removed from references"),
        ("read_trim", _pair, (0, 0), "prefix,suffix lengths removed from reads"),
        ("k", _int, 12, "k-mer length of the candidate index"),
        ("max_candidates", _int, 5, "candidates scored by edit distance per read"),
        ("max_edit_fraction", float, 0.3, "reads farther than this fraction of the payload are unassigned"),
        ("max_run", _int, 6, "largest run-length stratum"),
        ("gc_bins", _grid, "0.35:0.65:0.05", "GC bin edges start:stop:step or a list"),
        ("weighting", str, "reads", "reads (pooled) or references (unweighted mean)"),
        ("floor", _int, 1000, "minimum denominator of a reliable stratum"),
    ],
    "compose-report": [
        ("references", str, None, "reference file"),
        ("reads", str, "", "read file (optional; without it every reference has zero reads)"),
        ("ref_format", str, "auto", "auto, fasta or lines"),
        ("read_format", str, "auto", "auto, fastq, fasta or lines"),
        ("primer_trim", _pair, (0, 0), "prefix,suffix lengths removed from references"),
        ("read_trim", _pair, (0, 0), "prefix,suffix lengths removed from reads"),
        ("k", _int, 12, "k-mer length of the candidate index"),
        ("max_candidates", _int, 5, "candidates scored by edit distance per read"),
        ("max_edit_fraction", float, 0.3, "reads farther than this fraction of the payload are unassigned"),
        ("max_run", _int, 12, "longest run-length listed in the histogram"),
    ],
}
REQUIRED = {"profile": ("references", "reads"), "compose-report": ("references",)}
COMMON = [
    ("config", str, None, "TOML parameter file"),
    ("out", str, None, f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})"),
    ("threads", _int, 1, "worker process cap; results do not depend on it"),
    ("log_level", str, "info", "log level of the sidecar run.log"),
]


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dnaregime", description="Constrained versus unconstrained coding for DNA storage channels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    top = parser.add_subparsers(dest="cmd", metavar="COMMAND", parser_class=_Parser)
    groups: dict[str, Any] = {}
    for key, opts in OPTIONS.items():
        parts = key.split()
        if len(parts) == 2:
            if parts[0] not in groups:
                g = top.add_parser(parts[0], help=f"{parts[0]} subcommands")
                groups[parts[0]] = g.add_subparsers(dest="sub", metavar="FAMILY", parser_class=_Parser)
            sp = groups[parts[0]].add_parser(parts[1], help=f"{key}")
        else:
            sp = top.add_parser(key, help=key)
        for name, conv, default, text in opts + COMMON:
            shown = "" if default is None else f" (default: {default})"
            if conv is _bool:
                sp.add_argument(_flag(name), dest=name, nargs="?", const="true", default=argparse.SUPPRESS,
                                help=text + shown)
            else:
                sp.add_argument(_flag(name), dest=name, default=argparse.SUPPRESS, help=text + shown)
        sp.set_defaults(_command=key)
    return parser


# -- configuration ----------------------------------------------------------------

def load_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise InputError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise InputError(f"malformed config file {path}: {exc}") from None


def _table_for(doc: dict, command: str) -> dict:
    node: Any = doc
    for part in command.split():
        node = node.get(part, {}) if isinstance(node, dict) else {}
    return node if isinstance(node, dict) else {}


def resolve(command: str, given: dict) -> dict:
    """Merge defaults, config file and flags; convert and validate types."""
    opts = {name: (conv, default) for name, conv, default, _ in OPTIONS[command] + COMMON}
    values = {name: default for name, (conv, default) in opts.items()}
    sources: list[tuple[str, dict]] = []
    if given.get("config"):
        doc = load_config_file(given["config"])
        all_keys = {n for o in OPTIONS.values() for n, *_ in o} | {n for n, *_ in COMMON}
        groups = {k.split()[0] for k in OPTIONS}
        top = {}
        for k, v in doc.items():
            if isinstance(v, dict):
                if k not in OPTIONS and k not in groups:
                    raise InputError(f"config table [{k}] does not name a subcommand")
                continue
            if k not in all_keys:
                raise InputError(f"unknown config key {k!r}")
            if k in opts:
                top[k] = v
        table = {k: v for k, v in _table_for(doc, command).items() if not isinstance(v, dict)}
        for k in table:
            if k not in opts:
                raise InputError(f"config key {k!r} is not an option of '{command}'")
        sources += [("config file", top), (f"config table [{command}]", table)]
    sources.append(("command line", {k: v for k, v in given.items() if k in opts}))
    for where, src in sources:
        for k, v in src.items():
            conv = opts[k][0]
            try:
                values[k] = None if v is None else conv(v)
            except (TypeError, ValueError) as exc:
                raise InputError(f"{where}: bad value for {_flag(k)}: {v!r} ({exc})") from None
    for k in REQUIRED.get(command, ()):
        if not values.get(k):
            raise InputError(f"'{command}' requires {_flag(k)}")
    if values["out"] is None:
        values["out"] = os.environ.get(OUT_ENV) or DEFAULT_OUT
    if values["threads"] < 1:
        raise InputError("--threads must be >= 1")
    return values


def config_hash(command: str, values: dict) -> str:
    hashed = {k: v for k, v in values.items() if k not in UNHASHED}
    blob = json.dumps({"command": command, "params": hashed}, sort_keys=True, default=list)
    return hashlib.sha256(blob.encode()).hexdigest()


# -- output helpers -----------------------------------------------------------------

class Output:
    def __init__(self, command: str, values: dict):
        self.dir = Path(values["out"])
        self.dir.mkdir(parents=True, exist_ok=True)
        self.command = command
        self.values = values
        self.hash = config_hash(command, values)
        self.files: list[str] = []

    def path(self, name: str) -> Path:
        return self.dir / name

    def write_text(self, name: str, text: str) -> Path:
        p = self.path(name)
        p.write_text(text)
        self.files.append(name)
        log.info("wrote %s", p)
        return p

    def write_json(self, name: str, payload: dict) -> Path:
        payload = dict(payload)
        payload["config_sha256"] = self.hash
        return self.write_text(name, json.dumps(_jsonable(payload), indent=1, sort_keys=True) + "\n")

    def write_config(self):
        hashed = {k: v for k, v in self.values.items() if k not in UNHASHED}
        runtime = {k: self.values.get(k) for k in UNHASHED}
        doc = {"command": self.command, "params": hashed, "seed": hashed.get("seed"),
               "config_sha256": self.hash, "version": __version__, "runtime": runtime}
        self.path("config.json").write_text(json.dumps(_jsonable(doc), indent=1, sort_keys=True) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _growth(values, prefix: str = "") -> GrowthModel:
    return GrowthModel(values[prefix + "growth"], values[prefix + "alpha"], values[prefix + "p"])


def _estimator(values) -> EstimatorConfig:
    if values["steps"] > 0:
        return EstimatorConfig.fixed(values["steps"], conv_thresh=values["conv_thresh"], stab_req=values["stab_req"])
    return EstimatorConfig(conv_thresh=values["conv_thresh"], stab_req=values["stab_req"],
                           max_steps=values["max_steps"], min_steps=values["min_steps"])


def _entropy(values, m: int, model: GrowthModel):
    hmm = build_hmm(m, model)
    config = _estimator(values)
    reps = [estimate_output_entropy(hmm, config, sweep_mod.point_seed(values["seed"], 0, r))
            for r in range(max(1, values["replicates"]))]
    return average_estimates(reps), reps


def _formats(text: str) -> list[str]:
    fmts = [f.strip().lower() for f in text.split(",") if f.strip()] or ["csv"]
    for f in fmts:
        if f not in ("csv", "json", "svg"):
            raise InputError(f"unknown output format {f!r}; use csv, json or svg")
    return fmts


# -- commands ---------------------------------------------------------------------------

def cmd_rates_homopolymer(v, out: Output):
    model = _growth(v)
    if not model.is_run_model:
        raise InputError("rates homopolymer needs a run-length growth law")
    est, _ = _entropy(v, v["m"], model)
    rc = achievable_rate_constrained(v["m"], model, est)
    ru = achievable_rate_unconstrained(model)
    out.write_json("rates.json", {"m": v["m"], "model": model.to_dict(), "R_u": ru, "R_c": rc.value,
                                  "diff": ru - rc.value, "uncertainty": rc.uncertainty, "entropy": est.to_dict()})
    print(f"R_u={ru:.6f} R_c={rc.value:.6f} diff={ru - rc.value:.6f} +/- {rc.uncertainty:.2g}")


def cmd_rates_gc(v, out: Output):
    model = GrowthModel("parabolic-gc", v["alpha"], v["p"])
    policy = DPolicy.parse(v["dpolicy"])
    pt = sweep_mod.sweep_gc([v["n"]], [v["epsilon"]], [v["alpha"]], v["p"], policy)[0]
    u = gv_rate_unconstrained(v["n"], pt.d_u)
    c = gv_rate_constrained(v["n"], pt.d_c, v["epsilon"])
    u.mean_p = mean_substitution(v["n"], 0.5, model)
    c.mean_p = mean_substitution(v["n"], v["epsilon"], model)
    for r in (u, c):
        r.alpha, r.p, r.dpolicy = v["alpha"], v["p"], policy.describe()
    out.write_json("rates.json", {"unconstrained": u.to_dict(), "constrained": c.to_dict(), "diff": pt.diff})
    print(f"R_u^l={u.rate:.6f} (d={u.d}) R_c^l={c.rate:.6f} (d={c.d}) diff={pt.diff:.6f}")


def cmd_entropy(v, out: Output):
    model = _growth(v)
    est, reps = _entropy(v, v["m"], model)
    out.write_json("entropy.json", {"estimate": est.to_dict(), "replicates": [r.to_dict() for r in reps]})
    print(f"H={est.value:.6f} stderr={est.stderr:.2g} steps={est.steps} achieved={est.achieved}")


def _write_map(out: Output, points, fmts, stem="regime_map"):
    for f in fmts:
        name = f"{stem}.{f}"
        if f == "csv":
            out.write_text(name, sweep_mod.points_to_csv(points, f"config_sha256={out.hash}"))
        elif f == "json":
            out.write_json(name, {"points": [asdict(p) for p in points]})
        else:
            svg = sweep_mod.points_to_svg(points)
            out.write_text(name, svg.replace(">", f">\n<!-- config_sha256={out.hash} -->", 1))
    crossings = sweep_mod.crossings_by_constraint(points)
    out.write_json("crossings.json", {"crossings": crossings})
    for key, xs in crossings.items():
        desc = ", ".join(f"{x['alpha']:.4f} [{x['lo']:.4f}, {x['hi']:.4f}]" for x in xs) or "none"
        print(f"{key}: crossing {desc}")


def cmd_regime_homopolymer(v, out: Output):
    ms = [_int(x) for x in v["m"].split(",") if x.strip()]
    alphas = sweep_mod.parse_grid(v["alpha"], inclusive=True)
    GrowthModel(v["growth"], 0.0, v["p"])  # validates the kind
    points = sweep_mod.sweep_homopolymer(ms, v["growth"], alphas, v["p"], _estimator(v), v["seed"],
                                         replicates=max(1, v["replicates"]), threads=v["threads"])
    _write_map(out, points, _formats(v["format"]))


def cmd_regime_gc(v, out: Output):
    ns = [_int(x) for x in v["n"].split(",") if x.strip()]
    eps = [float(x) for x in v["epsilon"].split(",") if x.strip()]
    alphas = sweep_mod.parse_grid(v["alpha"], inclusive=False)
    if any(a < 0 or a >= 10 for a in alphas):
        raise InputError("GC alpha grid must lie within [0, 10)")
    policy = DPolicy.parse(v["dpolicy"])
    points = sweep_mod.sweep_gc(ns, eps, alphas, v["p"], policy, threads=v["threads"])
    _write_map(out, points, _formats(v["format"]))
    if v["calibrate"]:
        report = sweep_mod.calibrate_dpolicy(n=60, p=v["p"])
        out.write_json("dpolicy_calibration.json", report)
        out.write_text("dpolicy_calibration.md", sweep_mod.calibration_markdown(report))
        print(f"best-matching d-policy: {report['best']}")


def cmd_ball_volume(v, out: Output):
    n, d, eps = v["n"], v["d"], v["epsilon"]
    w = v["w"] if v["w"] is not None else n // 2
    vol = hamming_ball_constrained(n, d, eps, w)
    payload = {"n": n, "d": d, "epsilon": eps, "w": w, "volume": vol}
    if v["oracle"]:
        brute = hamming_ball_bruteforce(n, d, eps, w)
        payload["oracle_volume"] = brute
        payload["agree"] = brute == vol
    out.write_json("ball_volume.json", payload)
    print(vol if not v["oracle"] else f"{vol} (oracle {payload['oracle_volume']})")


def cmd_simulate(v, out: Output):
    model = _growth(v)
    book = sim.generate_codewords(sim.Constraint.parse(v["constraint"]), v["n"], v["count"], v["seed"])
    stats = sim.measure_runlength_stats(book, margin=v["margin"])
    hist = sim.run_histogram(book.sequences, min(v["n"], 20))
    if model.is_run_model:
        y = sim.apply_runlength_channel(book.sequences, model, v["seed"])
    else:
        y = sim.apply_gc_channel(book.sequences, model, v["seed"])
    ch = sim.measure_substitutions(book.sequences, y)
    rows = []
    if model.is_run_model:
        for r in range(1, v["n"] + 1):
            if ch.run_positions[r - 1]:
                rows.append({"r": r, "positions": int(ch.run_positions[r - 1]), "errors": int(ch.run_errors["substitution"][r - 1]),
                             "rate": float(ch.run_rates()[r - 1]), "model": model.rate(r)})
    else:
        for w in range(v["n"] + 1):
            if ch.gc_positions[w]:
                rows.append({"w": w, "positions": int(ch.gc_positions[w]), "errors": int(ch.gc_errors["substitution"][w]),
                             "rate": float(ch.gc_rates()[w]), "model": model.rate(w=w, n=v["n"])})
    payload = {
        "codebook": {"n": book.n, "count": book.count, "constraint": book.constraint.describe(), "law": book.law,
                     "seed": book.seed, "validated": True},
        "interior_run_length_counts": {str(r + 1): int(c) for r, c in enumerate(stats.run_positions) if c},
        "run_histogram": {str(r + 1): int(c) for r, c in enumerate(hist)},
        "gc_counts": {str(w): int(c) for w, c in enumerate(stats.gc_sequences) if c},
        "channel": {"model": model.to_dict(), "rows": rows,
                    "mutual_information_bits": sim.empirical_mutual_information(book.sequences, y)},
    }
    if v["compare_hmm"]:
        if book.constraint.kind != "run" or not model.is_run_model:
            raise InputError("--compare-hmm needs a run constraint and a run-length growth law")
        payload["channel_comparison"] = sim.compare_channels(book.constraint.m, model, v["n"], v["count"], v["seed"])
    out.write_json("simulate.json", payload)
    if v["write_codebook"]:
        out.write_text("codebook.txt", "\n".join(book.strings()) + "\n")
    print(f"{book.count} codewords ({book.constraint.describe()}, {book.law}); "
          f"runs of length 7: {int(hist[6]) if hist.size > 6 else 0}")


def cmd_synth(v, out: Output):
    book = sim.generate_codewords(sim.Constraint.parse(v["constraint"]), v["n"], v["count"], v["seed"])
    laws = sim.ErrorLaws(
        substitution=GrowthModel(v["sub_growth"], v["sub_alpha"], v["sub_p"]),
        insertion=GrowthModel(v["ins_growth"], v["ins_alpha"], v["ins_p"]),
        deletion=GrowthModel(v["del_growth"], v["del_alpha"], v["del_p"]),
        insertion_symbol=v["insertion_symbol"],
    )
    depth = sim.DepthLaw(v["depth"], v["depth_mean"], v["depth_beta"])
    ds = sim.synth_dataset(book, depth, laws, v["seed"], out_dir=out.dir, fmt=v["format"])
    out.files += [Path(p).name for p in ds.paths.values()]
    out.write_json("synth.json", {"references": len(ds.references), "reads": len(ds.reads),
                                  "laws": laws.to_dict(), "depth": asdict(depth),
                                  "files": {k: Path(p).name for k, p in ds.paths.items()}})
    print(f"{len(ds.references)} references, {len(ds.reads)} reads written to {out.dir}")


def _load_inputs(v, need_reads: bool):
    from .empirical import load_references, load_reads
    from .empirical.io import ReadSet
    refs = load_references(v["references"], v["ref_format"], v["primer_trim"], v["k"])
    if v.get("reads"):
        reads = load_reads(v["reads"], v["read_format"])
    elif need_reads:
        raise InputError("--reads is required")
    else:
        reads = ReadSet()
    return refs, reads


def _profile_config(v, max_run: int):
    from .empirical.profile import ProfileConfig
    from .empirical.references import AssignConfig
    return ProfileConfig(assign=AssignConfig(v["k"], v["max_candidates"], v["max_edit_fraction"]),
                         max_run=max_run, read_trim=v["read_trim"])


def cmd_profile(v, out: Output):
    from .empirical.profile import count_reads, error_rates_by_gc, error_rates_by_runlength
    refs, reads = _load_inputs(v, True)
    edges = [float(x) for x in sweep_mod.parse_grid(v["gc_bins"], inclusive=True)]
    counts = count_reads(refs, reads, _profile_config(v, v["max_run"]), threads=v["threads"])
    run_rep = error_rates_by_runlength(counts, refs, v["weighting"], floor=v["floor"])
    gc_rep = error_rates_by_gc(counts, refs, v["weighting"], bins=edges, floor=v["floor"])
    comment = f"config_sha256={out.hash}"
    out.write_text("profile_runlength.csv", run_rep.to_csv(comment))
    out.write_text("profile_gc.csv", gc_rep.to_csv(comment))
    summary = {"references": len(refs), "references_skipped": refs.skipped, "reads": counts.reads,
               "reads_skipped": reads.skipped, "assigned": counts.assigned,
               "unassigned": counts.reads - counts.assigned, "invariant_violations": counts.violations}
    out.write_json("profile.json", {"summary": summary, "runlength": run_rep.to_dict(), "gc": gc_rep.to_dict()})
    print(f"{counts.assigned}/{counts.reads} reads assigned, {counts.violations} invariant violations")
    if counts.violations:
        raise RuntimeError(f"{counts.violations} alignments failed the replay/conservation checks")


def cmd_compose(v, out: Output):
    from .empirical.profile import composition_reports, count_reads
    refs, reads = _load_inputs(v, False)
    counts = count_reads(refs, reads, _profile_config(v, 6), threads=v["threads"], align_reads=False)
    rep = composition_reports(refs, counts.reads_per_ref, max_run=v["max_run"])
    rep["summary"] = {"references": len(refs), "reads": counts.reads, "assigned": counts.assigned}
    out.write_json("composition.json", rep)
    lines = [f"# config_sha256={out.hash}", "run_length,count"]
    lines += [f"{r},{c}" for r, c in rep["runlength_histogram"].items()]
    out.write_text("composition_runlength.csv", "\n".join(lines) + "\n")
    print(f"{len(refs)} references, {counts.assigned} reads assigned")


COMMANDS: dict[str, Callable] = {
    "rates homopolymer": cmd_rates_homopolymer,
    "rates gc": cmd_rates_gc,
    "entropy": cmd_entropy,
    "regime-map homopolymer": cmd_regime_homopolymer,
    "regime-map gc": cmd_regime_gc,
    "ball-volume": cmd_ball_volume,
    "simulate": cmd_simulate,
    "synth-dataset": cmd_synth,
    "profile": cmd_profile,
    "compose-report": cmd_compose,
}


def _setup_log(out_dir: Path, level: str) -> logging.Handler:
    out_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(out_dir / "run.log")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    lvl = getattr(logging, level.upper(), None)
    if not isinstance(lvl, int):
        raise InputError(f"unknown log level {level!r}")
    log.setLevel(lvl)
    return handler


def run(argv: Optional[list] = None) -> int:
    """Parse ``argv`` and execute; returns the process exit code."""
    parser = build_parser()
    handler = None
    try:
        try:
            ns = parser.parse_args(argv)
        except SystemExit as exc:  # --help / --version
            return int(exc.code or 0)
        command = getattr(ns, "_command", None)
        if command is None:
            parser.print_help(sys.stderr)
            return 1
        given = {k: v for k, v in vars(ns).items() if not k.startswith("_") and k not in ("cmd", "sub")}
        values = resolve(command, given)
        out = Output(command, values)
        handler = _setup_log(out.dir, values["log_level"])
        started = time.time()
        log.info("start %s config_sha256=%s", command, out.hash)
        out.write_config()
        COMMANDS[command](values, out)
        log.info("done %s in %.2fs", command, time.time() - started)
        return 0
    except (InputError, ValueError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        log.error("input error: %s", exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - anything else is our fault
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        log.exception("internal failure")
        return 2
    finally:
        if handler is not None:
            log.removeHandler(handler)
            handler.close()


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
