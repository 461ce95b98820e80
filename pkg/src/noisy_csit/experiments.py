"""SNR sweeps, diversity-slope fits, codebook-vs-rho tables and config-driven runs."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, streams
from .channel import ChannelSpec
from .exceptions import ConfigError, DomainError
from .mapping import BitMapping, quasi_grey_mapping
from .objective import PowerCodebook
from .optimizer import (
    DesignProblem,
    OptimizerOptions,
    db_to_linear,
    no_csit_baseline,
    optimize_general,
    optimize_levels,
)
from .simulator import simulate

SCHEMES = ("no-csit", "noiseless-feedback", "noisy-feedback", "identity-mapping-noisy")
CSV_HEADER = ("snr_db", "scheme", "k", "rho", "p_out", "p_avg")


def fmt(x):
    return format(float(x), ".17g")


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    scheme: str
    k: int
    rho: float
    p_out: float
    p_avg: float


@dataclass
class SweepResult:
    rows: list
    metadata: dict = field(default_factory=dict)
    flagged: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    def scheme(self, name):
        return [r for r in self.rows if r.scheme == name]

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in self.rows:
            w.writerow([fmt(r.snr_db), r.scheme, r.k, fmt(r.rho), fmt(r.p_out), fmt(r.p_avg)])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source, metadata=None):
        """Parse CSV text or a path written by :meth:`to_csv`."""
        text = source
        if isinstance(source, Path) or ("\n" not in str(source) and Path(str(source)).exists()):
            text = Path(source).read_text()
        reader = csv.reader(io.StringIO(text))
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise DomainError(f"unexpected CSV header {header}")
        rows = [
            SweepRow(float(a), s, int(k), float(rho), float(po), float(pa))
            for a, s, k, rho, po, pa in reader
        ]
        return cls(rows, dict(metadata or {}))


def _problem_for(template, snr, rho=None, mapping=None):
    rho = template.rho if rho is None else rho
    mapping = template.mapping if mapping is None else mapping
    return DesignProblem(template.spec, template.K, float(rho), mapping, float(snr))


def sweep_snr(
    template,
    snr_db_grid,
    schemes=SCHEMES,
    opts=None,
    method="simplified",
    check_points=(),
    sim_trials=100_000,
    seed=0,
    workers=1,
):
    """Optimize each scheme at every SNR and tabulate analytic outage/power.

    ``template`` is a :class:`DesignProblem` whose ``snr`` is ignored. Each
    point is warm-started from the previous point's levels. Points where the
    optimizer did not converge are kept and listed in ``flagged``. SNRs in
    ``check_points`` get a simulator cross-check stored in ``checks``.
    """
    grid = sorted(float(x) for x in snr_db_grid)
    if not grid:
        raise DomainError("SNR grid is empty")
    if len(set(grid)) != len(grid):
        raise DomainError("SNR grid has repeated points")
    bad = [s for s in schemes if s not in SCHEMES]
    if bad:
        raise DomainError(f"unknown schemes {bad}; choose from {list(SCHEMES)}")
    opts = opts or OptimizerOptions()
    optimize = optimize_general if method == "general" else optimize_levels
    result = SweepResult([], _metadata(template, opts, seed))
    checks = {float(x) for x in check_points}

    for scheme in SCHEMES:
        if scheme not in schemes:
            continue
        previous = None
        for snr_db in grid:
            snr = db_to_linear(snr_db)
            if scheme == "no-csit":
                p_out = no_csit_baseline(template.spec, snr, opts)
                result.rows.append(SweepRow(snr_db, scheme, 1, template.rho, p_out, snr))
                continue
            if scheme == "noiseless-feedback":
                problem = _problem_for(template, snr, 0.0, BitMapping.identity(template.K))
            elif scheme == "identity-mapping-noisy":
                problem = _problem_for(template, snr, mapping=BitMapping.identity(template.K))
            else:
                problem = _problem_for(template, snr)
            starts = [] if previous is None else [np.asarray(previous) * (snr / previous_snr)]
            if method == "general":
                starts = []
            res = optimize(problem, opts, extra_starts=starts)
            previous, previous_snr = res.levels, snr
            result.rows.append(SweepRow(snr_db, scheme, problem.K, problem.rho, res.p_out, res.p_avg))
            if not res.converged:
                result.flagged.append((snr_db, scheme))
            if snr_db in checks:
                rep = simulate(res.codebook, problem.mapping, problem.rho, problem.spec, sim_trials, seed, workers)
                result.checks.append({"snr_db": snr_db, "scheme": scheme, "analytic_p_out": res.p_out, **rep.to_dict()})
    return result


@dataclass(frozen=True)
class DiversityFit:
    slope: float
    snr_window_db: tuple
    residual: float


def estimate_diversity(curve, window_db):
    """Least-squares slope of ``-log10 p_out`` against ``log10 snr`` in a window.

    ``curve`` holds rows with ``snr_db``/``p_out`` attributes or
    ``(snr_db, p_out)`` pairs.
    """
    lo, hi = (float(x) for x in window_db)
    if not lo < hi:
        raise DomainError(f"empty SNR window {window_db}")
    pts = []
    for row in curve:
        s, p = (row.snr_db, row.p_out) if hasattr(row, "snr_db") else row
        if lo - 1e-9 <= s <= hi + 1e-9:
            pts.append((float(s), float(p)))
    if len(pts) < 3:
        raise DomainError(f"need at least 3 points in [{lo}, {hi}] dB, got {len(pts)}")
    x = np.array([s / 10.0 for s, _ in pts])
    p = np.array([p for _, p in pts])
    if np.any(p <= 0):
        raise DomainError("outage is zero inside the window; raise precision or shrink the window")
    y = -np.log10(p)
    slope, icpt = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return DiversityFit(float(slope), (lo, hi), resid)


@dataclass(frozen=True)
class CodebookRow:
    rho: float
    mapping: str
    levels: tuple
    p_out: float
    p_avg: float

    @property
    def spread(self):
        return self.levels[-1] - self.levels[0]


def codebook_vs_rho(template, rho_grid, include_identity=False, opts=None):
    """Optimized levels at a fixed SNR for each crossover probability."""
    rhos = [float(r) for r in rho_grid]
    if not rhos:
        raise DomainError("rho grid is empty")
    if any(not 0.0 <= r <= 0.5 for r in rhos):
        raise DomainError("rho grid must lie in [0, 0.5]")
    variants = [("quasi-grey", None)]
    if include_identity:
        variants.append(("identity", BitMapping.identity(template.K)))
    rows = []
    for label, mapping in variants:
        for rho in rhos:
            m = mapping if mapping is not None else quasi_grey_mapping(template.K, rho)
            res = optimize_levels(_problem_for(template, template.snr, rho, m), opts)
            rows.append(CodebookRow(rho, label, tuple(res.levels), res.p_out, res.p_avg))
    return rows


def codebook_rows_csv(rows):
    K = len(rows[0].levels) if rows else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rho", "mapping"] + [f"p{j}" for j in range(K)] + ["p_out", "p_avg"])
    for r in rows:
        w.writerow([fmt(r.rho), r.mapping] + [fmt(x) for x in r.levels] + [fmt(r.p_out), fmt(r.p_avg)])
    return buf.getvalue()


def _metadata(template, opts, seed):
    return {
        "spec": template.spec.to_dict(),
        "K": template.K,
        "rho": template.rho,
        "mapping": list(template.mapping.codewords),
        "generator": streams.GENERATOR_NAME,
        "seed": int(seed),
        "version": __version__,
        "mc_samples": opts.mc_samples if not template.spec.closed_form else None,
    }


# --------------------------------------------------------------------------
# configuration documents

SECTIONS = {
    "channel": {"kind", "t", "r", "rate"},
    "feedback": {"k", "rho", "mapping"},
    "design": {"method", "snr_db", "levels", "rho_grid", "include_identity", "mc_samples", "mc_seed", "restarts", "max_iter"},
    "sweep": {"snr_db", "schemes", "diversity_window_db", "check_points", "check_trials"},
    "simulate": {"trials", "snr_db", "levels", "workers"},
}
TOP_LEVEL = set(SECTIONS) | {"seed"}

DEFAULTS = {
    "seed": 0,
    "channel": {"kind": "siso", "t": None, "r": None, "rate": 4.0},
    "feedback": {"k": 2, "rho": 0.0, "mapping": "quasi-grey"},
    "design": {
        "method": "simplified",
        "snr_db": None,
        "levels": None,
        "rho_grid": None,
        "include_identity": False,
        "mc_samples": 200_000,
        "mc_seed": 0,
        "restarts": 3,
        "max_iter": 2000,
    },
    "sweep": None,
    "simulate": None,
}
SWEEP_DEFAULTS = {"snr_db": None, "schemes": list(SCHEMES), "diversity_window_db": None, "check_points": [], "check_trials": 100_000}
SIM_DEFAULTS = {"trials": 100_000, "snr_db": None, "levels": None, "workers": 1}


def _merge(defaults, given, section):
    if not isinstance(given, dict):
        raise ConfigError(section, "must be an object")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"{section}.{unknown[0]}", "unknown key")
    out = dict(defaults)
    out.update(given)
    return out


def parse_config(doc):
    """Validate a config mapping and fill defaults; raises :class:`ConfigError`."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(doc) - TOP_LEVEL)
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    cfg = {"seed": doc.get("seed", 0)}
    for name in ("channel", "feedback", "design"):
        cfg[name] = _merge(DEFAULTS[name], doc.get(name, {}), name)
    cfg["sweep"] = _merge(SWEEP_DEFAULTS, doc["sweep"], "sweep") if doc.get("sweep") is not None else None
    cfg["simulate"] = _merge(SIM_DEFAULTS, doc["simulate"], "simulate") if doc.get("simulate") is not None else None
    _validate(cfg)
    return cfg


def _need(cond, fieldname, message):
    if not cond:
        raise ConfigError(fieldname, message)


def _is_num(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _is_int(x):
    return isinstance(x, int) and not isinstance(x, bool)


def _snr_grid(value, fieldname):
    if isinstance(value, dict):
        _need(set(value) <= {"start", "stop", "step"}, fieldname, "range needs start, stop, step")
        _need(all(_is_num(value.get(k)) for k in ("start", "stop", "step")), fieldname, "range needs numeric start, stop, step")
        _need(value["step"] > 0 and value["stop"] >= value["start"], fieldname, "need step > 0 and stop >= start")
        n = int(math.floor((value["stop"] - value["start"]) / value["step"] + 1e-9)) + 1
        return [value["start"] + k * value["step"] for k in range(n)]
    _need(isinstance(value, list) and value and all(_is_num(v) for v in value), fieldname, "must be a nonempty list of numbers")
    return [float(v) for v in value]


def _validate(cfg):
    _need(_is_int(cfg["seed"]) and cfg["seed"] >= 0, "seed", "must be a nonnegative integer")
    ch = cfg["channel"]
    _need(ch["kind"] in ("siso", "miso", "simo", "mimo"), "channel.kind", "must be siso, miso, simo or mimo")
    for key in ("t", "r"):
        _need(ch[key] is None or (_is_int(ch[key]) and ch[key] >= 1), f"channel.{key}", "must be a positive integer")
    _need(_is_num(ch["rate"]) and ch["rate"] > 0, "channel.rate", "must be a positive number")
    try:
        cfg["_spec"] = ChannelSpec.from_kind(ch["kind"], ch["t"], ch["r"], float(ch["rate"]))
    except DomainError as exc:
        raise ConfigError("channel", str(exc)) from exc

    fb = cfg["feedback"]
    _need(_is_int(fb["k"]) and fb["k"] >= 1, "feedback.k", "must be a positive integer")
    _need(_is_num(fb["rho"]) and 0 <= fb["rho"] <= 0.5, "feedback.rho", "must lie in [0, 0.5]")
    m = fb["mapping"]
    try:
        if m == "quasi-grey":
            mapping = quasi_grey_mapping(fb["k"], fb["rho"])
        elif m == "identity":
            mapping = BitMapping.identity(fb["k"])
        elif m == "preset":
            mapping = BitMapping.preset(fb["k"])
        elif isinstance(m, list) and all(_is_int(c) for c in m):
            mapping = BitMapping(tuple(m))
        else:
            raise ConfigError("feedback.mapping", "must be quasi-grey, identity, preset or a list of codewords")
    except DomainError as exc:
        raise ConfigError("feedback.mapping", str(exc)) from exc
    _need(mapping.K == fb["k"], "feedback.mapping", f"has {mapping.K} codewords but k={fb['k']}")
    cfg["_mapping"] = mapping

    d = cfg["design"]
    _need(d["method"] in ("simplified", "general"), "design.method", "must be simplified or general")
    _need(d["snr_db"] is None or _is_num(d["snr_db"]), "design.snr_db", "must be a number")
    if d["levels"] is not None:
        _need(isinstance(d["levels"], list) and len(d["levels"]) == fb["k"] and all(_is_num(x) and x >= 0 for x in d["levels"]),
              "design.levels", f"must be a list of {fb['k']} nonnegative numbers")
        try:
            PowerCodebook(tuple(d["levels"]))
        except DomainError as exc:
            raise ConfigError("design.levels", str(exc)) from exc
    if d["rho_grid"] is not None:
        _need(isinstance(d["rho_grid"], list) and d["rho_grid"] and all(_is_num(r) and 0 <= r <= 0.5 for r in d["rho_grid"]),
              "design.rho_grid", "must be a nonempty list of values in [0, 0.5]")
        _need(d["snr_db"] is not None, "design.snr_db", "required when rho_grid is given")
    _need(isinstance(d["include_identity"], bool), "design.include_identity", "must be true or false")
    for key in ("mc_samples", "restarts", "max_iter"):
        _need(_is_int(d[key]) and d[key] >= (0 if key == "restarts" else 1), f"design.{key}", "must be a positive integer")
    _need(_is_int(d["mc_seed"]) and d["mc_seed"] >= 0, "design.mc_seed", "must be a nonnegative integer")

    sw = cfg["sweep"]
    if sw is not None:
        _need(sw["snr_db"] is not None, "sweep.snr_db", "required")
        sw["snr_db"] = _snr_grid(sw["snr_db"], "sweep.snr_db")
        _need(len(set(sw["snr_db"])) == len(sw["snr_db"]), "sweep.snr_db", "repeated SNR points")
        _need(isinstance(sw["schemes"], list) and sw["schemes"] and all(s in SCHEMES for s in sw["schemes"]),
              "sweep.schemes", f"must be a nonempty subset of {list(SCHEMES)}")
        win = sw["diversity_window_db"]
        _need(win is None or (isinstance(win, list) and len(win) == 2 and all(_is_num(x) for x in win) and win[0] < win[1]),
              "sweep.diversity_window_db", "must be [lo, hi] with lo < hi")
        _need(isinstance(sw["check_points"], list) and all(_is_num(x) for x in sw["check_points"]), "sweep.check_points", "must be a list of numbers")
        _need(_is_int(sw["check_trials"]) and sw["check_trials"] >= 1, "sweep.check_trials", "must be a positive integer")

    sim = cfg["simulate"]
    if sim is not None:
        _need(_is_int(sim["trials"]) and sim["trials"] >= 1, "simulate.trials", "must be a positive integer")
        _need(_is_int(sim["workers"]) and sim["workers"] >= 1, "simulate.workers", "must be a positive integer")
        _need(sim["snr_db"] is None or _is_num(sim["snr_db"]), "simulate.snr_db", "must be a number")
        if sim["levels"] is not None:
            _need(isinstance(sim["levels"], list) and len(sim["levels"]) == fb["k"] and all(_is_num(x) and x >= 0 for x in sim["levels"]),
                  "simulate.levels", f"must be a list of {fb['k']} nonnegative numbers")
        else:
            _need(sim["snr_db"] is not None or d["snr_db"] is not None or d["levels"] is not None,
                  "simulate.levels", "give levels, or an snr_db to design them at")


def public_config(cfg):
    return {k: v for k, v in cfg.items() if not k.startswith("_")}


def config_hash(cfg):
    text = json.dumps(public_config(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def options_from(cfg):
    d = cfg["design"]
    return OptimizerOptions(
        max_iter=d["max_iter"], restarts=d["restarts"], mc_samples=d["mc_samples"], mc_seed=d["mc_seed"]
    )


def template_from(cfg, snr_db=None):
    snr_db = 0.0 if snr_db is None else snr_db
    fb = cfg["feedback"]
    return DesignProblem(cfg["_spec"], fb["k"], float(fb["rho"]), cfg["_mapping"], db_to_linear(snr_db))


def design_job(cfg, snr_db=None):
    snr_db = cfg["design"]["snr_db"] if snr_db is None else snr_db
    problem = template_from(cfg, snr_db)
    opts = options_from(cfg)
    optimize = optimize_general if cfg["design"]["method"] == "general" else optimize_levels
    return problem, optimize(problem, opts)


def design_document(problem, result):
    cb = result.codebook
    doc = {
        "channel": problem.spec.to_dict(),
        "k": problem.K,
        "rho": problem.rho,
        "mapping": list(problem.mapping.codewords),
        "snr": problem.snr,
        "levels": list(cb.levels),
        "boundaries": list(getattr(cb, "boundaries", cb.levels)),
        "p_out": result.p_out,
        "p_avg": result.p_avg,
        "no_csit_p_out": no_csit_baseline(problem.spec, problem.snr),
        "converged": result.converged,
        "starts_used": result.starts_used,
    }
    k = result.kkt
    if k is not None:
        doc["kkt"] = {
            "lambda_p": k.lambda_p,
            "stationarity_residual": k.stationarity_residual,
            "intermediate_index": k.intermediate_index,
            "levels_bracket_snr": k.levels_bracket_snr,
            "level_condition_residual": k.level_condition_residual,
        }
    return doc


def dump_json(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def manifest(cfg, outputs):
    return {
        "tool": "noisy-csit",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "generator": streams.GENERATOR_NAME,
        "seed": cfg["seed"],
        "config_sha256": config_hash(cfg),
        "config": public_config(cfg),
        "outputs": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(outputs.items())},
    }


def run_parsed(cfg, out_dir):
    """Execute every job described by a parsed config; returns the written file names."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    opts = options_from(cfg)
    d = cfg["design"]
    seed = cfg["seed"]
    designed = None

    if d["snr_db"] is not None:
        problem, result = design_job(cfg)
        designed = result.codebook
        outputs["design.json"] = dump_json(design_document(problem, result))
        if d["rho_grid"] is not None:
            rows = codebook_vs_rho(problem, d["rho_grid"], d["include_identity"], opts)
            outputs["codebook_vs_rho.csv"] = codebook_rows_csv(rows)

    sw = cfg["sweep"]
    if sw is not None:
        res = sweep_snr(
            template_from(cfg),
            sw["snr_db"],
            sw["schemes"],
            opts,
            method=d["method"],
            check_points=sw["check_points"],
            sim_trials=sw["check_trials"],
            seed=seed,
        )
        res.metadata["flagged"] = [list(f) for f in res.flagged]
        outputs["sweep.csv"] = res.to_csv()
        outputs["sweep_meta.json"] = dump_json({"metadata": res.metadata, "checks": res.checks})
        win = sw["diversity_window_db"]
        if win is not None:
            fits = {}
            for scheme in sw["schemes"]:
                fit = estimate_diversity(res.scheme(scheme), win)
                fits[scheme] = {"slope": fit.slope, "snr_window_db": list(fit.snr_window_db), "residual": fit.residual}
            outputs["diversity.json"] = dump_json(fits)

    sim = cfg["simulate"]
    if sim is not None:
        problem = template_from(cfg, sim["snr_db"] if sim["snr_db"] is not None else d["snr_db"] or 0.0)
        if sim["levels"] is not None:
            cb = PowerCodebook(tuple(sim["levels"]))
        elif d["levels"] is not None:
            cb = PowerCodebook(tuple(d["levels"]))
        elif sim["snr_db"] is None and designed is not None:
            cb = designed
        else:
            cb = design_job(cfg, sim["snr_db"])[1].codebook
        rep = simulate(cb, problem.mapping, problem.rho, problem.spec, sim["trials"], seed, sim["workers"])
        doc = rep.to_dict()
        doc["levels"] = list(cb.levels)
        outputs["simulate.json"] = dump_json(doc)

    for name, text in outputs.items():
        (out_dir / name).write_text(text)
    (out_dir / "manifest.json").write_text(dump_json(manifest(cfg, outputs)))
    return sorted(outputs) + ["manifest.json"]


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"line {exc.lineno}: {exc.msg}") from exc
    return parse_config(doc)


def run_config(path, out_dir="."):
    """Run a config file.

    Returns ``(status, files, message)``: status 0 on success, 2 for a
    malformed config (message names the field), 3 for a numerical failure.
    """
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return 2, [], str(exc)
    try:
        return 0, run_parsed(cfg, out_dir), ""
    except (DomainError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return 3, [], f"numerical failure: {exc}"
