"""Command-line entry point: ``noisy-csit <command> [flags]``.

Every command accepts the shared flags; a ``--config`` JSON document is read
first and explicit flags override it. Exit status is 0 on success, 2 for a
bad configuration and 3 for a numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import json
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from .exceptions import ConfigError, DomainError
from .mapping import BitMapping, is_quasi_grey, quasi_grey_mapping, search_quasi_grey
from .objective import (
    PowerCodebook,
    QuantizerDesign,
    avg_power_general,
    outage_general,
)
from .optimizer import model_for
from .simulator import simulate

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _floats(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _snr_list(text):
    """``a,b,c`` or ``start:stop:step`` (inclusive)."""
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3:
            raise argparse.ArgumentTypeError("range must be start:stop:step")
        start, stop, step = parts
        if step <= 0 or stop < start:
            raise argparse.ArgumentTypeError("need step > 0 and stop >= start")
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return [start + k * step for k in range(n)]
    return _floats(text)


def _shared(p):
    p.add_argument("--config", help="JSON config; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output file (directory for 'run')")
    p.add_argument("--trials", type=int)
    p.add_argument("--snr-db", type=_snr_list, help="value, list a,b,c or range start:stop:step")
    p.add_argument("--k", type=int)
    p.add_argument("--rho", type=float)
    p.add_argument("--channel", choices=["siso", "miso", "simo", "mimo"])
    p.add_argument("--t", type=int)
    p.add_argument("--r", type=int)
    p.add_argument("--rate", type=float, help="nats per channel use")
    p.add_argument("--mapping", help="quasi-grey, identity, preset or comma-separated codewords")


def build_parser():
    parser = argparse.ArgumentParser(prog="noisy-csit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="optimize a power codebook at one SNR")
    _shared(p)
    p.add_argument("--method", choices=["simplified", "general"])

    p = sub.add_parser("evaluate", help="analytic outage and power of given levels")
    _shared(p)
    p.add_argument("--levels", type=_floats, required=True)
    p.add_argument("--boundaries", type=_floats)

    p = sub.add_parser("simulate", help="Monte Carlo of the closed loop")
    _shared(p)
    p.add_argument("--levels", type=_floats, help="default: design at --snr-db")
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("sweep", help="outage versus SNR for several schemes (CSV)")
    _shared(p)
    p.add_argument("--schemes", help="comma-separated subset of " + ",".join(ex.SCHEMES))

    p = sub.add_parser("mapsearch", help="find a quasi-grey bit mapping")
    _shared(p)
    p.add_argument("--dominance", choices=["window", "all"], default="window")

    p = sub.add_parser("codebook-vs-rho", help="optimized levels across crossover probabilities (CSV)")
    _shared(p)
    p.add_argument("--rho-grid", type=_floats, default=[0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5])
    p.add_argument("--identity", action="store_true", help="also tabulate the identity mapping")

    p = sub.add_parser("diversity", help="diversity slope over an SNR window")
    _shared(p)
    p.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), required=True)
    p.add_argument("--schemes", help="comma-separated subset of " + ",".join(ex.SCHEMES))

    p = sub.add_parser("run", help="execute every job in a config file")
    _shared(p)
    return parser


def _load_doc(args):
    if not args.config:
        return {}
    try:
        doc = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {args.config}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    return doc


def _section(doc, name):
    sec = doc.get(name)
    if sec is None:
        sec = {}
        doc[name] = sec
    if not isinstance(sec, dict):
        raise ConfigError(name, "must be an object")
    return sec


def _single_snr(args):
    if args.snr_db is None:
        return None
    if len(args.snr_db) != 1:
        raise ConfigError("--snr-db", f"'{args.command}' takes a single SNR")
    return args.snr_db[0]


def merged_config(args):
    """Config document with command-line overrides applied, then validated."""
    doc = copy.deepcopy(_load_doc(args))
    if args.seed is not None:
        doc["seed"] = args.seed
    ch = _section(doc, "channel")
    for flag, key in (("channel", "kind"), ("t", "t"), ("r", "r"), ("rate", "rate")):
        if getattr(args, flag) is not None:
            ch[key] = getattr(args, flag)
    fb = _section(doc, "feedback")
    if args.k is not None:
        fb["k"] = args.k
    if args.rho is not None:
        fb["rho"] = args.rho
    if args.mapping is not None:
        m = args.mapping
        if m not in ("quasi-grey", "identity", "preset"):
            try:
                m = [int(x) for x in m.split(",")]
            except ValueError as exc:
                raise ConfigError("--mapping", "codewords must be integers") from exc
        fb["mapping"] = m
    d = _section(doc, "design")
    if getattr(args, "method", None) is not None:
        d["method"] = args.method

    cmd = args.command
    if cmd in ("design", "evaluate", "codebook-vs-rho"):
        snr = _single_snr(args)
        if snr is not None:
            d["snr_db"] = snr
        if cmd == "codebook-vs-rho":
            d["rho_grid"] = args.rho_grid
            d["include_identity"] = bool(args.identity)
    elif cmd == "simulate":
        sim = _section(doc, "simulate")
        snr = _single_snr(args)
        if snr is not None:
            sim["snr_db"] = snr
        if args.trials is not None:
            sim["trials"] = args.trials
        if args.levels is not None:
            sim["levels"] = args.levels
        sim["workers"] = args.workers
    elif cmd in ("sweep", "diversity"):
        sw = _section(doc, "sweep")
        if args.snr_db is not None:
            sw["snr_db"] = args.snr_db
        if args.schemes:
            sw["schemes"] = [s.strip() for s in args.schemes.split(",")]
        if args.trials is not None:
            sw["check_trials"] = args.trials
        if cmd == "diversity":
            sw["diversity_window_db"] = list(args.window)
    return ex.parse_config(doc)


def _emit(text, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _need_snr(value, fieldname):
    if value is None:
        raise ConfigError(fieldname, "an SNR is required (--snr-db)")
    return value


def cmd_design(cfg, args):
    _need_snr(cfg["design"]["snr_db"], "design.snr_db")
    problem, result = ex.design_job(cfg)
    _emit(ex.dump_json(ex.design_document(problem, result)), args.out)


def cmd_evaluate(cfg, args):
    snr_db = cfg["design"]["snr_db"]
    problem = ex.template_from(cfg, snr_db)
    bounds = args.boundaries if args.boundaries is not None else args.levels
    if len(args.levels) != problem.K or len(bounds) != problem.K:
        raise ConfigError("--levels", f"need {problem.K} levels and boundaries")
    try:
        design = QuantizerDesign(tuple(args.levels), tuple(bounds))
    except DomainError as exc:
        raise ConfigError("--levels", str(exc)) from exc
    F = model_for(problem.spec, ex.options_from(cfg))
    doc = {
        "levels": list(design.levels),
        "boundaries": list(design.boundaries),
        "k": problem.K,
        "rho": problem.rho,
        "mapping": list(problem.mapping.codewords),
        "p_out": outage_general(design, problem.tm, F),
        "p_avg": avg_power_general(design, problem.tm, F),
    }
    if snr_db is not None:
        doc["snr"] = problem.snr
        doc["within_budget"] = bool(doc["p_avg"] <= problem.snr * (1 + 1e-9))
    _emit(ex.dump_json(doc), args.out)


def cmd_simulate(cfg, args):
    sim = cfg["simulate"]
    if sim["levels"] is not None:
        cb = PowerCodebook(tuple(sim["levels"]))
        problem = ex.template_from(cfg, sim["snr_db"])
    else:
        _need_snr(sim["snr_db"] if sim["snr_db"] is not None else cfg["design"]["snr_db"], "simulate.snr_db")
        problem, result = ex.design_job(cfg, sim["snr_db"])
        cb = result.codebook
    rep = simulate(cb, problem.mapping, problem.rho, problem.spec, sim["trials"], cfg["seed"], sim["workers"])
    doc = rep.to_dict()
    doc["levels"] = list(cb.levels)
    _emit(ex.dump_json(doc), args.out)


def _sweep(cfg):
    sw = cfg["sweep"]
    return ex.sweep_snr(
        ex.template_from(cfg),
        sw["snr_db"],
        sw["schemes"],
        ex.options_from(cfg),
        method=cfg["design"]["method"],
        check_points=sw["check_points"],
        sim_trials=sw["check_trials"],
        seed=cfg["seed"],
    )


def cmd_sweep(cfg, args):
    res = _sweep(cfg)
    _emit(res.to_csv(), args.out)
    for snr_db, scheme in res.flagged:
        print(f"warning: optimizer did not converge at {snr_db} dB ({scheme})", file=sys.stderr)


def cmd_diversity(cfg, args):
    res = _sweep(cfg)
    fits = {}
    for scheme in cfg["sweep"]["schemes"]:
        fit = ex.estimate_diversity(res.scheme(scheme), cfg["sweep"]["diversity_window_db"])
        fits[scheme] = {"slope": fit.slope, "snr_window_db": list(fit.snr_window_db), "residual": fit.residual}
    _emit(ex.dump_json(fits), args.out)


def cmd_mapsearch(cfg, args):
    K, rho = cfg["feedback"]["k"], cfg["feedback"]["rho"]
    if not 0 < rho < 0.5:
        raise ConfigError("feedback.rho", "mapping search needs 0 < rho < 0.5")
    found = search_quasi_grey(K, rho, dominance=args.dominance)
    doc = {"k": K, "rho": rho, "dominance": args.dominance}
    if found is None:
        doc["mapping"] = None
    else:
        doc["mapping"] = list(found.codewords)
        doc["binary"] = found.binary()
    for label, m in (("preset", None), ("identity", BitMapping.identity(K))):
        if m is None:
            try:
                m = BitMapping.preset(K)
            except DomainError:
                continue
        rep = is_quasi_grey(m, rho, dominance=args.dominance)
        doc[f"{label}_passes"] = rep.passed
    _emit(ex.dump_json(doc), args.out)


def cmd_codebook_vs_rho(cfg, args):
    d = cfg["design"]
    _need_snr(d["snr_db"], "design.snr_db")
    template = ex.template_from(cfg, d["snr_db"])
    rows = ex.codebook_vs_rho(template, d["rho_grid"], d["include_identity"], ex.options_from(cfg))
    _emit(ex.codebook_rows_csv(rows), args.out)


def cmd_run(cfg, args):
    files = ex.run_parsed(cfg, args.out or ".")
    for name in files:
        print(name)


COMMANDS = {
    "design": cmd_design,
    "evaluate": cmd_evaluate,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "mapsearch": cmd_mapsearch,
    "codebook-vs-rho": cmd_codebook_vs_rho,
    "diversity": cmd_diversity,
    "run": cmd_run,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("sweep", "diversity") and args.snr_db is None and not args.config:
            raise ConfigError("--snr-db", "a sweep needs an SNR grid")
        cfg = merged_config(args)
        COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
