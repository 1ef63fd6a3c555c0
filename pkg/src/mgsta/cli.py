"""Command-line pipeline: estimate bounds, check feasibility, design gains,
simulate, verify, sweep.

Exit codes: 0 success, 2 input error, 3 assumption violation, 4 infeasible,
5 search exhaustion, 6 non-convergence, 7 divergence.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import config as cfgmod
from .bounds import BoundConstants, estimate_bounds
from .design import (DesignInputs, DesignResult, check_feasibility, design_gains,
                     verify_gain_selection)
from .errors import (AssumptionViolation, CertificateError, ContractError, DesignSearchError,
                     DivergenceError, DomainError, InfeasibleError, MgstaError)
from .lyapunov import LyapCert, monitor_trajectory
from .simulator import Scenario, read_trace_csv, run, write_atomic

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ASSUMPTION = 3
EXIT_INFEASIBLE = 4
EXIT_SEARCH = 5
EXIT_NOT_CONVERGED = 6
EXIT_DIVERGED = 7


class _Fail(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


def _dump(obj) -> str:
    return json.dumps(cfgmod.jsonable(obj), indent=2, sort_keys=False) + "\n"


def _out_path(args, built, key: str, default: str) -> str:
    if args.out:
        return args.out
    return os.path.join(built.output.get("dir", "."), built.output.get(key, default))


def _load_config(args):
    if not args.config:
        raise _Fail(EXIT_INPUT, "--config is required")
    cfg = cfgmod.load(args.config)
    return cfg, cfgmod.build(cfg, seed=args.seed, safety=args.safety)


def _load_constants(path) -> BoundConstants:
    if not path:
        raise _Fail(EXIT_INPUT, "--constants is required")
    try:
        with open(path) as fh:
            text = fh.read()
        return BoundConstants.from_json(text)
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read constants {path}: {e.strerror}")
    except json.JSONDecodeError as e:
        raise _Fail(EXIT_INPUT, f"{path}:{e.lineno}:{e.colno}: invalid JSON: {e.msg}")
    except (TypeError, KeyError, ValueError) as e:
        raise _Fail(EXIT_INPUT, f"invalid constants file {path}: {e}")


def _load_design(path) -> DesignResult:
    try:
        with open(path) as fh:
            return DesignResult.from_dict(json.load(fh))
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read design {path}: {e.strerror}")
    except (json.JSONDecodeError, TypeError, KeyError, ValueError) as e:
        raise _Fail(EXIT_INPUT, f"invalid design file {path}: {e}")


def _need_domain(built):
    if built.domain is None:
        raise _Fail(EXIT_INPUT, "config has no domain section")
    return built.domain


# ---------------------------------------------------------------------------
# commands


def cmd_estimate_bounds(args) -> int:
    _, built = _load_config(args)
    dom = _need_domain(built)
    plant = built.model.uncertain_plant(built.sta)
    try:
        rep = estimate_bounds(plant, dom, built.sta, safety=built.safety)
    except AssumptionViolation as e:
        raise _Fail(EXIT_ASSUMPTION, f"assumption violated ({e.which}): {e}")
    except DomainError as e:
        raise _Fail(EXIT_ASSUMPTION, f"domain outside the model's validity region: {e}")
    out = _out_path(args, built, "constants", "constants.json")
    write_atomic(out, rep.constants.to_json() + "\n")
    if args.report:
        write_atomic(args.report, _dump(rep.to_dict()))
    _say(args, rep.constants.to_json())
    return EXIT_OK


def cmd_check_feasibility(args) -> int:
    c = _load_constants(args.constants)
    ok, margin = check_feasibility(c)
    _say(args, _dump({"feasible": ok, "margin": margin}).rstrip())
    return EXIT_OK if ok else EXIT_INFEASIBLE


def cmd_design_gains(args) -> int:
    c = _load_constants(args.constants)
    _, built = _load_config(args)
    inputs = DesignInputs(c, built.sta, built.design_options)
    try:
        res = design_gains(inputs)
    except InfeasibleError as e:
        raise _Fail(EXIT_INFEASIBLE, f"infeasible: {e}")
    except DesignSearchError as e:
        raise _Fail(EXIT_SEARCH, str(e))
    rep = verify_gain_selection(res, inputs)
    if not rep.passed:
        raise _Fail(EXIT_SEARCH, "designed gains fail verification: " + ", ".join(rep.failed()))
    out = _out_path(args, built, "design", "design.json")
    write_atomic(out, _dump(res.to_dict()))
    _say(args, _dump({"k1": res.k1, "k2": res.k2, "p1": res.p1, "p2": res.p2,
                      "k1_interval": res.k1_interval}).rstrip())
    return EXIT_OK


def _scenario(built, design: DesignResult | None) -> Scenario:
    sp, cert = built.sta, built.cert
    if design is not None:
        sp = sp.with_gains(design.k1, design.k2)
        if cert is None:
            cert = LyapCert(design.p1, design.p2)
    sc = dict(built.scenario)
    if "v0" in sc:
        sc["v0"] = tuple(sc["v0"])
    try:
        return Scenario(built.model, sp, cert=cert, **sc)
    except (ContractError, TypeError) as e:
        raise _Fail(EXIT_INPUT, f"invalid scenario: {e}")


def cmd_simulate(args) -> int:
    _, built = _load_config(args)
    design = _load_design(args.design) if args.design else None
    scen = _scenario(built, design)
    out = _out_path(args, built, "trace", "trace.csv")
    summary_path = args.summary or built.output.get("summary") or out + ".summary.json"
    try:
        trace, summary = run(scen)
    except DivergenceError as e:
        if e.trace is not None:
            e.trace.to_csv(out)
        write_atomic(summary_path, _dump({"converged": False, "diverged": True,
                                          "time": e.time}))
        raise _Fail(EXIT_DIVERGED, str(e))
    trace.to_csv(out)
    write_atomic(summary_path, _dump(summary.to_dict()))
    _say(args, _dump(summary.to_dict()).rstrip())
    return EXIT_OK if summary.converged else EXIT_NOT_CONVERGED


def cmd_verify(args) -> int:
    _, built = _load_config(args)
    if not args.trace:
        raise _Fail(EXIT_INPUT, "--trace is required")
    design = _load_design(args.design) if args.design else None
    scen = _scenario(built, design)
    if scen.cert is None:
        raise _Fail(EXIT_INPUT, "verify needs a certificate (scenario.cert or --design)")
    try:
        trace = read_trace_csv(args.trace, built.model)
    except OSError as e:
        raise _Fail(EXIT_INPUT, f"cannot read trace {args.trace}: {e.strerror}")
    plant = built.model.uncertain_plant(scen.sta)
    rep = monitor_trajectory(trace, plant, scen.sta, scen.cert, eps=scen.eps, hold=scen.hold)
    text = _dump(rep.to_dict())
    if args.out:
        write_atomic(args.out, text)
    _say(args, text.rstrip())
    return EXIT_OK if rep.passed else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------------------
# sweep


def _parse_values(text: str) -> list:
    vals = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            vals.append(json.loads(item))
        except json.JSONDecodeError:
            raise _Fail(EXIT_INPUT, f"bad sweep value {item!r}")
    if not vals:
        raise _Fail(EXIT_INPUT, "--values is empty")
    return vals


def _sweep_one(job) -> dict:
    cfg, key, value, task, seed, safety = job
    row = {"value": value, "exit_code": EXIT_OK, "feasible": "", "margin": "",
           "converged": "", "t_conv": "", "message": ""}
    try:
        built = cfgmod.build(cfgmod.set_key(cfg, key, value), seed=seed, safety=safety)
        if task == "simulate":
            trace, summary = run(_scenario(built, None))
            row["converged"] = summary.converged
            row["t_conv"] = "" if summary.t_conv is None else summary.t_conv
            row["exit_code"] = EXIT_OK if summary.converged else EXIT_NOT_CONVERGED
            return row
        dom = _need_domain(built)
        rep = estimate_bounds(built.model.uncertain_plant(built.sta), dom, built.sta,
                              safety=built.safety)
        ok, margin = check_feasibility(rep.constants)
        row["feasible"], row["margin"] = ok, margin
        if not ok:
            row["exit_code"] = EXIT_INFEASIBLE
        elif task == "design":
            design_gains(DesignInputs(rep.constants, built.sta, built.design_options))
    except AssumptionViolation as e:
        row["exit_code"], row["message"] = EXIT_ASSUMPTION, str(e)
    except DesignSearchError as e:
        row["exit_code"], row["message"] = EXIT_SEARCH, str(e)
    except DivergenceError as e:
        row["exit_code"], row["message"] = EXIT_DIVERGED, str(e)
    except (MgstaError, _Fail) as e:
        row["exit_code"], row["message"] = getattr(e, "code", EXIT_INPUT), str(e)
    return row


def threshold(rows: list[dict]):
    """Largest swept value up to which every value (in sweep order) is feasible."""
    best = None
    for r in rows:
        if r["feasible"] is True:
            best = r["value"]
        else:
            break
    return best


def cmd_sweep(args) -> int:
    cfg, _ = _load_config(args)
    if not args.key:
        raise _Fail(EXIT_INPUT, "--key is required")
    values = _parse_values(args.values or "")
    cfgmod.set_key(cfg, args.key, values[0])  # fail early on a bad key
    jobs = [(cfg, args.key, v, args.task, args.seed, args.safety) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["key", "value", "exit_code", "feasible", "margin",
                                        "converged", "t_conv", "message"],
                       lineterminator="\n")
    w.writeheader()
    for r in rows:
        r = dict(r, key=args.key)
        for k in ("margin", "t_conv"):
            if isinstance(r[k], float):
                r[k] = f"{r[k]:.17g}"
        w.writerow(r)
    out = args.out or "sweep.csv"
    write_atomic(out, buf.getvalue())
    if args.task != "simulate":
        _say(args, f"feasibility threshold: {threshold(rows)}")
    _say(args, buf.getvalue().rstrip())
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--out", help="output path")
    common.add_argument("--seed", type=int, help="sampling seed (overrides domain.seed)")
    common.add_argument("--safety", type=float, help="bound safety factor (>= 1)")
    common.add_argument("--quiet", action="store_true", help="suppress stdout output")

    p = argparse.ArgumentParser(prog="mgsta", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("estimate-bounds", parents=[common], help="sample the bound constants")
    s.add_argument("--report", help="also write the full report with witnesses")
    s.set_defaults(func=cmd_estimate_bounds)

    s = sub.add_parser("check-feasibility", parents=[common], help="test the feasibility margin")
    s.add_argument("--constants", help="constants JSON")
    s.set_defaults(func=cmd_check_feasibility)

    s = sub.add_parser("design-gains", parents=[common], help="select k1, k2")
    s.add_argument("--constants", help="constants JSON")
    s.set_defaults(func=cmd_design_gains)

    s = sub.add_parser("simulate", parents=[common], help="closed-loop simulation")
    s.add_argument("--design", help="take k1, k2 (and p1, p2) from a design file")
    s.add_argument("--summary", help="run summary JSON path")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("verify", parents=[common], help="Lyapunov checks along a trace")
    s.add_argument("--trace", help="trace CSV written by simulate")
    s.add_argument("--design", help="take the certificate from a design file")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", parents=[common], help="vary one config key")
    s.add_argument("--key", help="dotted config key, e.g. plant.params.g_bar")
    s.add_argument("--values", help="comma-separated values")
    s.add_argument("--task", choices=("feasibility", "design", "simulate"),
                   default="feasibility")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        return args.func(args)
    except _Fail as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except CertificateError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (cfgmod.ConfigError, ContractError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except AssumptionViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ASSUMPTION


if __name__ == "__main__":
    sys.exit(main())
