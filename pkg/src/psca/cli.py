"""``psca`` command-line driver: generate, solve, compare, audit.

Exit status: 0 success, 2 configuration or argument error, 3 numerical
failure, 4 audit failure, 5 I/O error.
"""

import argparse
import csv
import io
import logging
import math
import os
import sys

import numpy as np

from . import __version__
from .config import ALIASES, CONFIG_KEYS, build_config, parse_assignment, read_config_file
from .diagnostics import (
    AuditReport,
    lipschitz_bestresponse_probe,
    rate_fit,
    sufficient_decrease_audit,
)
from .errors import (
    ConvergenceError,
    InvalidArgumentError,
    NumericalFailureError,
    PSCAError,
    UnsupportedOperationError,
)
from .lasso import as_problem, certify_kkt, generate_nesterov, load_instance, save_instance
from .scheduler import RandomizedSchedule, make_partition
from .solver import SerialRule, SolverConfig, psca_run, serial_bcd_run
from .stepsize import StepKind, StepSchedule, gamma_bar
from .surrogates import make_surrogate
from .traceio import read_trace_csv, write_trace_csv

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_AUDIT = 4
EXIT_IO = 5

COMPARE_GAPS = (1e-2, 1e-4, 1e-6)
TREND_SLACK = 0.10
# keys that must not influence trace contents or provenance headers
_RUNTIME_KEYS = ("workers", "output_dir", "name", "instance", "probe_trials", "probe_seed",
                 "burn_in")

logger = logging.getLogger("psca")


# ---------------------------------------------------------------------------
# Experiment assembly
# ---------------------------------------------------------------------------


def load_or_generate(cfg):
    """The instance at ``cfg.instance`` or a fresh one from the generation keys."""
    if cfg.instance:
        return load_instance(cfg.instance)
    return generate_nesterov(cfg.rows, cfg.cols, cfg.sparsity, cfg.lam, cfg.instance_seed,
                             cfg.method, cfg.density)


class Experiment:
    """Problem, surrogate, schedule and step rule resolved from a config."""

    def __init__(self, cfg, inst, alpha=None):
        self.cfg = cfg
        self.inst = inst
        self.problem = as_problem(inst, cfg.block_size)
        p = self.problem
        self.l_grad_f = p.lipschitz_grad_hint
        if alpha is None:
            alpha = cfg.alpha
        if alpha is None:
            basis = self.l_grad_f if cfg.alpha_basis == "lipschitz" else float(np.max(p.smooth.colsq))
            alpha = cfg.alpha_factor * basis
        self.spec = make_surrogate(p, cfg.surrogate, alpha)
        self.gbar = None
        if self.spec.l_tilde:
            self.gbar = gamma_bar(self.spec.tau, self.l_grad_f, self.spec.l_tilde, p.n)
        self.group_size = min(cfg.resolved_group_size(), p.n)
        self.probability = cfg.probability or min(1.0, self.group_size / p.n)
        if cfg.rule == "cyclic":
            shuffle = None if cfg.shuffle_seed < 0 else cfg.shuffle_seed
            self.schedule = make_partition(p.n, self.group_size, shuffle)
        else:
            self.schedule = RandomizedSchedule.uniform(p.n, self.probability, cfg.seed)
        kind = StepKind(cfg.step)
        gamma0 = cfg.gamma0.resolve(self.gbar)
        if kind is StepKind.CONSTANT:
            self.steps = StepSchedule.constant(gamma0)
        elif kind is StepKind.DIMINISHING:
            self.steps = StepSchedule(kind, gamma0, cfg.eta)
        else:
            self.steps = StepSchedule(kind, gamma0, cfg.eta, cfg.floor.resolve(self.gbar))

    def solver_config(self):
        c = self.cfg
        return SolverConfig(
            schedule=self.schedule, steps=self.steps, surrogate=self.spec, workers=c.workers,
            max_iters=c.max_iters, stop_tol=c.stop_tol, record_every=c.record_every,
            inner_tol=c.inner_tol, seed=c.seed, check_gate=c.check_gate,
        )

    def run(self):
        sc = self.solver_config()
        algo = self.cfg.algorithm
        if algo == "psca":
            return psca_run(self.problem, sc)
        rule = SerialRule.CYCLIC_EXACT if algo == "serial-cyclic" else SerialRule.RANDOMIZED_EXACT
        return serial_bcd_run(self.problem, sc, rule)

    def provenance(self):
        """Header pairs: everything that determines the trace, nothing that does not."""
        items = [("instance", self.inst.instance_hash)]
        # generation keys describe the instance actually solved, even when it was loaded
        inst = self.inst
        actual = {"rows": inst.shape[0], "cols": inst.shape[1], "sparsity": repr(inst.sparsity),
                  "lam": repr(inst.lam), "instance_seed": inst.seed, "method": inst.method,
                  "density": repr(inst.density)}
        items += [(k, actual.get(k, v)) for k, v in self.cfg.to_items(exclude=_RUNTIME_KEYS)]
        items += [
            ("alpha_resolved", repr(self.spec.alpha)),
            ("tau", repr(self.spec.tau)),
            ("l_tilde", repr(self.spec.l_tilde)),
            ("l_grad_f", repr(self.l_grad_f)),
            ("gamma_bar", repr(self.gbar)),
            ("gamma0_resolved", repr(self.steps.gamma0)),
            ("group_size_resolved", self.group_size),
            ("probability_resolved", repr(self.probability)),
            ("h_star", repr(self.inst.h_star)),
        ]
        return items


def _monotone_violations(h, rel_tol=1e-9):
    h = np.asarray(h)
    return int(np.sum(h[1:] > h[:-1] + rel_tol * (1.0 + np.abs(h[:-1]))))


def _write_kv(path, pairs):
    with open(path, "w", encoding="utf-8") as fh:
        for k, v in pairs:
            fh.write(f"{k}={v}\n")


def _out(cfg, suffix):
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, cfg.name + suffix)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_generate(cfg, stdout=sys.stdout):
    inst = generate_nesterov(cfg.rows, cfg.cols, cfg.sparsity, cfg.lam, cfg.instance_seed,
                             cfg.method, cfg.density)
    path = cfg.instance or _out(cfg, ".inst")
    save_instance(inst, path)
    print(f"instance: {path}", file=stdout)
    print(f"shape: {inst.shape[0]}x{inst.shape[1]} ({inst.storage})", file=stdout)
    print(f"support_size: {inst.support_size}", file=stdout)
    print(f"h_star: {inst.h_star!r}", file=stdout)
    print(f"kkt_residual: {certify_kkt(inst, inst.x_star)!r}", file=stdout)
    return EXIT_OK


def cmd_solve(cfg, stdout=sys.stdout):
    inst = load_or_generate(cfg)
    exp = Experiment(cfg, inst)
    trace = exp.run()
    csv_path = _out(cfg, ".csv")
    write_trace_csv(csv_path, trace, inst.h_star, exp.provenance())
    h = trace.objectives()
    if cfg.algorithm == "psca":
        violations = len(sufficient_decrease_audit(trace, exp.spec.tau, exp.l_grad_f))
    else:
        violations = _monotone_violations(h)
    gap = trace.final_objective - inst.h_star
    summary = [
        ("instance", inst.instance_hash),
        ("algorithm", cfg.algorithm),
        ("termination", trace.termination.value),
        ("iterations", trace.iterations),
        ("final_objective", repr(trace.final_objective)),
        ("h_star", repr(inst.h_star)),
        ("final_gap", repr(gap)),
        ("final_prox_grad_norm", repr(trace.final_prox_grad_norm)),
        ("decrease_violations", violations),
        ("alpha", repr(exp.spec.alpha)),
        ("gamma_bar", repr(exp.gbar)),
        ("gamma0", repr(exp.steps.gamma0)),
        ("group_size", exp.group_size),
        ("workers", cfg.workers),
        ("wall_clock_ns", trace.records[-1].wall_clock_ns if trace.records else 0),
        ("trace", csv_path),
    ]
    _write_kv(_out(cfg, ".summary"), summary)
    print(f"{cfg.algorithm}: {trace.termination.value} after {trace.iterations} iterations, "
          f"gap {gap:.3e}, decrease violations {violations}", file=stdout)
    return EXIT_OK


def _first_hit(gaps, eps):
    hit = np.flatnonzero(gaps <= eps)
    return int(hit[0]) if hit.size else None


def compare_traces(tables):
    """Rows of ``(label, [(iterations, coordinate updates) or None per gap])``."""
    if len(tables) < 2:
        raise InvalidArgumentError("compare needs at least two traces")
    hashes = {t.instance_hash for t in tables}
    if len(hashes) != 1:
        raise InvalidArgumentError("traces were produced on different instances")
    rows = []
    for t in tables:
        if np.all(np.isnan(t.gap)):
            raise InvalidArgumentError(f"{t.path}: trace has no gap column")
        updates = np.concatenate(([0], np.cumsum(np.nan_to_num(t.selected[:-1]))))
        cells = []
        for eps in COMPARE_GAPS:
            k = _first_hit(t.gap, eps)
            cells.append(None if k is None else (int(t.r[k]), int(updates[k])))
        rows.append((os.path.splitext(os.path.basename(t.path))[0], cells))
    return rows


def trend_flags(rows, slack=TREND_SLACK):
    """Per gap: ``True`` if iteration counts never rise by more than ``slack`` down the rows."""
    flags = []
    for j in range(len(COMPARE_GAPS)):
        its = [cells[j][0] for _, cells in rows if cells[j] is not None]
        ok = all(b <= a * (1 + slack) for a, b in zip(its, its[1:]))
        flags.append(ok)
    return flags


def cmd_compare(paths, output_dir=None, name="compare", stdout=sys.stdout):
    tables = [read_trace_csv(p) for p in paths]
    rows = compare_traces(tables)
    flags = trend_flags(rows)
    head = ["trace"]
    for eps in COMPARE_GAPS:
        head += [f"iters@{eps:g}", f"updates@{eps:g}"]
    body = []
    for label, cells in rows:
        line = [label]
        for c in cells:
            line += ["unreached", "unreached"] if c is None else [str(c[0]), str(c[1])]
        body.append(line)
    widths = [max(len(r[k]) for r in [head] + body) for k in range(len(head))]
    text = io.StringIO()
    for r in [head] + body:
        text.write("  ".join(v.rjust(w) for v, w in zip(r, widths)).rstrip() + "\n")
    for eps, ok in zip(COMPARE_GAPS, flags):
        text.write(f"trend@{eps:g}: {'ok' if ok else 'FLAGGED (iterations rise > 10%)'}\n")
    print(text.getvalue(), end="", file=stdout)
    if output_dir is not None:
        os.makedirs(output_dir, exist_ok=True)
        with open(os.path.join(output_dir, f"{name}.txt"), "w", encoding="utf-8") as fh:
            fh.write(text.getvalue())
        with open(os.path.join(output_dir, f"{name}.csv"), "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(head)
            w.writerows(body)
    return EXIT_OK


def _quartile_trend(gaps, slack=TREND_SLACK):
    r = np.arange(gaps.size)
    q = gaps.size // 4
    if q < 1:
        return True, float("nan"), float("nan")
    second = float(np.max(r[q:2 * q] * gaps[q:2 * q]))
    last = float(np.max(r[3 * q:] * gaps[3 * q:]))
    return last <= second * (1 + slack), second, last


def run_audit(table, cfg, inst):
    """Audit a CSV trace against its instance; returns an :class:`AuditReport`."""
    if table.instance_hash != inst.instance_hash:
        raise InvalidArgumentError("trace and instance do not match (instance hash differs)")
    meta = table.meta
    alpha = float(meta["alpha_resolved"]) if "alpha_resolved" in meta else None
    fixed = [(k, meta[k]) for k in ("surrogate", "block_size") if k in meta]
    if fixed:
        cfg = build_config(list(_cfg_pairs(cfg)) + fixed)
    exp = Experiment(cfg, inst, alpha=alpha)
    report = AuditReport()
    algo = meta.get("algorithm", "psca")

    try:
        if algo == "psca":
            viol = sufficient_decrease_audit(table, exp.spec.tau, exp.l_grad_f)
            report.add("sufficient_decrease", not viol, violations=len(viol),
                       first_violation=viol[0].r if viol else None)
        else:
            n_bad = _monotone_violations(table.objectives())
            report.add("sufficient_decrease", n_bad == 0, violations=n_bad)
    except PSCAError as exc:
        report.add("sufficient_decrease", False, error=str(exc))

    try:
        ratio = lipschitz_bestresponse_probe(exp.problem, exp.spec, cfg.probe_trials, cfg.probe_seed)
        bound = math.sqrt(exp.problem.n) * exp.spec.l_tilde / exp.spec.tau
        report.add("lipschitz_probe", ratio <= bound + 1e-6, max_ratio=ratio, bound=bound,
                   trials=cfg.probe_trials)
    except (PSCAError, TypeError) as exc:
        report.add("lipschitz_probe", False, error=str(exc))

    try:
        # a cyclic trace is only comparable across full sweeps of the partition
        stride = 1
        if meta.get("rule") == "cyclic" and algo == "psca":
            stride = -(-exp.problem.n // int(meta.get("group_size_resolved", exp.group_size)))
        fit = rate_fit(table, inst.h_star, cfg.burn_in, stride=stride)
        ok, second, last = _quartile_trend(fit.gaps[::stride])
        details = {"c_fit": fit.c_fit, "second_quartile_max": second, "last_quartile_max": last}
        for eps, t in fit.t_epsilon_table:
            details[f"t_eps_{eps:g}"] = "unreached" if t is None else t
        report.add("rate_fit", ok and math.isfinite(fit.c_fit), **details)
    except PSCAError as exc:
        report.add("rate_fit", False, error=str(exc))

    report.constants = {
        "n": exp.problem.n,
        "l_grad_f": exp.l_grad_f,
        "alpha": exp.spec.alpha,
        "tau": exp.spec.tau,
        "l_tilde": exp.spec.l_tilde,
        "l_max": exp.spec.l_max,
        "gamma_bar": exp.gbar,
        "h0": float(table.objective[0]),
        "h_star": inst.h_star,
    }
    return report


def _cfg_pairs(cfg):
    for k, v in cfg.to_items():
        if k == "alpha" and v == "auto":
            continue
        yield k, v


def cmd_audit(cfg, trace_path, stdout=sys.stdout):
    if not cfg.instance:
        raise InvalidArgumentError("audit needs instance=<path>")
    table = read_trace_csv(trace_path)
    inst = load_instance(cfg.instance)
    report = run_audit(table, cfg, inst)
    with open(_out(cfg, ".audit.txt"), "w", encoding="utf-8") as fh:
        fh.write(report.to_text())
    with open(_out(cfg, ".audit.summary"), "w", encoding="utf-8") as fh:
        fh.write(report.to_summary())
    print(report.to_text(), end="", file=stdout)
    return EXIT_OK if report.passed else EXIT_AUDIT


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


class _Assign(argparse.Action):
    """Collect ``(key, value)`` pairs in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        seq = list(getattr(namespace, "assign", None) or [])
        if self.dest == "config":
            seq.extend(read_config_file(values))
        elif self.dest == "set":
            seq.append(parse_assignment(values))
        else:
            seq.append((self.dest, values))
        namespace.assign = seq


def _add_config_args(p):
    p.add_argument("--config", action=_Assign, metavar="FILE", help="key=value config file")
    p.add_argument("--set", action=_Assign, metavar="KEY=VALUE", help="override one key")
    for key in CONFIG_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, action=_Assign, metavar="V",
                       default=argparse.SUPPRESS)
    for alias, key in ALIASES.items():
        p.add_argument(f"--{alias}", dest=key, action=_Assign, metavar="V",
                       default=argparse.SUPPRESS, help=f"alias of --{key.replace('_', '-')}")
    p.set_defaults(assign=[])


def build_parser():
    parser = argparse.ArgumentParser(prog="psca", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("generate", "write a certified Lasso instance"),
                        ("solve", "run PSCA or a serial baseline and write a CSV trace")):
        _add_config_args(sub.add_parser(name, help=help_))
    pa = sub.add_parser("audit", help="check a trace against the convergence theory")
    pa.add_argument("trace", help="trace CSV written by solve")
    _add_config_args(pa)
    pc = sub.add_parser("compare", help="iterations to reach fixed gaps, per trace")
    pc.add_argument("traces", nargs="+")
    pc.add_argument("--output-dir", default=None)
    pc.add_argument("--name", default="compare")
    return parser


def main(argv=None, stdout=None):
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    except (InvalidArgumentError, OSError) as exc:
        print(f"psca: error: {exc}", file=sys.stderr)
        return EXIT_IO if isinstance(exc, OSError) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "compare":
            out = args.output_dir or os.environ.get("PSCA_OUTPUT_DIR")
            return cmd_compare(args.traces, out, args.name, stdout)
        cfg = build_config(args.assign)
        if args.command == "generate":
            return cmd_generate(cfg, stdout)
        if args.command == "solve":
            return cmd_solve(cfg, stdout)
        return cmd_audit(cfg, args.trace, stdout)
    except (NumericalFailureError, ConvergenceError) as exc:
        print(f"psca: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (InvalidArgumentError, UnsupportedOperationError) as exc:
        print(f"psca: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"psca: I/O error: {exc.filename or ''}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
