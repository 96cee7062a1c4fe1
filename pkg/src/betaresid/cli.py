"""Command-line interface.

Commands
--------
fit
    Coefficient table, precision, log-likelihood, pseudo R2 and convergence.
residuals
    Per-observation responses, fitted values and residuals.
envelope
    Half-normal plot data with simulated envelope, plus an SVG rendering.
simulate
    Monte Carlo study of a built-in scenario.

Every command writes into the ``--output`` directory.  Exit codes: 0 on
success, 1 for invalid input, 2 for convergence or study failures and 3
for internal numerical errors.  Errors are reported on stderr as one line
of JSON.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys

import numpy as np

from .envelope import half_normal_envelope, residual_vs_predictor
from .errors import ConvergenceError, InputError, NumericalError, UndefinedStatisticError
from .fit import Dataset, FitOptions, coef_report, fit_mle, hat_diagnostics, pseudo_r2
from .residuals import KINDS, quantile_residual, swr1, swr2
from .rng import DEFAULT_SEED
from .simstudy import SCENARIOS, builtin_scenario, run_study

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


def fmt(x) -> str:
    """17 significant digits, so values round-trip exactly."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    x = float(x)
    if math.isnan(x):
        return "nan"
    return "%.17g" % x


def parse_dataset(csv_text: str, response: str = "y") -> Dataset:
    """Dataset from CSV text with a header row.

    The column named ``response`` is the response; every other column is a
    numeric covariate and an intercept column is prepended.
    """
    rows = [r for r in csv.reader(io.StringIO(csv_text)) if any(c.strip() for c in r)]
    if not rows:
        raise InputError("input is empty")
    header = [h.strip() for h in rows[0]]
    if all(_is_number(h) for h in header):
        raise InputError("missing header row")
    if response not in header:
        raise InputError(f"response column {response!r} not found in header {header}")
    if len(set(header)) != len(header):
        raise InputError("duplicate column names in header")
    body = rows[1:]
    if not body:
        raise InputError("no data rows")
    values = np.empty((len(body), len(header)))
    for i, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise InputError(f"row {i}: expected {len(header)} fields, found {len(row)}")
        for j, cell in enumerate(row):
            try:
                v = float(cell)
            except ValueError:
                raise InputError(
                    f"row {i}, column {header[j]!r}: non-numeric value {cell.strip()!r}") from None
            if not math.isfinite(v):
                raise InputError(f"row {i}, column {header[j]!r}: non-finite value {cell.strip()!r}")
            values[i - 1, j] = v
    r = header.index(response)
    y = values[:, r]
    for i, v in enumerate(y, start=1):
        if not 0.0 < v < 1.0:
            raise InputError(f"row {i}: response {float(v)!r} is outside the open interval (0, 1)")
    cov = [j for j in range(len(header)) if j != r]
    X = np.column_stack([np.ones(len(body))] + [values[:, j] for j in cov])
    names = ("(Intercept)",) + tuple(header[j] for j in cov)
    return Dataset(y, X, names=names, response_name=response)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


# ----------------------------------------------------------------- output

def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    def clean(o):
        if isinstance(o, dict):
            return {k: clean(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [clean(v) for v in o]
        if isinstance(o, (bool, np.bool_)):
            return bool(o)
        if isinstance(o, (int, np.integer)):
            return int(o)
        if isinstance(o, (float, np.floating)):
            return None if math.isnan(o) else float(o)
        return o
    return json.dumps(clean(obj), indent=2, sort_keys=True) + "\n"


def _emit_table(out_dir, stem, header, rows, fmt_name):
    if fmt_name == "json":
        records = [dict(zip(header, row)) for row in rows]
        path = os.path.join(out_dir, stem + ".json")
        _write(path, _json_text(records))
    else:
        path = os.path.join(out_dir, stem + ".csv")
        _write(path, _csv_text(header, rows))
    return path


def envelope_svg(env, title="") -> str:
    """Minimal SVG of a half-normal plot with envelope and a zero line."""
    width, height, pad = 480, 360, 40
    x = env.expected_halfnormal
    ys = np.concatenate([env.abs_residuals_sorted, env.lower, env.upper])
    x_max = float(x.max()) * 1.05 or 1.0
    y_max = float(ys.max()) * 1.05 or 1.0

    def px(v):
        return pad + (width - 2 * pad) * v / x_max

    def py(v):
        return height - pad - (height - 2 * pad) * v / y_max

    def line(values):
        return " ".join(f"{px(a):.3f},{py(b):.3f}" for a, b in zip(x, values))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{px(0):.3f}" y1="{py(0):.3f}" x2="{px(x_max):.3f}" y2="{py(0):.3f}" '
        'stroke="gray" stroke-dasharray="4 3"/>',
        f'<polyline points="{line(env.lower)}" fill="none" stroke="black"/>',
        f'<polyline points="{line(env.upper)}" fill="none" stroke="black"/>',
    ]
    for a, b in zip(x, env.abs_residuals_sorted):
        parts.append(f'<circle cx="{px(a):.3f}" cy="{py(b):.3f}" r="2.5" fill="none" stroke="blue"/>')
    parts.append(f'<text x="{pad}" y="20" font-size="12">{title}</text>')
    parts.append(f'<text x="{width / 2:.0f}" y="{height - 8}" font-size="11" '
                 'text-anchor="middle">expected half-normal quantile</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# --------------------------------------------------------------- commands

def _load(cfg) -> Dataset:
    if not cfg.input:
        raise InputError("--input is required for this command")
    try:
        with open(cfg.input, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {cfg.input}: {exc.strerror}") from None
    return parse_dataset(text, cfg.response)


def _out_dir(cfg):
    os.makedirs(cfg.output, exist_ok=True)
    return cfg.output


def cmd_fit(cfg) -> int:
    d = _load(cfg)
    m = fit_mle(d, cfg.link)
    try:
        r2 = pseudo_r2(m, d)
    except UndefinedStatisticError:
        r2 = float("nan")
    out = _out_dir(cfg)
    coef_rows = [(c.name, c.estimate, c.std_error, c.exp_estimate) for c in coef_report(m)]
    summary = {
        "link": m.link.name, "n": d.n, "k": d.k, "phi": m.phi_hat, "loglik": m.loglik,
        "pseudo_r2": r2, "converged": m.converged, "iterations": m.iterations,
        "gradient_norm": m.gradient_norm, "stop_reason": m.stop_reason,
        "se_note": m.se_message,
    }
    header = ["term", "estimate", "std_error", "exp_estimate"]
    if cfg.format == "json":
        summary["coefficients"] = [dict(zip(header, r)) for r in coef_rows]
        _write(os.path.join(out, "fit.json"), _json_text(summary))
    else:
        _write(os.path.join(out, "coefficients.csv"), _csv_text(header, coef_rows))
        _write(os.path.join(out, "fit_summary.csv"),
               _csv_text(["key", "value"], [(k, str(v) if isinstance(v, (bool, str)) else v)
                                            for k, v in summary.items()]))
    print(f"{'term':<16}{'estimate':>12}{'std.error':>12}{'exp(est)':>12}")
    for name, est, se, ex in coef_rows:
        print(f"{name:<16}{est:12.4f}{se:12.4f}{ex:12.4f}")
    print(f"phi {m.phi_hat:.4f}  loglik {m.loglik:.4f}  pseudo R2 {r2:.4f}  "
          f"converged {m.converged} ({m.stop_reason}, {m.iterations} iterations)")
    return EXIT_OK if m.converged else EXIT_CONVERGENCE


def _converged_fit(cfg):
    d = _load(cfg)
    m = fit_mle(d, cfg.link, FitOptions(compute_se=False))
    if not m.converged:
        raise ConvergenceError(f"fit did not converge ({m.stop_reason})")
    return d, m


def cmd_residuals(cfg) -> int:
    d, m = _converged_fit(cfg)
    cols = {}
    if "swr1" in cfg.kinds:
        cols["swr1"] = swr1(m, d).values
    if "swr2" in cfg.kinds:
        cols["swr2"] = swr2(m, d, hat_diagnostics(m, d)).values
    if "quantile" in cfg.kinds:
        cols["quantile"] = quantile_residual(m, d).values
    kinds = [k for k in KINDS if k in cols]
    header = ["i", "y", "mu_hat", "eta_hat"] + kinds
    rows = [[i + 1, d.y[i], m.mu_hat[i], m.eta_hat[i]] + [cols[k][i] for k in kinds]
            for i in range(d.n)]
    path = _emit_table(_out_dir(cfg), "residuals", header, rows, cfg.format)
    print(path)
    return EXIT_OK


def cmd_envelope(cfg) -> int:
    if cfg.sims < 1:
        raise InputError("--sims must be at least 1")
    d, m = _converged_fit(cfg)
    out = _out_dir(cfg)
    summary = []
    for kind in cfg.kinds:
        env = half_normal_envelope(m, d, kind, cfg.sims, cfg.seed, cfg.threads)
        _emit_table(out, f"envelope_{kind}",
                    ["rank", "expected_halfnormal", "abs_residual", "lower", "upper"],
                    env.rows(), cfg.format)
        rvp = residual_vs_predictor(m, d, kind)
        _emit_table(out, f"predictor_{kind}", ["i", "eta_hat", "residual"],
                    [(i + 1, e, r) for i, (e, r) in enumerate(rvp)], cfg.format)
        _write(os.path.join(out, f"envelope_{kind}.svg"),
               envelope_svg(env, f"{kind}: {env.points_outside} of {d.n} outside"))
        summary.append((kind, env.points_outside, env.n_sim, env.attempts, cfg.seed))
        print(f"{kind}: {env.points_outside} of {d.n} points outside the envelope")
    _emit_table(out, "envelope_summary",
                ["kind", "points_outside", "n_sim", "fits", "seed"], summary, cfg.format)
    return EXIT_OK


def cmd_simulate(cfg) -> int:
    if cfg.reps < 2:
        raise InputError("--reps must be at least 2")
    spec = builtin_scenario(cfg.scenario, cfg.phi, cfg.n, cfg.link, cfg.seed)
    s = run_study(spec, cfg.reps, cfg.kinds, cfg.threads)
    out = _out_dir(cfg)
    _emit_table(out, "simulate_per_observation", s.header(), s.rows(), cfg.format)
    stats = ["mean", "sd", "min", "q1", "q2", "q3", "max"]
    _emit_table(out, "simulate_ad_summary", ["kind"] + stats,
                [[k] + [s.ad_table[k][c] for c in stats] for k in s.kinds], cfg.format)
    meta = {
        "scenario": spec.id, "link": spec.link.name, "beta": list(spec.beta),
        "reference_beta": list(spec.reference_beta) if spec.reference_beta else None,
        "phi": spec.phi, "n": spec.n, "reps": cfg.reps, "seed": spec.master_seed,
        "covariate_rule": spec.covariate_rule, "exp_mean": spec.exp_mean,
        "design_sha256": s.design_hash, "redraws": s.redraws, "kinds": list(s.kinds),
    }
    _write(os.path.join(out, "simulate_metadata.json"), _json_text(meta))
    for k in s.kinds:
        print(f"{k}: mean AD {s.ad_table[k]['mean']:.2f}")
    return EXIT_OK


COMMANDS = {"fit": cmd_fit, "residuals": cmd_residuals,
            "envelope": cmd_envelope, "simulate": cmd_simulate}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kinds(text):
    kinds = tuple(k.strip() for k in text.split(",") if k.strip())
    bad = [k for k in kinds if k not in KINDS]
    if bad or not kinds:
        raise argparse.ArgumentTypeError(f"kinds must be drawn from {','.join(KINDS)}")
    return kinds


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="betaresid", description="Beta regression residual diagnostics.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--input", help="CSV file with a header row")
    p.add_argument("--output", default=".", help="output directory (default: .)")
    p.add_argument("--response", default="y", help="response column (default: y)")
    p.add_argument("--link", choices=["logit", "cloglog"], default="logit")
    p.add_argument("--kinds", type=_kinds, default=KINDS,
                   help="comma-separated residual kinds (default: swr1,swr2,quantile)")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), default="I")
    p.add_argument("--phi", type=float, default=10.0)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--reps", type=int, default=5000)
    p.add_argument("--sims", type=int, default=100)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                   help=f"master seed (default: {DEFAULT_SEED})")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    return p


def _fail(code, kind, message) -> int:
    sys.stderr.write(json.dumps({"error": kind, "exit_code": code,
                                 "message": " ".join(str(message).split())}) + "\n")
    return code


def main(argv=None) -> int:
    try:
        cfg = build_parser().parse_args(argv)
        if cfg.threads < 1:
            raise InputError("--threads must be at least 1")
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        return _fail(EXIT_INPUT, "usage", exc)
    except ConvergenceError as exc:
        return _fail(EXIT_CONVERGENCE, "convergence", exc)
    except NumericalError as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)
    except (InputError, ValueError) as exc:
        return _fail(EXIT_INPUT, "input", exc)
    except OSError as exc:
        return _fail(EXIT_INPUT, "io", exc)
    except ArithmeticError as exc:
        return _fail(EXIT_NUMERICAL, "numerical", exc)


if __name__ == "__main__":
    sys.exit(main())
