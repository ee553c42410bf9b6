"""Command-line front end.

Every subcommand takes ``--config PATH`` (a JSON file or ``fixture:amp`` /
``fixture:iso``), an optional ``--out PATH`` for CSV output and
``--format csv``.  Text reports go to stdout; CSV goes to ``--out`` or, when
that is omitted, to stdout after the report.  Exit codes: 0 success,
2 configuration or input-file problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from optoamp import measurement as meas
from optoamp.config import load_config
from optoamp.errors import ConfigurationError, OptoampError
from optoamp.fitting import S_NAMES, FitParams, FitProblem, fit, model_db
from optoamp.model import TWO_PI, detuning_from_lab, sweep
from optoamp.nonrwa import corrected_sweep
from optoamp.oracle import oracle_deviation
from optoamp.workpoint import (
    gain_at_instability_db,
    impedance_matching_delta,
    isolation_phase,
    isolation_point,
    matched_gain_db,
    nominal_delta,
    phase_sweep,
    stability_check,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

logger = logging.getLogger("optoamp")


class _ExitError(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(args, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="utf-8")
    else:
        sys.stdout.write(buf.getvalue())


def _report(lines):
    for key, value in lines:
        print(f"{key}: {value}")


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q


def _pole_lines(report):
    return [(f"pole {k}", f"{p.real / TWO_PI:+.6f} {p.imag / TWO_PI:+.6f}j Hz")
            for k, p in enumerate(report.poles, start=1)]


# ---------------------------------------------------------------------------
# commands


def cmd_sweep(args, cfg, base):
    if cfg.sweep is None:
        raise ConfigurationError("sweep section missing", field="sweep")
    if args.nonrwa and args.oracle_check:
        raise ConfigurationError("--oracle-check applies to the RWA model only")
    model = cfg.build_model(require_g0=args.nonrwa)
    st = stability_check(model)
    if not st.stable:
        _report([("status", "unstable")] + _pole_lines(st))
        raise _ExitError(EXIT_NUMERIC, "model is unstable")
    sp = cfg.sweep
    f = np.linspace(sp.start_hz, sp.stop_hz, sp.points)
    omega = TWO_PI * f if sp.frame == "rotating" else detuning_from_lab(f, cfg.device.cavities[0].f_hz)
    sw = corrected_sweep(model, omega) if args.nonrwa else sweep(model, omega)
    header = ["freq_hz"] + [f"{n}_db" for n in S_NAMES] + [f"{n}_phase_rad" for n in S_NAMES]
    cols = [f] + [sw.db(n) for n in S_NAMES] + [np.angle(getattr(sw, n)) for n in S_NAMES]
    if args.oracle_check:
        header.append("oracle_dev")
        cols.append(oracle_deviation(model, omega))
    _write_csv(args, header, zip(*cols))
    return EXIT_OK


def cmd_workpoint(args, cfg, base):
    model = cfg.build_model()
    g1, g2 = (m.gamma for m in model.mechs)
    delta = args.delta
    if delta is None and cfg.workpoint is not None:
        delta = cfg.workpoint.delta
    lines = []
    if delta is None:
        r1, r2 = (c.r for c in model.cavities)
        C1 = 0.5 * (model.cooperativity(1, 1, "red") + model.cooperativity(1, 2, "red"))
        C2 = 0.5 * (model.cooperativity(2, 1, "blue") + model.cooperativity(2, 2, "blue"))
        m = impedance_matching_delta(C1, r1)
        lines += [("C1", f"{C1:.6g}"), ("C2", f"{C2:.6g}"), ("r1", f"{r1:.6g}"), ("r2", f"{r2:.6g}"),
                  ("matching", "feasible" if m.feasible else "infeasible")]
        if not m.feasible:
            _report(lines)
            return EXIT_OK
        delta = m.delta
        lines.append(("match_residual", f"{m.residual:.3e}"))
        try:
            lines.append(("matched_gain_db", f"{matched_gain_db(C1, C2, r1, r2):.6g}"))
        except OptoampError as exc:
            lines.append(("matched_gain_db", f"undefined ({exc})"))
        if 0.5 < r1 < 1:
            lines.append(("gain_at_instability_db", f"{gain_at_instability_db(r1, r2):.6g}"))
    wp = isolation_point(g1, g2, delta)
    lines = [("delta", f"{wp.delta:.12g}"), ("delta1_hz", f"{wp.delta1 / TWO_PI:.12g}"),
             ("delta2_hz", f"{wp.delta2 / TWO_PI:.12g}"),
             ("Phi_rad", f"{wp.Phi:.15g}"), ("Phi_over_pi", f"{wp.Phi / np.pi:.12g}")] + lines
    _report(lines)
    return EXIT_OK


def cmd_phases(args, cfg, base):
    model = cfg.build_model()
    ps = cfg.phases
    start, stop, n = (-np.pi, np.pi, 181) if ps is None else (ps.start_rad, ps.stop_rad, ps.points)
    phis = np.linspace(start, stop, n)
    center = None if ps is None or ps.center_hz is None else TWO_PI * ps.center_hz
    res = phase_sweep(model, phis, center)
    k = int(np.argmin(np.abs(res.s12)))
    _report([("center_hz", f"{res.center / TWO_PI:.9g}"),
             ("isolation_Phi_rad", f"{isolation_phase(nominal_delta(model)):.9g}"),
             ("argmin_s12_Phi_rad", f"{phis[k]:.9g}"),
             ("min_s12_db", f"{res.s12_db[k]:.6g}")])
    _write_csv(args, ["phi_rad", "s12_db", "s21_db"], zip(phis, res.s12_db, res.s21_db))
    return EXIT_OK


def cmd_stability(args, cfg, base):
    model = cfg.build_model()
    st = stability_check(model)
    _report([("status", "stable" if st.stable else "unstable"),
             ("margin_hz", f"{st.margin / TWO_PI:.6f}"), ("poles", str(len(st.poles)))]
            + _pole_lines(st))
    if args.out:
        _write_csv(args, ["re_hz", "im_hz"], ((p.real / TWO_PI, p.imag / TWO_PI) for p in st.poles))
    return EXIT_OK


def _drive_value(cfg, key, attr, default=0.0):
    for d in cfg.drives:
        if (d.cavity, d.mech, d.sideband) == key:
            return getattr(d, attr)
    return default


def cmd_fit(args, cfg, base):
    if cfg.fit is None:
        raise ConfigurationError("fit section missing", field="fit")
    model = cfg.build_model()
    data = {}
    for name in S_NAMES:
        if name not in cfg.fit.data:
            raise ConfigurationError(f"fit data for {name} missing", field=f"fit.data.{name}")
        f, p = meas.read_trace_csv(_resolve(base, cfg.fit.data[name]))
        if np.iscomplexobj(p):
            p = np.abs(p) ** 2
        data[name] = (TWO_PI * f, 10.0 * np.log10(p))
    problem = FitProblem(model.cavities, model.mechs, data, cfg.fit.fit_offsets, cfg.fit.fit_background)
    keys = [(1, 1, "red"), (1, 2, "red"), (2, 1, "blue"), (2, 2, "blue")]
    C = [_drive_value(cfg, k, "cooperativity") for k in keys]
    init = FitParams(*C, model.detuning(1), model.detuning(2), model.Phi)
    res = fit(problem, init, restarts=cfg.fit.restarts, seed=cfg.fit.seed)
    p = res.params
    _report([("converged", str(res.converged)), ("status", str(res.status)), ("nfev", str(res.nfev)),
             ("objective", f"{res.objective:.9g}")]
            + [(k, f"{getattr(p, k):.9g}") for k in ("C11", "C12", "C21", "C22")]
            + [("delta1_hz", f"{p.delta1 / TWO_PI:.9g}"), ("delta2_hz", f"{p.delta2 / TWO_PI:.9g}"),
               ("Phi_rad", f"{p.Phi:.9g}")]
            + [(f"rms_{n}_db", f"{res.rms_db[n]:.6g}") for n in S_NAMES]
            + [("singular_points", str(res.singular_points))])
    mdb = model_db(p, problem)
    rows = []
    for n in S_NAMES:
        w, d = problem.datasets[n]
        rows += [(n, wk / TWO_PI, dk, mk) for wk, dk, mk in zip(w, d, mdb[n])]
    _write_csv(args, ["trace", "freq_hz", "data_db", "model_db"], rows)
    return EXIT_OK


def _load_raw(base, spec, name):
    f, s = meas.read_trace_csv(_resolve(base, spec.path))
    noise = None
    if spec.noise_path is not None:
        fn, pn = meas.read_trace_csv(_resolve(base, spec.noise_path))
        if fn.shape != f.shape or not np.allclose(fn, f):
            raise ConfigurationError("noise spectrum grid differs from trace grid", field=name)
        noise = np.abs(pn) ** 2 if np.iscomplexobj(pn) else pn
    src, rcv = meas.S_BANDS.get(name, ("cav1", "cav1"))
    return meas.RawSweep(f, s, src, rcv, spec.bw_hz, spec.rbw_hz, noise, spec.p_out)


def cmd_calibrate(args, cfg, base):
    cal = cfg.calibrate
    if cal is None:
        raise ConfigurationError("calibrate section missing", field="calibrate")
    if cal.imbalance_db is not None:
        imb = meas.Imbalance(cal.imbalance_db, 0.0, 0)
    else:
        s12 = meas.subtract_noise(_load_raw(base, cal.imbalance_s12, "s12"))
        s21 = meas.subtract_noise(_load_raw(base, cal.imbalance_s21, "s21"))
        imb = meas.estimate_imbalance(s12.power, s21.power, floor_db=cal.floor_db)
    gains = meas.calibrate_gains(cal.g11_db, cal.g22_db, imb)
    _report([("g11_db", f"{gains.g11_db:.10g}"), ("g22_db", f"{gains.g22_db:.10g}"),
             ("imbalance_db", f"{imb.value_db:.10g}"), ("imbalance_unc_db", f"{imb.uncertainty_db:.3g}"),
             ("g12_db", f"{gains.g12_db:.10g}"), ("g21_db", f"{gains.g21_db:.10g}")])
    if cal.traces:
        corrected = {n: meas.subtract_noise(_load_raw(base, spec, n)) for n, spec in cal.traces.items()}
        out = meas.apply_calibration(corrected, gains)
        rows = []
        for n in S_NAMES:
            if n in out:
                rows += [(n, f, v, str(int(c))) for f, v, c in zip(out[n].freq_hz, out[n].db, out[n].clamped)]
        _write_csv(args, ["trace", "freq_hz", "value_db", "clamped"], rows)
    return EXIT_OK


COMMANDS = {
    "sweep": cmd_sweep,
    "workpoint": cmd_workpoint,
    "phases": cmd_phases,
    "stability": cmd_stability,
    "fit": cmd_fit,
    "calibrate": cmd_calibrate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="optoamp", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log diagnostics to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "sweep": "S-parameters versus probe frequency",
        "workpoint": "isolation / impedance-matching working point",
        "phases": "backward and forward transmission versus loop phase",
        "stability": "poles of the linear response",
        "fit": "fit the model to four measured traces",
        "calibrate": "noise subtraction and line-gain calibration",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="JSON config path or fixture:amp / fixture:iso")
        p.add_argument("--out", help="CSV output path (default: stdout)")
        p.add_argument("--format", choices=["csv"], default="csv")
        if name == "sweep":
            p.add_argument("--nonrwa", action="store_true", help="include first-order beyond-RWA corrections")
            p.add_argument("--oracle-check", action="store_true",
                           help="append the deviation from the direct 8x8 solve")
        if name == "workpoint":
            p.add_argument("--delta", type=float, help="dimensionless detuning; overrides the config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg, base = load_config(args.config)
        return COMMANDS[args.command](args, cfg, base)
    except _ExitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigurationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OptoampError as exc:
        print(f"error: {exc}", file=sys.stderr)
        with contextlib.suppress(Exception):
            st = stability_check(cfg.build_model())
            if not st.stable:
                _report([("status", "unstable")] + _pole_lines(st))
        return EXIT_NUMERIC
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
