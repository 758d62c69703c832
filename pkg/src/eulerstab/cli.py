"""Command line entry point ``eulerstab``.

Exit codes: 0 stable, 10 hyperbolically unstable, 11 spectrally stable but
linearly unstable, 12 undetermined, 2 configuration error, 3 collinear
class, 4 non-finite integration, 5 witness search exhausted.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from ._exact import is_exact
from .dynamics import (
    IntegrationError,
    class_trajectory,
    equilibrium_state,
    integrate_nonlinear,
    nilpotent_solution,
    random_state,
    transient_envelope,
)
from .lattice import ellipsoid_lattice_points, is_collinear
from .linearization import ShearFlowParams, TrivialClassError, assemble_class_operator
from .parametric import WitnessSearchError, approximability, parametric_witness
from .spectral import SpectrumReport, eigenvalues, flow_verdict
from .validation import (
    check_index_triple,
    check_positive_float,
    check_positive_int,
    check_triple,
)

EXIT_CODES = {
    "linearly_stable": 0,
    "hyperbolically_unstable": 10,
    "spectrally_stable_linearly_unstable": 11,
    "undetermined": 12,
}
EXIT_CONFIG, EXIT_COLLINEAR, EXIT_NAN, EXIT_EXHAUSTED = 2, 3, 4, 5
MODE_CAP = 8


class ConfigError(ValueError):
    pass


def _num_str(x) -> str:
    if is_exact(x):
        x = Fraction(x)
        return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"
    return repr(float(x))


def _fmt(x) -> str:
    return format(float(x), ".17g")


@dataclass
class RunConfig:
    p: tuple
    gamma: tuple
    kappa: tuple = (1, 1, 1)
    trunc: int = 30
    cutoff: int = 4
    tol: float = 1e-8
    qmax: int = 10**6
    box: int = 50
    jobs: int = 1
    out: Optional[str] = None
    format: str = "json"

    def flow(self) -> ShearFlowParams:
        try:
            return ShearFlowParams.from_indices(self.p, self.gamma, self.kappa)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def echo(self) -> dict:
        return {
            "p": list(self.p),
            "gamma": [_num_str(g) for g in self.gamma],
            "kappa": [_num_str(k) for k in self.kappa],
            "trunc": self.trunc,
            "cutoff": self.cutoff,
            "tol": self.tol,
            "qmax": self.qmax,
            "box": self.box,
            "jobs": self.jobs,
            "format": self.format,
        }


_FIELDS = {
    "p": ("flow", lambda v: check_index_triple(v, "p")),
    "gamma": ("flow", lambda v: check_triple(v, "gamma")),
    "kappa": ("flow", lambda v: check_triple(v, "kappa")),
    "trunc": ("numerics", lambda v: check_positive_int(v, "trunc")),
    "cutoff": ("numerics", lambda v: check_positive_int(v, "cutoff")),
    "tol": ("numerics", lambda v: check_positive_float(v, "tol")),
    "qmax": ("numerics", lambda v: check_positive_int(v, "qmax")),
    "box": ("numerics", lambda v: check_positive_int(v, "box")),
    "jobs": ("numerics", lambda v: check_positive_int(v, "jobs")),
    "out": ("output", str),
    "format": ("output", str),
}


def load_config(path: Optional[str], overrides: dict) -> RunConfig:
    """INI file (sections ``flow``, ``numerics``, ``output``) with flag overrides."""
    raw = {}
    if path:
        cp = configparser.ConfigParser()
        try:
            if not cp.read(path):
                raise ConfigError(f"config: cannot read {path}")
        except configparser.Error as exc:
            raise ConfigError(f"config: {exc}") from None
        for key, (section, _) in _FIELDS.items():
            if cp.has_option(section, key):
                raw[key] = cp.get(section, key)
        for section in cp.sections():
            for key in cp.options(section):
                if key not in _FIELDS:
                    raise ConfigError(f"config: unknown field [{section}] {key}")
    raw.update({k: v for k, v in overrides.items() if v is not None})
    vals = {}
    for key, value in raw.items():
        try:
            vals[key] = _FIELDS[key][1](value)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    for key in ("p", "gamma"):
        if key not in vals:
            raise ConfigError(f"{key}: missing (set [flow] {key} or --{key})")
    if vals.get("format", "json") not in ("json", "csv"):
        raise ConfigError("format: must be json or csv")
    cfg = RunConfig(**vals)
    cfg.flow()
    return cfg


@dataclass
class ReportBundle:
    verdict: dict
    per_class: list = field(default_factory=list)
    trajectories: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "per_class": [r.to_dict() for r in self.per_class],
            "trajectories": self.trajectories,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ReportBundle":
        return cls(
            verdict=d["verdict"],
            per_class=[SpectrumReport.from_dict(r) for r in d["per_class"]],
            trajectories=d.get("trajectories", []),
            provenance=d.get("provenance", {}),
        )

    @classmethod
    def from_json(cls, text: str) -> "ReportBundle":
        return cls.from_dict(json.loads(text))


def verdict_dict(v) -> dict:
    f = v.flow
    d = {
        "flow": {
            "p": list(f.p.index),
            "gamma": [_num_str(g) for g in f.gamma],
            "kappa": [_num_str(k) for k in f.scaling.kappa],
        },
        "verdict": v.verdict,
        "rule": v.rule,
        "witnesses": [{"a": list(a), "reason": r} for a, r in v.witnesses],
        "ellipsoid_census": v.ellipsoid_census,
        "rationality": v.rationality_status,
        "plane": None,
    }
    if v.plane is not None:
        d["plane"] = {
            "rank": v.plane.rank,
            "basis": [list(b) for b in v.plane.basis],
            "box": v.plane.box,
            "certified": v.plane.certified,
        }
    return d


def _provenance(cfg: RunConfig, started: float) -> dict:
    return {
        "config": cfg.echo(),
        "versions": {
            "eulerstab": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
        # the only field that varies between identical runs
        "timestamp": {
            "started": datetime.fromtimestamp(started, timezone.utc).isoformat(),
            "elapsed_s": round(time.time() - started, 3),
        },
    }


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_analyze(cfg: RunConfig, args) -> int:
    started = time.time()
    flow = cfg.flow()
    v = flow_verdict(flow, N=cfg.trunc, tol=cfg.tol, q_max=cfg.qmax, box=cfg.box, jobs=cfg.jobs)
    bundle = ReportBundle(verdict_dict(v), v.reports, [], _provenance(cfg, started))
    if cfg.format == "csv":
        rows = [[*r.a, r.classification, _fmt(r.max_real_part), _fmt(r.convergence_delta)] for r in v.reports]
        _emit(_csv_text(["a_x", "a_y", "a_z", "classification", "max_real_part", "convergence_delta"], rows), cfg.out)
    else:
        _emit(bundle.to_json(), cfg.out)
    print(f"verdict: {v.verdict} ({v.rule})", file=sys.stderr)
    return EXIT_CODES[v.verdict]


def _leader(flow: ShearFlowParams, a) -> tuple:
    if a is None:
        raise ConfigError("a: class leader required (--a x,y,z)")
    w = flow.wave(check_index_triple(a, "a"))
    if w.is_zero or is_collinear(w, flow.p):
        raise TrivialClassError(f"class leader {w.index} is collinear with p={flow.p.index}")
    return w.index


def cmd_spectrum(cfg: RunConfig, args) -> int:
    flow = cfg.flow()
    a = _leader(flow, args.a)
    params = flow.reduce(a)
    Ns = [check_positive_int(n, "trunc") for n in str(args.trunc_list or cfg.trunc).split(",")]
    for N in Ns:
        header = ["re", "im", "N", "form", "nilpotent", "tol"]
        if params.nilpotent:
            rows = [[_fmt(0.0), _fmt(0.0), N, "raw", 1, _fmt(cfg.tol)]]
        else:
            op = assemble_class_operator(params, N, "tilde_zero")
            ev = op.scale * eigenvalues(op.assembled)
            ev = ev[np.lexsort((ev.imag, ev.real))]
            rows = [[_fmt(z.real), _fmt(z.imag), N, "tilde_zero", 0, _fmt(cfg.tol)] for z in ev]
        out = cfg.out
        if out and len(Ns) > 1:
            path = Path(out)
            out = str(path.with_name(f"{path.stem}_N{N}{path.suffix or '.csv'}"))
        _emit(_csv_text(header, rows), out)
    return 0


def _slope(t: np.ndarray, y: np.ndarray) -> float:
    half = len(t) // 2
    return float(np.polyfit(t[half:], y[half:], 1)[0])


def cmd_simulate(cfg: RunConfig, args) -> int:
    flow = cfg.flow()
    t_end, dt = check_positive_float(args.t_end, "t-end"), check_positive_float(args.dt, "dt")
    mode = args.mode
    if mode == "nonlinear":
        st = equilibrium_state(flow, cfg.cutoff)
        if args.eps:
            st.omega = st.omega + random_state(cfg.cutoff, flow.scaling, seed=args.seed, amplitude=args.eps).omega
        every = max(1, int(round(args.sample / dt)))
        tr = integrate_nonlinear(st, t_end, dt, store_every=every)
        mags = [np.linalg.norm(s.reshape(-1, 3), axis=1) for s in tr.states]
        order = np.argsort(-mags[0], kind="stable")[:MODE_CAP]
        header = ["t", "norm"] + [f"mode_{i}" for i in order]
        rows = [[_fmt(t), _fmt(nm)] + [_fmt(m[i]) for i in order] for t, nm, m in zip(tr.times, tr.norms, mags)]
        _emit(_csv_text(header, rows), cfg.out)
        return 0
    a = _leader(flow, args.a)
    params = flow.reduce(a)
    N = cfg.trunc
    t = np.arange(0, t_end + 0.5 * args.sample, args.sample)
    if mode == "envelope":
        form = "raw"
        env = transient_envelope(assemble_class_operator(params, N, form), t)
        _emit(_csv_text(["t", "envelope"], [[_fmt(ti), _fmt(v)] for ti, v in zip(env.times, env.values)]), cfg.out)
        print(f"max envelope {env.max:.6g} at t={env.argmax:.6g}", file=sys.stderr)
        return 0
    op = assemble_class_operator(params, N, "raw")
    rng = np.random.default_rng(args.seed)
    x0 = rng.normal(size=op.assembled.shape[0])
    if mode == "nilpotent":
        if not op.nilpotent:
            raise ConfigError(f"a: class {a} is not coplanar; nilpotent mode needs sin(theta) = 0")
        X = nilpotent_solution(op, x0, t)
        norms = np.linalg.norm(X, axis=1)
        print(json.dumps({"slope": _slope(t, norms)}), file=sys.stderr)
    elif mode == "linear-class":
        every = max(1, int(round(args.sample / dt)))
        tr = class_trajectory(op, x0, t_end, dt, store_every=every)
        t, X, norms = tr.times, np.array(tr.states), tr.norms
    else:
        raise ConfigError(f"mode: unknown {mode}")
    cap = min(MODE_CAP, X.shape[1])
    header = ["t", "norm"] + [f"x_{i}" for i in range(cap)]
    rows = [[_fmt(ti), _fmt(nm)] + [_fmt(abs(v)) for v in x[:cap]] for ti, nm, x in zip(t, norms, X)]
    _emit(_csv_text(header, rows), cfg.out)
    return 0


def parametric_records(flow: ShearFlowParams, epsilons, box: int, q_max: int) -> list:
    records = []
    ax = flow.axis
    c_est = None
    if ax is not None:
        u, v = (ax + 1) % 3, (ax + 2) % 3
        g = flow.gamma
        if g[u] != 0:
            x = (flow.scaling.kappa[u] * g[v]) / (flow.scaling.kappa[v] * g[u])
            c_est = approximability(x, min(q_max, 10**5)).c_estimate
    for eps in epsilons:
        w = parametric_witness(flow, eps, box)
        records.append({
            "epsilon": eps,
            "gamma_perturbed": list(w.gamma_perturbed),
            "direction": [_num_str(d) for d in w.direction],
            "witness": list(w.witness),
            "delta": w.delta,
            "relative_delta": w.delta / flow.gamma_norm,
            "denominator": w.denominator,
            "c_estimate": c_est,
        })
    return records


def cmd_parametric(cfg: RunConfig, args) -> int:
    flow = cfg.flow()
    eps = [check_positive_float(e, "epsilon") for e in str(args.epsilon).split(",")]
    try:
        recs = parametric_records(flow, eps, cfg.box if args.box is None else args.box, cfg.qmax)
    except WitnessSearchError as exc:
        best = exc.best
        msg = {"error": str(exc)}
        if best is not None:
            msg["best"] = {"witness": list(best.witness), "delta": best.delta, "denominator": best.denominator}
        print(json.dumps(msg), file=sys.stderr)
        return EXIT_EXHAUSTED
    _emit(json.dumps({"flow": cfg.echo(), "records": recs}, indent=2, sort_keys=True) + "\n", cfg.out)
    return 0


def cmd_list_classes(cfg: RunConfig, args) -> int:
    flow = cfg.flow()
    leaders = ellipsoid_lattice_points(flow.p, leaders_only=True, include_boundary=args.boundary)
    rows = []
    for a in sorted(leaders, key=lambda w: w.index):
        params = flow.reduce(a.index)
        loc = "boundary" if a.norm_sq == flow.p.norm_sq else "interior"
        rows.append([*a.index, loc, params.tier, _fmt(params.a_tilde_x), _fmt(params.a_tilde_y), _fmt(params.sin_theta)])
    header = ["a_x", "a_y", "a_z", "location", "coplanar", "a_tilde_x", "a_tilde_y", "sin_theta"]
    if cfg.format == "json":
        _emit(json.dumps([dict(zip(header, r)) for r in rows], indent=2) + "\n", cfg.out)
    else:
        _emit(_csv_text(header, rows), cfg.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH")
    common.add_argument("--p", metavar="x,y,z")
    common.add_argument("--gamma", metavar="a,b,c", help="rationals n/d and sqrt(n) allowed")
    common.add_argument("--kappa", metavar="a,b,c")
    common.add_argument("--trunc", metavar="N")
    common.add_argument("--cutoff", metavar="C")
    common.add_argument("--tol", metavar="T")
    common.add_argument("--qmax", metavar="Q")
    common.add_argument("--out", metavar="PATH")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--jobs", metavar="J")

    parser = argparse.ArgumentParser(prog="eulerstab", description="Linear stability of sinusoidal shear flows.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("analyze", parents=[common], help="stability verdict for a flow")
    sp = sub.add_parser("spectrum", parents=[common], help="eigenvalues of one class")
    sp.add_argument("--a", metavar="x,y,z")
    sp.add_argument("--trunc-list", metavar="N1,N2", help="write one file per truncation")
    sm = sub.add_parser("simulate", parents=[common], help="time series")
    sm.add_argument("--mode", choices=("linear-class", "nonlinear", "nilpotent", "envelope"), required=True)
    sm.add_argument("--a", metavar="x,y,z")
    sm.add_argument("--t-end", type=float, default=1.0)
    sm.add_argument("--dt", type=float, default=1e-3)
    sm.add_argument("--sample", type=float, default=0.1, help="output spacing in time")
    sm.add_argument("--seed", type=int, default=0)
    sm.add_argument("--eps", type=float, default=0.0, help="perturbation size for nonlinear runs")
    pm = sub.add_parser("parametric", parents=[common], help="nearby flows with a coplanar class")
    pm.add_argument("--epsilon", required=True, metavar="E1,E2")
    pm.add_argument("--box", type=int)
    lc = sub.add_parser("list-classes", parents=[common], help="class leaders in the unstable ellipsoid")
    lc.add_argument("--boundary", action="store_true")
    return parser


COMMANDS = {
    "analyze": cmd_analyze,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "parametric": cmd_parametric,
    "list-classes": cmd_list_classes,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {k: getattr(args, k) for k in ("p", "gamma", "kappa", "trunc", "cutoff", "tol",
                                               "qmax", "out", "format", "jobs")}
    if args.command != "analyze" and overrides.get("format") is None and args.command in ("spectrum", "simulate"):
        overrides["format"] = "csv"
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrivialClassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_COLLINEAR
    except IntegrationError as exc:
        print(f"error: {exc}; last good time {exc.t_last_good:.6g}", file=sys.stderr)
        return EXIT_NAN


if __name__ == "__main__":
    sys.exit(main())
