"""Command-line front end.

Each run reads one JSON config and writes a directory holding a copy of the
effective config, ``summary.json`` and CSV data. Exit codes: 0 success,
2 schema violation, 3 numerical failure or a failed check.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import traceback
from pathlib import Path

import numpy as np
from scipy.stats import unitary_group

from . import __version__
from . import config as cfg
from .dynamics import evolve, spectral_measure_estimate, spreading_exponent
from .equivalence import bb_to_qw_square, cyclic_to_cmv, gauge_transform, verify_cc, verify_qw_bb
from .errors import ConfigurationError, GaugeObstructionError, ValidationError, WrapError
from .fibered import (
    band_structure, cc_closed_form, coin_alpha_eta, is_m_good, qw1d_c_delta, qw1d_closed_form,
)
from .models import BbParams, CcParams, QwParams, build_bb, build_qw, verblunski_from_measure
from .mourre import build_conjugate, cut_rank, eigenvalue_stability, mourre_check
from .phases import TWO_PI, circular_distance, eigenphases, multiset_deviation

COMMANDS = ("build", "bands", "tau", "verify", "mourre", "evolve", "spectrum", "stability")
THREADS_ENV = "UNITARY_NETWORKS_THREADS"
EXIT_OK, EXIT_SCHEMA, EXIT_NUMERICAL = 0, 2, 3
FLOAT_FMT = "{:.17g}"


# --- output ---------------------------------------------------------------------------


def _plain(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON-ready values."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if np.isfinite(value) else None
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([FLOAT_FMT.format(v) if isinstance(v, (float, np.floating)) else v for v in row])


class Run:
    """Output directory plus the effective config of one invocation."""

    def __init__(self, doc: dict, out: Path, command: str):
        self.doc = doc
        self.out = out
        self.command = command
        self.tol = doc["tolerances"]
        out.mkdir(parents=True, exist_ok=True)
        (out / "config.json").write_text(cfg.canonical_json(doc))

    def csv(self, name, header, rows):
        _write_csv(self.out / name, header, rows)

    def summary(self, results: dict, passed: bool):
        report = {
            "command": self.command,
            "version": __version__,
            "config_hash": cfg.config_hash(self.doc),
            "tolerances": self.tol,
            "pass": bool(passed),
            "results": results,
        }
        (self.out / "summary.json").write_text(cfg.canonical_json(_plain(report)))
        return report


def _model(doc, L=None):
    if "model" not in doc:
        raise cfg.SchemaError("model", "required field is missing")
    return cfg.build_model(doc["model"], seed=doc["seed"], L=L)


def _closed_form(doc):
    """Analytic bands and tau_M for 1-d two-state walks and the CC model, else ``None``."""
    model = doc["model"]
    if model["kind"] == "qw" and model.get("d", 1) == 1:
        alpha, eta = coin_alpha_eta(cfg.homogeneous_symbol(model)(np.zeros((1, 1)))[0])
        return qw1d_closed_form(alpha, eta)
    if model["kind"] == "cc":
        return cc_closed_form(model["phi"])
    return None


def _sizes(doc, section, flag_L):
    if flag_L is not None:
        return [flag_L]
    node = doc[section]
    if "L" in node:
        return cfg._sizes(node["L"], f"{section}.L")
    return [cfg._integer(doc["model"]["L"], "model.L", lo=2)]


# --- commands -------------------------------------------------------------------------


def cmd_build(run: Run, args):
    model = _model(run.doc)
    op = model.operator
    op.to_csv(run.out / "operator.csv")
    defect = op.unitarity_defect()
    results = {"kind": model.kind, "dimension": op.shape.dim, "L": op.shape.L, "d": op.shape.d,
               "bandwidth": op.bandwidth, "unitarity_defect": defect}
    passed = defect < run.tol["unitary"]
    if model.symbol is not None and op.shape.dim <= 4096:
        dev = multiset_deviation(eigenphases(op.dense()), model.symbol.grid_phases(op.shape.L))
        results["fourier_deviation"] = dev
        passed = passed and dev < run.tol["fourier"]
    return results, passed


def _bands(run: Run, args):
    sym = cfg.homogeneous_symbol(run.doc["model"])
    N = cfg._integer(run.doc["bands"]["N"], "bands.N", lo=4)
    return sym, band_structure(sym, N, gap_tol=run.tol["gap"], grad_tol=run.tol["grad"])


def _tau_comparison(tau, reference, step):
    if tau.size != reference.size:
        return None
    return multiset_deviation(tau, reference) if tau.size else 0.0


def cmd_bands(run: Run, args):
    sym, bs = _bands(run, args)
    flat_x = bs.points.reshape(-1, bs.points.shape[-1])
    flat_ph = bs.phases.reshape(-1, bs.phases.shape[-1])
    flat_g = bs.grad_norms.reshape(-1, bs.grad_norms.shape[-1])
    dims, bands = flat_x.shape[1], flat_ph.shape[1]
    header = [f"x{a + 1}" for a in range(dims)] + [f"phase{k}" for k in range(bands)] + \
             [f"grad{k}" for k in range(bands)]
    run.csv("bands.csv", header, (list(x) + list(p) + list(g) for x, p, g in zip(flat_x, flat_ph, flat_g)))
    results = {"N": bs.N, "step": bs.step, "resolution": bs.resolution, "arcs": bs.bands.to_list(),
               "tau_M": list(bs.tau_M), "crossings": len(bs.crossings), "critical_points": len(bs.criticals)}
    passed = True
    closed = _closed_form(run.doc)
    if closed is not None:
        hd = bs.bands.hausdorff(closed.bands)
        tau_dev = _tau_comparison(np.asarray(bs.tau_M), np.asarray(closed.tau_M), bs.step)
        results["closed_form"] = {"arcs": closed.bands.to_list(), "tau_M": list(closed.tau_M),
                                  "hausdorff": hd, "tau_M_deviation": tau_dev}
        passed = hd <= 2 * bs.step and tau_dev is not None and tau_dev <= 2 * bs.step
    if "delta" in run.doc["bands"]:
        delta = cfg._arc(run.doc["bands"]["delta"], "bands.delta")
        cert = is_m_good(delta, bs)
        results["delta"] = {"arc": delta.to_list(), **cert.report()}
        passed = passed and cert.passed
    return results, passed


def cmd_tau(run: Run, args):
    sym, bs = _bands(run, args)
    tau = np.asarray(bs.tau_M)
    closed = _closed_form(run.doc)
    sources = []
    for t in tau:
        near_c = sum(circular_distance(c.phase, t) <= 2 * bs.resolution for c in bs.crossings)
        near_k = sum(circular_distance(c.phase, t) <= 2 * bs.resolution for c in bs.criticals)
        sources.append((float(t), int(near_c), int(near_k)))
    run.csv("tau.csv", ["phase", "crossings", "critical_points"], sources)
    results = {"N": bs.N, "step": bs.step, "tau_M": tau}
    passed = True
    if closed is not None:
        dev = _tau_comparison(tau, np.asarray(closed.tau_M), bs.step)
        results["closed_form_tau_M"] = list(closed.tau_M)
        results["deviation"] = dev
        passed = dev is not None and dev <= 2 * bs.step
    return results, passed


# verification relations -----------------------------------------------------------


def _random_qw(L, rng):
    alpha = rng.normal(size=L) + 1j * rng.normal(size=L)
    beta = rng.normal(size=L) + 1j * rng.normal(size=L)
    norm = np.sqrt(np.abs(alpha) ** 2 + np.abs(beta) ** 2)
    return QwParams.from_coin_params(alpha / norm, beta / norm, rng.uniform(0, TWO_PI, L))


def _wrap_consistent(bb: BbParams) -> BbParams:
    return bb.replace(gamma=bb.gamma - np.sum(bb.gamma) / bb.L)


def _verify_instances(run: Run, relation, rng):
    node = run.doc["verify"]
    model = run.doc.get("model")
    n = cfg._integer(node["instances"], "verify.instances", lo=1)
    L = cfg._integer(node["L"], "verify.L", lo=2) if "L" in node else (model or {}).get("L")
    if L is None:
        raise cfg.SchemaError("verify.L", "required when no model is given")
    own = {"cc-qw": "cc", "qw-bb": "qw", "bb-square": "bb", "gauge": "bb"}.get(relation)
    base = _model(run.doc).params if model is not None and model["kind"] == own else None
    if relation == "cc-qw":
        phis = node.get("phis", [model["phi"]] if base is not None else None)
        if phis is None:
            raise cfg.SchemaError("verify.phis", "required when no cc model is given")
        for k, phi in enumerate(phis):
            phi = cfg._number(phi, f"verify.phis[{k}]", lo=0.0, hi=np.pi / 2)
            for i in range(n):
                if i == 0 and base is not None:
                    yield CcParams(phi, base.d_phases)
                else:
                    yield CcParams.random(phi, L, rng)
        return
    for i in range(n):
        if i == 0 and base is not None:
            yield base
        elif relation == "qw-bb":
            yield _random_qw(L, rng)
        else:
            yield BbParams.random(L, rng)


def _check_square(bb, tol):
    res = bb_to_qw_square(bb)
    u_qw = build_qw(res.qw).dense()
    qw_phases = eigenphases(u_qw @ u_qw)
    bb_phases = eigenphases(build_bb(bb).dense())
    phase_dev = multiset_deviation(qw_phases, np.concatenate([bb_phases, bb_phases]))
    report = {"relation": "bb-square", "dimension": u_qw.shape[0], "residual": res.residual,
              "norm_kind": res.norm_kind, "tolerance": tol["square_residual"], "spectral_deviation": phase_dev}
    report["pass"] = res.residual < tol["square_residual"] and phase_dev < tol["spectral"]
    return report


def _check_gauge(bb, tol):
    bb = _wrap_consistent(bb)
    res = gauge_transform(bb)
    phase_dev = multiset_deviation(eigenphases(build_bb(bb).dense()), eigenphases(build_bb(res.gauged).dense()))
    report = {"relation": "gauge", "dimension": bb.L, "residual": res.residual, "norm_kind": res.norm_kind,
              "tolerance": tol["residual"], "spectral_deviation": phase_dev}
    report["pass"] = res.residual < tol["residual"] and phase_dev < tol["spectral"]
    return report


def _check_cmv(run: Run, rng):
    node = run.doc["verify"]
    n_coeff = cfg._integer(node.get("coefficients", 16), "verify.coefficients", lo=1)
    moments = np.zeros(n_coeff + 1, dtype=complex)
    moments[0] = 1.0
    uniform = np.abs(verblunski_from_measure(moments, n_coeff).coefficients)
    size = cfg._integer(node.get("size", 6), "verify.size", lo=1)
    reports = [{"relation": "cmv-uniform", "dimension": n_coeff, "residual": float(uniform.max()),
                "norm_kind": "max", "tolerance": run.tol["residual"],
                "pass": bool(uniform.max() < run.tol["residual"])}]
    for _ in range(cfg._integer(node["instances"], "verify.instances", lo=1)):
        u = unitary_group.rvs(size, random_state=rng)
        phi = rng.normal(size=size) + 1j * rng.normal(size=size)
        rep = cyclic_to_cmv(u, phi)
        reports.append({"relation": "cmv-roundtrip", "dimension": size, "residual": rep.roundtrip_error,
                        "norm_kind": "max", "tolerance": 1e-8, "pass": bool(rep.roundtrip_error < 1e-8)})
    return reports


def cmd_verify(run: Run, args):
    relation = args.relation or run.doc["verify"].get("relation")
    if relation is None:
        kind = run.doc.get("model", {}).get("kind")
        relation = {"cc": "cc-qw", "qw": "qw-bb", "bb": "bb-square", "cmv": "cmv"}.get(kind)
    if relation not in cfg.RELATIONS:
        raise cfg.SchemaError("verify.relation", f"expected one of {cfg.RELATIONS}, got {relation!r}")
    rng = np.random.default_rng(run.doc["seed"])
    tol = run.tol
    if relation == "cmv":
        reports = _check_cmv(run, rng)
    else:
        reports = []
        for inst in _verify_instances(run, relation, rng):
            if relation == "cc-qw":
                reports.append({**verify_cc(inst, tol["residual"]).report(), "phi": inst.phi})
            elif relation == "qw-bb":
                reports.append(verify_qw_bb(inst, tol["residual"]).report())
            elif relation == "bb-square":
                reports.append(_check_square(inst, tol))
            else:
                reports.append(_check_gauge(inst, tol))
    run.csv("verify.csv", ["instance", "relation", "dimension", "residual", "norm_kind", "pass"],
            ([i, r["relation"], r["dimension"], r["residual"], r["norm_kind"], int(r["pass"])]
             for i, r in enumerate(reports)))
    worst = max(r["residual"] for r in reports)
    results = {"relation": relation, "instances": reports, "max_residual": worst}
    return results, all(r["pass"] for r in reports)


def cmd_mourre(run: Run, args):
    node = run.doc["mourre"]
    delta = cfg._arc(cfg._get(node, "delta", "mourre"), "mourre.delta")
    sym = cfg.homogeneous_symbol(run.doc["model"])
    sizes = _sizes(run.doc, "mourre", args.truncation)
    exclude = node.get("exclude", 0)
    c_ref = None
    closed = _closed_form(run.doc) if run.doc["model"]["kind"] == "qw" else None
    if closed is not None:
        alpha, eta = coin_alpha_eta(sym(np.zeros((1, 1)))[0])
        c_ref = qw1d_c_delta(alpha, eta, delta)
    per_size, rows = [], []
    for L in sizes:
        u = _model(run.doc, L).operator
        a = build_conjugate(sym, delta, L, ramp=node.get("ramp"))
        skip = cut_rank(u) if exclude == "cut" else cfg._integer(exclude, "mourre.exclude", lo=0)
        res = mourre_check(u, a, delta=delta, c_delta=c_ref, exclude=skip)
        rep = {"L": L, "c_delta_grid": a.c_delta, **res.report()}
        per_size.append(rep)
        rows.extend((L, i, float(v)) for i, v in enumerate(res.spectrum))
    run.csv("commutator_spectrum.csv", ["L", "index", "eigenvalue"], rows)
    margins = [r["margin"] for r in per_size]
    shrinking = len(margins) < 2 or margins[-1] < margins[0]
    c_match = None
    if c_ref is not None:
        c_match = abs(per_size[-1]["c_delta_grid"] - c_ref) / c_ref
    results = {"delta": delta.to_list(), "c_delta_reference": c_ref, "c_delta_relative_error": c_match,
               "sizes": per_size, "margin_decreasing": shrinking}
    passed = all(r["pass"] for r in per_size) and shrinking and (c_match is None or c_match < 0.05)
    return results, passed


def cmd_evolve(run: Run, args):
    node = run.doc["evolve"]
    u = _model(run.doc, args.truncation).operator
    T = cfg._integer(node["T"], "evolve.T", lo=1)
    psi = cfg.initial_state(node["initial"], u.shape, "evolve.initial")
    traj = evolve(u, psi, T)
    mean, m2 = traj.mean(), traj.second_moment()
    radius = traj.support_radius()
    header = ["t"] + [f"mean_x{a + 1}" for a in range(u.shape.d)] + ["second_moment", "norm", "support_radius"]
    run.csv("trajectory.csv", header,
            ([t, *map(float, mean[t]), float(m2[t]), float(traj.norms[t]), int(radius[t])] for t in traj.times))
    drift = float(np.max(np.abs(traj.norms - 1)))
    results = {"T": T, "L": u.shape.L, "norm_drift": drift, "final_second_moment": float(m2[-1])}
    passed = drift < 1e-10
    if T >= 70:
        results["spreading_exponent"] = spreading_exponent(traj)
    return results, passed


def cmd_spectrum(run: Run, args):
    node = run.doc["spectrum"]
    u = _model(run.doc, args.truncation).operator
    psi = cfg.initial_state(node["initial"], u.shape, "spectrum.initial")
    n_max = cfg._integer(node["n_max"], "spectrum.n_max", lo=1)
    n_grid = cfg._integer(node["n_grid"], "spectrum.n_grid", lo=2)
    sd = spectral_measure_estimate(u, psi, n_max, n_grid)
    run.csv("spectrum.csv", ["phase", "density"], zip(map(float, sd.theta), map(float, sd.density)))
    results = {"n_max": n_max, "n_grid": n_grid, "mass": sd.mass, "min_density": float(sd.density.min())}
    passed = abs(sd.mass - 1) < 1e-6 and sd.density.min() >= -1e-12
    closed = _closed_form(run.doc) if "model" in run.doc and run.doc["model"]["kind"] in ("qw", "cc") else None
    if closed is not None and "perturbation" not in run.doc["model"]:
        results["mass_in_bands"] = sd.mass_in(closed.bands)
    return results, passed


def cmd_stability(run: Run, args):
    node = run.doc["stability"]
    delta = cfg._arc(cfg._get(node, "delta", "stability"), "stability.delta")
    delta_prime = cfg._arc(cfg._get(node, "delta_prime", "stability"), "stability.delta_prime")
    sizes = _sizes(run.doc, "stability", args.truncation)
    sym = cfg.homogeneous_symbol(run.doc["model"])
    N = cfg._integer(node["N"], "stability.N", lo=4)
    res = eigenvalue_stability(lambda L: _model(run.doc, L).operator, sym, delta, delta_prime, sizes, N=N,
                               factor=cfg._number(node["factor"], "stability.factor", lo=0.0))
    run.csv("counts.csv", ["L", "isolated"], zip(res.sizes, res.counts))
    return {"delta": delta.to_list(), "delta_prime": delta_prime.to_list(), **res.report()}, res.stable


HANDLERS = {
    "build": cmd_build, "bands": cmd_bands, "tau": cmd_tau, "verify": cmd_verify, "mourre": cmd_mourre,
    "evolve": cmd_evolve, "spectrum": cmd_spectrum, "stability": cmd_stability,
}


# --- entry point -------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unitary-networks", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, help=HANDLERS[name].__name__.removeprefix("cmd_"))
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=None, help="output directory (default: runs/<command>)")
        p.add_argument("--grid", type=int, default=None, help="symbol grid size N")
        p.add_argument("--truncation", type=int, default=None, help="torus size L")
        p.add_argument("--tolerance", action="append", default=[], metavar="NAME=VALUE",
                       help=f"override a tolerance ({', '.join(cfg.DEFAULT_TOLERANCES)})")
        if name == "verify":
            p.add_argument("--relation", choices=cfg.RELATIONS, default=None)
    return parser


def _apply_overrides(raw: dict, args) -> dict:
    raw = dict(raw)
    if args.grid is not None:
        for section in ("bands", "stability"):
            raw[section] = {**raw.get(section, {}), "N": args.grid}
    if args.truncation is not None and isinstance(raw.get("model"), dict):
        raw["model"] = {**raw["model"], "L": args.truncation}
    tols = dict(raw.get("tolerances", {}))
    for item in args.tolerance:
        name, sep, value = item.partition("=")
        if not sep:
            raise cfg.SchemaError(f"--tolerance {item}", "expected NAME=VALUE")
        try:
            tols[name] = float(value)
        except ValueError:
            raise cfg.SchemaError(f"tolerances.{name}", f"not a number: {value!r}") from None
    if tols:
        raw["tolerances"] = tols
    if getattr(args, "relation", None):
        raw["verify"] = {**raw.get("verify", {}), "relation": args.relation}
    return raw


def _limit_threads():
    value = os.environ.get(THREADS_ENV)
    if not value:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(value))


def _origin(exc) -> str:
    """Name of the innermost package module in the traceback."""
    here = Path(__file__).parent
    names = [Path(f.filename).stem for f in traceback.extract_tb(exc.__traceback__)
             if Path(f.filename).parent == here]
    return names[-1] if names else "cli"


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        raw = cfg.read(args.config)
        doc = cfg.validate(_apply_overrides(raw, args))
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    out = Path(args.out) if args.out else Path("runs") / args.command
    _limit_threads()
    run = Run(doc, out, args.command)
    try:
        results, passed = HANDLERS[args.command](run, args)
    except cfg.SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValidationError, WrapError, GaugeObstructionError, ConfigurationError, np.linalg.LinAlgError) as exc:
        module = _origin(exc)
        print(f"numerical failure [{args.command}/{module}]: {type(exc).__name__}: {exc}", file=sys.stderr)
        run.summary({"error": f"{type(exc).__name__}: {exc}"}, False)
        return EXIT_NUMERICAL
    run.summary(results, passed)
    print(f"{args.command}: {'pass' if passed else 'FAIL'} -> {out}")
    if not passed:
        print(f"check failed; see {out / 'summary.json'}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
