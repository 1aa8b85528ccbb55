"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 mathematical failure (detectability,
verification or certification).
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import pipeline
from .certification import check_iss_bound
from .errors import ConsistencyError, HybridObsError, InfeasibleError, InputError
from .scenario import gains_from_dict, gains_to_dict, load_scenario
from .simulator import measure_decay_rate, simulate, write_csv

EXIT_OK, EXIT_INPUT, EXIT_MATH = 0, 1, 2


def _complex_str(z):
    if z is None:
        return "none"
    return f"{z.real:.6g}{z.imag:+.6g}j"


def _write_json(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2))


def cmd_analyze(args):
    sf = load_scenario(args.file)
    hops, decomp = pipeline.analyze(sf)
    report = {"alpha": sf.targets.alpha, "agents": [], "collectively_detectable": hops.ok}
    print(f"alpha = {sf.targets.alpha}")
    for i in range(sf.plant.p):
        ell = hops.depths[i]
        entry = {"agent": i + 1, "hop_depth": ell}
        if ell is None:
            entry["witness"] = _complex_str(hops.witnesses[i])
            print(f"agent {i + 1}: no admissible hop depth, "
                  f"slowest unobservable eigenvalue {entry['witness']}")
        else:
            dims = [decomp.dim(i, r) for r in range(ell + 2)]
            entry["innovation_dims"] = dims
            print(f"agent {i + 1}: hop depth {ell}, innovation dims {dims}")
        report["agents"].append(entry)
    print("collective alpha-detectability:", "pass" if hops.ok else "FAIL")
    if args.out:
        _write_json(args.out, report)
    return EXIT_OK if hops.ok else EXIT_MATH


def _design(args):
    sf = load_scenario(args.file)
    d = pipeline.design(sf)
    gains = d.gains
    if getattr(args, "gains", None):
        try:
            doc = json.loads(Path(args.gains).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read gains file {args.gains}: {exc}") from exc
        gains = gains_from_dict(doc, d.decomp, sf.plant)
    return sf, d.decomp, gains


def cmd_synthesize(args):
    sf = load_scenario(args.file)
    d = pipeline.design(sf)
    print(d.gains.report.table())
    if args.out:
        _write_json(args.out, gains_to_dict(d.gains))
    return EXIT_OK if d.gains.report.passed else EXIT_MATH


def cmd_certify(args):
    sf, decomp, gains = _design(args)
    try:
        _, cert = pipeline.certify(sf, decomp, gains, args.grid)
    except InfeasibleError as exc:
        print(f"certification failed: {exc}", file=sys.stderr)
        return EXIT_MATH
    doc = cert.to_json_dict()
    print(f"eta = {cert.eta:.6g} (raw {cert.eta_raw:.6g})")
    print(f"alpha_achieved = {cert.alpha_achieved:.6g}")
    print(f"kappa = {cert.kappa:.6g}")
    print(f"gamma_C = {cert.gamma_C:.6g}  (certified upper bound)")
    print(f"gamma_D = {cert.gamma_D:.6g}  (certified upper bound)")
    if args.out:
        _write_json(args.out, doc)
    return EXIT_OK


def _run_one(sf, decomp, gains, cert, overrides):
    scn = pipeline.build_scenario(sf, decomp, gains, **overrides)
    traj = simulate(scn)
    errs = traj.agent_error_norms()[-1]
    summary = {
        "variant": scn.variant,
        "seed": scn.disturbance.seed,
        "noise": scn.disturbance.kind != "zero",
        "final_error_norms": [float(v) for v in errs],
        "final_total_error_norm": float(traj.total_error_norm()[-1]),
        "peak_total_error_norm": float(traj.total_error_norm().max()),
    }
    if scn.disturbance.kind == "zero":
        est = measure_decay_rate(traj)
        summary["decay_rate"] = est.rate if est.defined else None
    if scn.variant == "nominal" and cert is not None:
        noisy = scn.disturbance.kind != "zero"
        rep = check_iss_bound(traj, cert,
                              scn.disturbance.d_inf if noisy else 0.0,
                              scn.disturbance.w_inf if noisy else 0.0)
        summary["iss_bound"] = {"ok": rep.ok, "worst_margin": rep.worst_margin,
                                "worst_time": rep.worst_time}
    return traj, summary


def cmd_simulate(args):
    sf, decomp, gains = _design(args)
    try:
        _, cert = pipeline.certify(sf, decomp, gains)
    except InfeasibleError:
        cert = None
    overrides = {
        "variant": args.variant, "eps_tau": args.eps_tau, "delta": args.delta,
        "t_final": args.t_final, "h": args.step, "seed": args.seed,
        "noise": None if args.noise is None else args.noise == "on",
    }
    if args.sweep and args.sweep > 1:
        base = sf.sim.seed if args.seed is None else args.seed
        runs = [dict(overrides, seed=base + s) for s in range(args.sweep)]
        with ProcessPoolExecutor() as pool:
            futures = [pool.submit(_run_one, sf, decomp, gains, cert, o) for o in runs]
            summaries = [f.result()[1] for f in futures]
        summary = {"runs": summaries}
    else:
        traj, summary = _run_one(sf, decomp, gains, cert, overrides)
        if args.out:
            write_csv(traj, args.out)
    text = json.dumps(summary, indent=2)
    print(text)
    if args.summary:
        Path(args.summary).write_text(text)
    runs = summary.get("runs", [summary])
    if any("iss_bound" in r and not r["iss_bound"]["ok"] for r in runs):
        return EXIT_MATH
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="hybridobs",
        description="Distributed hybrid observer: analysis, synthesis, certification, simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_file(p):
        p.add_argument("file", help="scenario JSON (or 'ring4' for the bundled example)")
        p.add_argument("--out", help="output file")

    p = sub.add_parser("analyze", help="hop depths and collective detectability")
    add_file(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("synthesize", help="design gains and print the verification table")
    add_file(p)
    p.set_defaults(func=cmd_synthesize)

    p = sub.add_parser("certify", help="compute the ISS certificate")
    add_file(p)
    p.add_argument("--gains", help="use gains from this JSON file instead of designing")
    p.add_argument("--grid", type=int, default=1001, help="tau grid points")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="simulate plant and observers, write a CSV")
    add_file(p)
    p.add_argument("--gains", help="use gains from this JSON file instead of designing")
    p.add_argument("--summary", help="write the summary JSON here")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=("nominal", "jitter", "delay"))
    p.add_argument("--eps-tau", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--noise", choices=("on", "off"))
    p.add_argument("--t-final", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--sweep", type=int, default=0, help="run this many seeds concurrently")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except pipeline.DetectabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for i, lam in exc.result.witnesses.items():
            print(f"  agent {i + 1}: witness eigenvalue {_complex_str(lam)}", file=sys.stderr)
        return EXIT_MATH
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConsistencyError, InfeasibleError, HybridObsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
