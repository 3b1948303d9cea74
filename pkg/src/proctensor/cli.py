"""Command-line front end. Output is data only (CSV or JSON)."""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from . import io
from .instruments import (
    Instrument,
    causal_break_instrument,
    identity_instrument,
    noisy_instrument,
    validate_instrument,
)
from .memory import (
    BlockPartition,
    big_theta,
    condition,
    estimate_diamond_gap,
    recover,
    report_record,
    verify_cor2,
    verify_thm1,
)
from .models import (
    INTERVENTIONS,
    REGIMES,
    CaseStudyParams,
    ShallowPocketParams,
    cs_grid_scan,
    cs_observable,
    cs_process_tensor,
    sp_state,
)
from .process_tensor import ProcessTensor, is_psd, validate_causality
from .quantum_info import mutual_information

NOISY_VANISHING = 1e-6
NM_FLOOR = 0.0
INSTRUMENTS = ("identity", "causal-break", "noisy")


class InvariantViolation(RuntimeError):
    pass


# -- helpers ---------------------------------------------------------------------------

def parse_ell(text: str) -> list[int]:
    """'3', '1-4' or '1,3' -> sorted list of memory lengths."""
    out: set[int] = set()
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.update(range(int(lo), int(hi) + 1))
        elif part:
            out.add(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"invalid --ell {text!r}")
    return sorted(out)


def parse_range(text: str) -> np.ndarray:
    """'lo:hi:step' -> inclusive grid."""
    try:
        lo, hi, step = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must be lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise argparse.ArgumentTypeError(f"invalid range {text!r}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return np.round(lo + step * np.arange(n), 12)


def _names(text: str, allowed, what: str) -> list[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    for n in names:
        if n not in allowed:
            raise SystemExit(f"error: invalid {what} {n!r}; choose from {', '.join(allowed)}")
    return names


def memory_instrument(name: str, ell: int, start: int = 2) -> Instrument:
    if name == "identity":
        return identity_instrument(ell, start=start)
    if name == "causal-break":
        return causal_break_instrument(ell, start=start)
    if name == "noisy":
        return noisy_instrument(ell, start=start)
    raise ValueError(f"unknown instrument {name!r}")


def regime_params(name: str, args) -> CaseStudyParams:
    xi, kappa = REGIMES[name]
    return CaseStudyParams(xi, kappa, args.dt, args.steps)


# -- subcommands -----------------------------------------------------------------------

def cmd_shallow_pocket(args) -> int:
    n = int(math.floor((args.t1 + args.tau_max) / args.dt + 1e-9)) + 1
    times = np.round(args.dt * np.arange(n), 12)
    rows = []
    for t in times:
        if t <= args.t1:
            free = sp_state(ShallowPocketParams(args.g, args.gamma, t, 0.0), "free")
            val = mutual_information(free.matrix, free.layout, ([(2, "in")], [(0, "out")]))
            rows.append([float(t)] + [val] * len(INTERVENTIONS))
            continue
        p = ShallowPocketParams(args.g, args.gamma, args.t1, float(t - args.t1))
        vals = []
        for iv in INTERVENTIONS:
            rho = sp_state(p, iv)
            if not is_psd(rho.matrix, 1e-10):
                raise InvariantViolation(f"{iv} state at t={t} is not positive")
            vals.append(mutual_information(rho.matrix, rho.layout, ([(2, "in")], [(0, "out")])))
        rows.append([float(t)] + vals)
    io.write_csv(args.out, ["t", "I_free", "I_sigmax", "I_offset", "I_measure", "I_trash"], rows)
    return 0


def cmd_build(args) -> int:
    if args.regime:
        params = regime_params(args.regime, args)
    else:
        params = CaseStudyParams(args.xi, args.kappa, args.dt, args.steps)
    pt = cs_process_tensor(params)
    rep = validate_causality(pt)
    if not rep.passed or not is_psd(pt.choi):
        raise InvariantViolation(f"built process tensor fails validation (worst residual {rep.worst:.3e})")
    io.write_process_tensor(pt, args.out)
    return 0


def cmd_grid(args) -> int:
    rows = cs_grid_scan(args.xi_range, args.kappa_range, args.metric, dt=args.dt,
                        n_steps=args.steps)
    io.write_csv(args.out, ["xi", "kappa", args.metric], rows)
    if args.metric == "nm":
        bad = [(x, k, v) for x, k, v in rows if x > 0 and not v > NM_FLOOR]
        if bad:
            raise InvariantViolation(f"non-Markovianity not positive at {bad[:3]}")
    return 0


def cmd_memory_strength(args) -> int:
    rows = []
    violations = []
    for regime in _names(args.regime, REGIMES, "regime"):
        pt = cs_process_tensor(regime_params(regime, args))
        for name in _names(args.instrument, INSTRUMENTS, "instrument"):
            for ell in args.ell:
                part = BlockPartition.from_memory_steps(pt.layout, range(2, 2 + ell))
                th = big_theta(condition(pt, part, memory_instrument(name, ell)), args.aggregate)
                rows.append([regime, name, ell, th])
                if name == "noisy" and th > NOISY_VANISHING:
                    violations.append((regime, ell, th))
    io.write_csv(args.out, ["regime", "instrument", "ell", "theta_bits"], rows)
    if violations:
        raise InvariantViolation(f"noisy-instrument memory strength does not vanish: {violations}")
    return 0


def cmd_verify_bounds(args) -> int:
    bounds = _names(args.bounds, ("thm1", "cor2", "thm3"), "bound")
    if "thm3" in bounds and args.seed is None:
        raise SystemExit("error: --seed is required for the sampled thm3 estimator")
    records = []
    for regime in _names(args.regime, REGIMES, "regime"):
        params = regime_params(regime, args)
        pt = cs_process_tensor(params)
        obs = cs_observable(pt.layout)
        n_mid = params.n_steps - 2
        for name in _names(args.instrument, INSTRUMENTS, "instrument"):
            for ell in args.ell:
                if ell > n_mid:
                    raise SystemExit(f"error: --ell {ell} exceeds the {n_mid} intermediate steps")
                inst = memory_instrument(name, ell)
                part = BlockPartition.from_memory_steps(pt.layout, range(2, 2 + ell))
                rec = recover(condition(pt, part, inst), pt_layout=pt.layout)
                config = {"xi": params.xi, "kappa": params.kappa, "dt": params.dt,
                          "n_steps": params.n_steps, "aggregation": args.aggregate}
                if "thm1" in bounds:
                    r = verify_thm1(pt, part, inst, obs, args.aggregate,
                                    plotted_scale=2.0 ** (n_mid - ell), recovery=rec)
                    records.append(report_record(dict(config, bound="thm1", rhs_form="plotted",
                                                      rhs_generic=r["rhs"]),
                                                 r["lhs"], r["rhs_plotted"], r["theta_bits"], ell,
                                                 name, regime))
                if "cor2" in bounds:
                    for t_j in range(2 + ell, params.n_steps + 1):
                        r = verify_cor2(pt, part, inst, t_j, aggregation=args.aggregate,
                                        recovery=rec)
                        records.append(report_record(dict(config, bound="cor2", t_j=t_j),
                                                     r["trace_distance"], r["rhs"],
                                                     r["theta_bits"], ell, name, regime))
                if "thm3" in bounds and name == "causal-break":
                    r = estimate_diamond_gap(pt, part, inst, args.samples, args.seed,
                                             recovery=rec, aggregation=args.aggregate)
                    records.append(report_record(dict(config, bound="thm3", samples=args.samples),
                                                 r["lower_bound"], r["rhs"], r["theta_bits"], ell,
                                                 name, regime, args.seed))
    io.write_json(args.out, records)
    failed = [r for r in records if r["margin"] < -1e-8]
    if failed:
        raise InvariantViolation(f"{len(failed)} bound checks failed")
    return 0


def cmd_validate(args) -> int:
    try:
        obj = io.read_any(args.file)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    ok = True
    if isinstance(obj, ProcessTensor):
        evals = np.linalg.eigvalsh(0.5 * (obj.choi + obj.choi.conj().T))
        psd = evals[0] >= -1e-10 * max(abs(evals[-1]), 1e-300)
        print(f"kind: process tensor {obj.layout}")
        print(f"psd: {'pass' if psd else 'FAIL'} (min eigenvalue {evals[0]:.3e})")
        rep = validate_causality(obj)
        for name, r in rep.residuals:
            status = "pass" if r <= rep.tolerance else "FAIL"
            print(f"causality {name}: {status} ({r:.3e})")
        norm_ok = abs(obj.trace - obj.layout.out_dim) <= 1e-8 * obj.layout.out_dim
        print(f"normalization: {'pass' if norm_ok else 'FAIL'} "
              f"(trace {obj.trace:.17g}, expected {obj.layout.out_dim})")
        ok = psd and rep.passed and norm_ok
    else:
        rep = validate_instrument(obj)
        print(f"kind: instrument {obj.layout} with {obj.n_outcomes} outcomes")
        print(f"psd: {'pass' if rep.min_eigenvalue >= -1e-10 else 'FAIL'} "
              f"(min eigenvalue {rep.min_eigenvalue:.3e})")
        tol = 1e-8 * max(1.0, rep.expected_trace)
        for name, r in rep.comb_residuals:
            print(f"causality {name}: {'pass' if r <= tol else 'FAIL'} ({r:.3e})")
        print(f"normalization: trace {rep.trace:.17g}, expected {rep.expected_trace}")
        ok = rep.passed
    print("result: " + ("pass" if ok else "FAIL"))
    return 0 if ok else 1


# -- parser ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proctensor", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("shallow-pocket", help="I(S:A) curves for the five interventions")
    sp.add_argument("--g", type=float, default=0.8)
    sp.add_argument("--gamma", type=float, default=0.3)
    sp.add_argument("--t1", type=float, default=5.0)
    sp.add_argument("--tau-max", type=float, default=7.0)
    sp.add_argument("--dt", type=float, default=0.05)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_shallow_pocket)

    cs = sub.add_parser("case-study", help="dissipative qubit-pair case study")
    cs_sub = cs.add_subparsers(dest="action", required=True)

    def common(q):
        q.add_argument("--dt", type=float, default=0.3)
        q.add_argument("--steps", type=int, default=6)
        q.add_argument("--out", required=True)

    b = cs_sub.add_parser("build", help="write the process tensor to a JSON file")
    b.add_argument("--xi", type=float, default=1.0)
    b.add_argument("--kappa", type=float, default=1.0)
    b.add_argument("--regime", choices=sorted(REGIMES))
    common(b)
    b.set_defaults(func=cmd_build)

    g = cs_sub.add_parser("grid", help="scan a (xi, kappa) grid")
    g.add_argument("--metric", choices=("n2", "nm"), default="n2")
    g.add_argument("--xi-range", type=parse_range, default=parse_range("0:2:0.1"))
    g.add_argument("--kappa-range", type=parse_range, default=parse_range("0:10:0.1"))
    common(g)
    g.set_defaults(func=cmd_grid)

    for name, func, helptext in (("memory-strength", cmd_memory_strength, "Θ per regime"),
                                 ("verify-bounds", cmd_verify_bounds, "bound report")):
        q = cs_sub.add_parser(name, help=helptext)
        q.add_argument("--regime", default="CP,Int,SNM")
        default_inst = "identity,causal-break,noisy" if name == "memory-strength" \
            else "identity,causal-break"
        q.add_argument("--instrument", default=default_inst)
        q.add_argument("--ell", type=parse_ell, default=parse_ell("1-4"))
        q.add_argument("--aggregate", choices=("mean", "max"), default="mean")
        common(q)
        q.set_defaults(func=func)
        if name == "verify-bounds":
            q.add_argument("--bounds", default="thm1")
            q.add_argument("--seed", type=int)
            q.add_argument("--samples", type=int, default=200)

    v = sub.add_parser("validate", help="check a process-tensor or instrument file")
    v.add_argument("file")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
