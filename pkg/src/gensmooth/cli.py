"""Command-line entry point: ``gensmooth <command> ...``.

Every command prints JSON or CSV on stdout. Failures print one line on
stderr and exit with a code that identifies the error kind.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import errors
from .harness import ExperimentConfig, RegretReport, load_instance, run_experiment
from .measure import build_uniform_cover, vc_dimension
from .privacy import MechanismSpec, accuracy_trials, required_sample_size
from .smoothness import (
    FRAGMENTATION_CUTOFF,
    construct_certificate,
    fragmentation_number,
    tolerance_profile,
    verify_certificate,
)

EXIT_CODES = {
    "error": 1,
    "input": 3,
    "capacity": 4,
    "instance": 5,
    "malformed": 6,
    "normalization": 7,
    "range": 8,
}


def _emit(obj) -> None:
    sys.stdout.write(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _dec(x: float) -> str:
    return repr(float(x))


def _eps_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from None


def cmd_certify(args) -> None:
    inst = load_instance(args.instance)
    if args.eps_seq:
        args.eps = (args.eps or []) + args.eps_seq
    if args.eps:
        cert = construct_certificate(inst.family, args.eps)
        scales = [{"eps": s.eps, "selections": [list(x) for x in s.selections], "total": s.total,
                   "total_used": s.total_used, "delta": s.delta} for s in cert.scales]
    else:
        if inst.base is None or inst.profile is None:
            raise errors.InputError("give --eps, or an instance with both a base and a profile")
        cert = verify_certificate(inst.family, inst.base, inst.profile)
        scales = []
    _emit({
        "verified": cert.verified,
        "witness": cert.witness,
        "base": list(cert.base.decimals) if cert.base.decimals else [_dec(v) for v in cert.base.probs],
        "breakpoints": [[_dec(z), _dec(v)] for z, v in cert.profile.breakpoints],
        "eq1_holds": getattr(cert, "eq1_holds", None),
        "scales": scales,
    })


def cmd_fragment(args) -> None:
    inst = load_instance(args.instance)
    mode = args.mode or ("exact" if inst.family.n <= FRAGMENTATION_CUTOFF else "greedy")
    out = []
    for eps in args.eps:
        w = fragmentation_number(inst.family, eps, mode=mode)
        masses = [_dec(inst.family[k].mass(part)) for part, k in zip(w.parts, w.witnesses)]
        out.append({"eps": eps, "count": w.count, "parts": w.parts, "witnesses": w.witnesses,
                    "masses": masses, "exact": w.exact})
    _emit(out)


def _report_text(report: RegretReport, fmt: str) -> str:
    return report.plotdata() if fmt == "plotdata" else report.to_csv()


def cmd_simulate(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    report = run_experiment(cfg)
    sys.stdout.write(_report_text(report, args.format))


def cmd_lowerbound(args) -> None:
    cfg = ExperimentConfig.load(args.config)
    kind = cfg.adversary["kind"]
    if kind not in ("threshold-hiding", "fragmentation"):
        raise errors.InputError("lowerbound needs a threshold-hiding or fragmentation adversary")
    report = run_experiment(cfg)
    eps = float(cfg.adversary["eps"])
    audit = []
    for t, mean, se in report.summary():
        if kind == "threshold-hiding":
            # realizable stream: realized regret is the mistake count
            bound, form = eps * t / 8, "eps*T/8 (mistakes)"
            mean, se = next((m, s) for h, m, s in report.summary("regret") if h == t)
        else:
            n = report.metadata["fragmentation"]["count"]
            bound, form = 0.1 * math.sqrt(eps * t * math.log(n)), "0.1*sqrt(eps*T*ln N)"
        audit.append({"T": t, "mean": mean, "stderr": se, "bound": bound, "form": form, "holds": mean >= bound})
    _emit({"audit": audit, "metadata": report.metadata})


def cmd_report(args) -> None:
    report = RegretReport.from_csv(Path(args.input).read_text())
    sys.stdout.write(_report_text(report, args.format))


def cmd_private(args) -> None:
    inst = load_instance(args.instance)
    if inst.base is None:
        raise errors.InputError("private needs an instance with a base measure")
    comparator = inst.hypothesis(args.hypotheses)
    profile = inst.profile or tolerance_profile(inst.family, inst.base, np.linspace(0, 1, 201))
    delta_cover = profile.inverse(args.eps)
    cover = build_uniform_cover(comparator, inst.base, max(delta_cover, 1e-12))
    d = vc_dimension(comparator)
    size = required_sample_size(d, args.eps, args.delta, args.alpha, profile, cover_size=len(cover.indices))
    target = args.target if args.target is not None else len(comparator) // 2
    result = accuracy_trials(MechanismSpec(cover.cover, args.alpha), inst.family[args.member],
                             comparator[target], args.noise, args.m or size.m, args.trials, args.seed,
                             comparator)
    sys.stdout.write("trial,excess_error,sampled_hypothesis\n")
    for i, (e, h) in enumerate(zip(result.excess, result.sampled)):
        sys.stdout.write(f"{i},{float(e)!r},{cover.indices[int(h)]}\n")
    sys.stderr.write(
        f"m={result.m} (statistical {size.statistical:.1f}, privacy {size.privacy:.1f}, C={size.constant}); "
        f"success rate at 2*eps: {result.success_rate(2 * args.eps):.4f}\n"
    )


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gensmooth", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("certify", help="construct or verify a smoothness certificate")
    c.add_argument("--instance", required=True)
    c.add_argument("--eps", type=float, nargs="*", help="strictly decreasing scales; omit to verify the instance's own base/profile")
    c.add_argument("--eps-seq", type=_eps_list, help="the same scales as one comma-separated list")
    c.set_defaults(func=cmd_certify)

    f = sub.add_parser("fragment", help="fragmentation numbers with witnesses")
    f.add_argument("--instance", required=True)
    f.add_argument("--eps", type=float, nargs="+", required=True)
    f.add_argument("--mode", choices=["exact", "greedy"])
    f.set_defaults(func=cmd_fragment)

    s = sub.add_parser("simulate", help="run a regret experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--format", choices=["csv", "plotdata"], default="csv")
    s.set_defaults(func=cmd_simulate)

    lb = sub.add_parser("lowerbound", help="run a lower-bound adversary and audit the bound")
    lb.add_argument("--config", required=True)
    lb.set_defaults(func=cmd_lowerbound)

    r = sub.add_parser("report", help="re-emit a CSV report")
    r.add_argument("--in", dest="input", required=True)
    r.add_argument("--format", choices=["csv", "plotdata"], default="csv")
    r.set_defaults(func=cmd_report)

    pr = sub.add_parser("private", help="accuracy trials of the exponential-mechanism learner")
    pr.add_argument("--instance", required=True)
    pr.add_argument("--alpha", type=float, required=True)
    pr.add_argument("--eps", type=float, required=True)
    pr.add_argument("--delta", type=float, required=True)
    pr.add_argument("--trials", type=int, required=True)
    pr.add_argument("--hypotheses", help="hypothesis family name in the instance")
    pr.add_argument("--member", type=int, default=0, help="family member generating the data")
    pr.add_argument("--target", type=int, help="index of the labelling hypothesis")
    pr.add_argument("--noise", type=float, default=0.0)
    pr.add_argument("--m", type=int, help="override the sample size")
    pr.add_argument("--seed", type=int, default=0)
    pr.set_defaults(func=cmd_private)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except errors.GensmoothError as e:
        sys.stderr.write(f"gensmooth: {e.code} error: {e}\n")
        return EXIT_CODES.get(e.code, 1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
