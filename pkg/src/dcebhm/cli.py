"""Command-line entry point: ``dcebhm <subcommand> ...``.

Every failure prints one line starting with ``dcebhm: error:`` on stderr and
exits nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import baseline, posterior
from .sampler import ChainSamples, McmcConfig, initial_state, run_chain
from .studyio import SimulationSpec, load_study, save_study, simulate_study

PROG = "dcebhm"
log = logging.getLogger(PROG)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(2, f"{PROG}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="only print errors")
    common.add_argument("--out", type=Path, help="output file or directory")

    p = _Parser(prog=PROG, description="Bayesian hierarchical modelling of DCE-MRI studies")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="draw a synthetic study with known truth")
    s.add_argument("--spec", type=Path, help="JSON simulation spec (defaults if omitted)")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    d = McmcConfig()
    f = sub.add_parser("fit", parents=[common], help="run the MCMC sampler on a study")
    f.add_argument("study", type=Path, help="study manifest (JSON)")
    f.add_argument("--seed", type=int, default=d.seed)
    f.add_argument("--burnin", type=int, default=d.burn_in)
    f.add_argument("--iters", type=int, default=d.iterations)
    f.add_argument("--thin", type=int, default=d.thin)
    f.add_argument("--init", choices=("nls", "default"), default="nls",
                   help="start from per-voxel least-squares fits (default) or fixed values")
    f.set_defaults(func=cmd_fit)

    m = sub.add_parser("summarize", parents=[common], help="posterior summaries and density curves")
    m.add_argument("chain", type=Path, help="chain file (CSV with JSON sidecar)")
    m.set_defaults(func=cmd_summarize)

    t = sub.add_parser("test", parents=[common], help="treatment-effect tests")
    src = t.add_mutually_exclusive_group(required=True)
    src.add_argument("chain", type=Path, nargs="?", help="chain file: report P(beta_1 > 0)")
    src.add_argument("--wilcoxon", type=Path, metavar="CSV",
                     help="paired CSV with 'pre' and 'post' columns")
    t.set_defaults(func=cmd_test)

    b = sub.add_parser("baseline", parents=[common], help="voxel-wise NLS fits and ROI medians")
    b.add_argument("study", type=Path, help="study manifest (JSON)")
    b.set_defaults(func=cmd_baseline)
    return p


def _say(args, *lines) -> None:
    if not args.quiet:
        for line in lines:
            print(line)


def cmd_simulate(args) -> int:
    spec = SimulationSpec()
    if args.spec is not None:
        spec = SimulationSpec.from_dict(json.loads(args.spec.read_text()))
    out = args.out or Path(f"study_seed{args.seed}.json")
    data, truth = simulate_study(spec, args.seed)
    save_study(data, out)
    truth_path = out.with_name(out.stem + "_truth.json")
    truth.save(truth_path)
    _say(args, f"study: {out}", f"truth: {truth_path}")
    return 0


def cmd_fit(args) -> int:
    data = load_study(args.study)
    config = McmcConfig(burn_in=args.burnin, iterations=args.iters, thin=args.thin, seed=args.seed)
    fits = baseline.fit_study(data) if args.init == "nls" else None
    init = initial_state(data, fits)
    chain = run_chain(config, data, init, progress=not args.quiet)
    out = args.out or args.study.with_name(args.study.stem + "_chain.csv")
    chain.save(out)
    acc = chain.acceptance
    _say(args, f"chain: {out} ({chain.n_draws} draws)",
         f"acceptance: psi {acc['psi']:.3f}, vp {acc['vp']:.3f}")
    return 0


def cmd_summarize(args) -> int:
    chain = ChainSamples.load(args.chain)
    out = args.out or args.chain.with_name(args.chain.stem + "_summary")
    out.mkdir(parents=True, exist_ok=True)
    summaries = posterior.chain_summaries(chain)
    extra = {"prob_positive.beta1": posterior.prob_positive(chain.beta[:, 0]),
             "prob_positive.beta2": posterior.prob_positive(chain.beta[:, 1])}
    posterior.write_summary_json(summaries, out / "summary.json", extra)

    for scan in (1, 2):
        draws = posterior.study_level_draws(chain, scan)
        if np.unique(draws).size >= 2:
            posterior.kde(draws).to_csv(out / f"density_study_ktrans_scan{scan}.csv")
        for j in range(1, chain.layout.n_patients + 1):
            draws = posterior.patient_level_draws(chain, j, scan)
            if np.unique(draws).size >= 2:
                posterior.kde(draws).to_csv(out / f"density_patient{j}_ktrans_scan{scan}.csv")
    with open(out / "voxel_medians.csv", "w") as fh:
        fh.write("scan,patient,voxel,ktrans_median\n")
        for i in (1, 2):
            for j in range(1, chain.layout.n_patients + 1):
                for k, v in enumerate(posterior.voxel_median_map(chain, i, j), start=1):
                    fh.write(f"{i},{j},{k},{float(v)!r}\n")

    lines = []
    for scan in (1, 2):
        s = summaries[f"study.ktrans.scan{scan}"]
        lo, hi = s.interval()
        lines.append(f"study K^trans scan {scan}: median {s.median:.4g} [{lo:.4g}, {hi:.4g}]")
    pc = summaries["study.ktrans.percent_change"]
    lines.append(f"study K^trans change: {pc.median:+.2f}%")
    lines.append(f"summaries: {out}")
    _say(args, *lines)
    return 0


def cmd_test(args) -> int:
    if args.wilcoxon is not None:
        pre, post = baseline.read_paired_csv(args.wilcoxon)
        res = baseline.wilcoxon_one_sided(pre, post)
        print(f"wilcoxon: n={res.n_effective} w_plus={res.w_plus:g} p={res.p_value:.6f}")
        return 0
    chain = ChainSamples.load(args.chain)
    p = posterior.prob_positive(chain.beta[:, 0])
    print(f"prob_positive(beta_1) = {p:.4f} over {chain.n_draws} draws")
    return 0


def cmd_baseline(args) -> int:
    data = load_study(args.study)
    out = args.out or args.study.with_name(args.study.stem + "_baseline")
    out.mkdir(parents=True, exist_ok=True)
    fits = baseline.fit_study(data)
    baseline.write_fits_csv(data.layout, fits, out / "nls_fits.csv")
    medians = baseline.roi_medians(data.layout, fits)
    baseline.write_medians_csv(medians, out / "roi_medians.csv")
    n_ok = sum(f.converged for f in fits)
    lines = [f"fits: {n_ok}/{len(fits)} converged", f"outputs: {out}"]
    ok = np.all(np.isfinite(medians), axis=0)
    if ok.sum() >= 1:
        try:
            res = baseline.wilcoxon_one_sided(medians[0, ok], medians[1, ok])
            lines.append(f"wilcoxon: n={res.n_effective} w_plus={res.w_plus:g} p={res.p_value:.6f}")
        except ValueError as exc:
            lines.append(f"wilcoxon: not computed ({exc})")
    _say(args, *lines)
    return 0


def table1_path() -> Path:
    """Location of the bundled per-patient ROI-median fixture (table1.csv)."""
    return Path(str(resources.files("dcebhm") / "data" / "table1.csv"))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"{PROG}: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
