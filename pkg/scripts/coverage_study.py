"""Seeded replications of the desk-scale synthetic study.

Each replication simulates a study from the default SimulationSpec, fits it
from NLS starting values and records interval coverage of the generating
exp(alpha_1) and exp(beta_1), P(beta_1 > 0) and the realized acceptance
rates. Results go to a JSON file, one record per replication.

    python scripts/coverage_study.py --replications 100 --out coverage.json
"""

import argparse
import json
import logging
import time
from pathlib import Path

import numpy as np

from dcebhm import posterior
from dcebhm.baseline import fit_study
from dcebhm.sampler import McmcConfig, initial_state, run_chain
from dcebhm.studyio import SimulationSpec, simulate_study

log = logging.getLogger("coverage")


def replicate(r: int, spec: SimulationSpec, config: dict, data_seed_offset: int = 1000) -> dict:
    data, truth = simulate_study(spec, seed=data_seed_offset + r)
    chain = run_chain(McmcConfig(seed=r, **config), data, initial_state(data, fit_study(data)))
    a_lo, a_hi = posterior.study_level(chain, scan=1, l=1).interval(0.95)
    b_lo, b_hi = posterior.summarize(np.exp(chain.beta[:, 0])).interval(0.95)
    a_true, b_true = np.exp(truth.state.alpha[0]), np.exp(truth.state.beta[0])
    return {
        "replication": r,
        "alpha_interval": [a_lo, a_hi], "alpha_true": a_true, "alpha_cover": bool(a_lo <= a_true <= a_hi),
        "beta_interval": [b_lo, b_hi], "beta_true": b_true, "beta_cover": bool(b_lo <= b_true <= b_hi),
        "prob_positive": posterior.prob_positive(chain.beta[:, 0]),
        "acceptance": chain.acceptance,
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--replications", type=int, default=100)
    p.add_argument("--spec", type=Path, help="JSON simulation spec (defaults if omitted)")
    p.add_argument("--burnin", type=int, default=2_000)
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--thin", type=int, default=20)
    p.add_argument("--out", type=Path, default=Path("coverage.json"))
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    spec = SimulationSpec.from_dict(json.loads(args.spec.read_text())) if args.spec else SimulationSpec()
    config = dict(burn_in=args.burnin, iterations=args.iters, thin=args.thin)
    rows = []
    t0 = time.perf_counter()
    for r in range(args.replications):
        rows.append(replicate(r, spec, config))
        log.info("replication %d: prob_positive %.3f", r, rows[-1]["prob_positive"])
    n = len(rows)
    report = {
        "spec": spec.to_dict(), "config": config, "seconds": time.perf_counter() - t0,
        "alpha_coverage": sum(r["alpha_cover"] for r in rows) / n,
        "beta_coverage": sum(r["beta_cover"] for r in rows) / n,
        "reject_fraction": sum(r["prob_positive"] < 0.05 for r in rows) / n,
        "replications": rows,
    }
    args.out.write_text(json.dumps(report, indent=1) + "\n")
    print(f"exp(alpha_1) coverage {report['alpha_coverage']:.2f}, "
          f"exp(beta_1) coverage {report['beta_coverage']:.2f}, "
          f"P(beta_1 > 0) < 0.05 in {report['reject_fraction']:.2f} of {n}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
