"""End-to-end run on one synthetic study through the command-line interface.

Simulates a desk-scale study, runs the sampler, writes posterior summaries,
the voxel-wise baseline and the Bayesian one-sided test into ``--workdir``.

    python scripts/desk_demo.py --workdir demo
"""

import argparse
from pathlib import Path

from dcebhm.cli import main as cli


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--workdir", type=Path, default=Path("demo"))
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--iters", type=int, default=20_000)
    args = p.parse_args(argv)

    wd = args.workdir
    wd.mkdir(parents=True, exist_ok=True)
    study, chain = wd / "study.json", wd / "chain.csv"
    steps = [
        ["simulate", "--seed", str(args.seed), "--out", str(study)],
        ["fit", str(study), "--seed", str(args.seed), "--burnin", "2000", "--iters", str(args.iters),
         "--thin", "20", "--out", str(chain), "--quiet"],
        ["summarize", str(chain), "--out", str(wd / "summary")],
        ["test", str(chain)],
        ["baseline", str(study), "--out", str(wd / "baseline")],
    ]
    for argv_ in steps:
        print("$ dcebhm " + " ".join(argv_))
        code = cli(argv_)
        if code:
            return code
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
