"""Run one or more experiment configs, optionally overriding flow settings.

    python3 scripts/run_configs.py configs/heat2.toml configs/linear_1d.toml
    python3 scripts/run_configs.py configs/scatter_pear.toml --dt 0.005 --n-samples 200
"""

import argparse
import json
import sys
import time
from dataclasses import replace
from pathlib import Path

from homotopy_bayes.config import load_config
from homotopy_bayes.experiment import run_experiment


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("configs", nargs="+")
    ap.add_argument("--dt", type=float)
    ap.add_argument("--n-samples", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--out-root", default="out")
    args = ap.parse_args(argv)

    status = 0
    for path in args.configs:
        cfg = load_config(path, args.seed)
        flow = cfg.flow
        if args.dt is not None:
            flow = replace(flow, dt=args.dt)
        if args.n_samples is not None:
            flow = replace(flow, n_samples=args.n_samples)
        cfg = replace(cfg, flow=flow)
        out = Path(args.out_root) / f"{Path(path).stem}_dt{flow.dt:g}_n{flow.n_samples}_s{cfg.seed}"
        start = time.perf_counter()
        try:
            summary = run_experiment(cfg, out, log=lambda m: print(m, file=sys.stderr))
        except Exception as exc:
            print(f"{path}: FAILED at stage {getattr(exc, 'stage', '?')}: {type(exc).__name__}: {exc}")
            status = 1
            continue
        summary.pop("comparison", None)
        summary["seconds"] = round(time.perf_counter() - start, 1)
        print(f"{path}: {json.dumps(summary)}")
    return status


if __name__ == "__main__":
    sys.exit(main())
