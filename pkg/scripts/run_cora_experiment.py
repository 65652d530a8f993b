"""CORA end-to-end runs over several seeds and modes, with wall-clock timing.

Expects <data-dir>/edges.txt and <data-dir>/attributes.csv. With --standin the
CORA-sized synthetic graph is generated instead (for runtime estimates only).

    python3 scripts/run_cora_experiment.py --data-dir $HCAD_DATA_DIR/cora --seeds 0 1 2 --modes full euclidean
"""
import argparse
import json
import tempfile
import time
from pathlib import Path

import numpy as np

from hcad.cli import main as hcad
from hcad.graph import save_graph
from hcad.synthetic import cora_sized_graph


def run(data: Path, out: Path, seed: int, mode: str, extra: list[str]) -> dict:
    target = out / f"{mode}_seed{seed}"
    started = time.perf_counter()
    code = hcad(["--threads", "1", "pipeline", "--edges", str(data / "edges.txt"),
                 "--attrs", str(data / "attributes.csv"), "--preset", "cora", "--seed", str(seed),
                 "--mode", mode, "--out-dir", str(target), *extra])
    if code != 0:
        raise SystemExit(f"pipeline failed for {mode} seed {seed} (exit {code})")
    auc = json.loads((target / "eval.json").read_text())["auc_mean"]
    return {"mode": mode, "seed": seed, "auc": auc, "minutes": (time.perf_counter() - started) / 60}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--data-dir", default=None)
    p.add_argument("--standin", action="store_true")
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--modes", nargs="+", default=["full"], choices=["full", "no_decoder", "euclidean"])
    p.add_argument("--out-dir", default=None)
    p.add_argument("extra", nargs=argparse.REMAINDER, help="further pipeline flags after --")
    args = p.parse_args()
    extra = [a for a in args.extra if a != "--"]

    out = Path(args.out_dir or tempfile.mkdtemp(prefix="cora_runs_"))
    out.mkdir(parents=True, exist_ok=True)
    if args.standin:
        data = out / "standin"
        data.mkdir(exist_ok=True)
        save_graph(cora_sized_graph(seed=0), data / "edges.txt", data / "attributes.csv")
    elif args.data_dir:
        data = Path(args.data_dir)
    else:
        raise SystemExit("give --data-dir or --standin")

    rows = []
    for mode in args.modes:
        for seed in args.seeds:
            rows.append(run(data, out, seed, mode, extra))
            print(json.dumps(rows[-1]), flush=True)
    for mode in args.modes:
        aucs = [r["auc"] for r in rows if r["mode"] == mode]
        print(f"{mode}: mean AUC {np.mean(aucs):.4f} (std {np.std(aucs):.4f}) over {len(aucs)} seeds")
    (out / "summary.json").write_text(json.dumps(rows, indent=2) + "\n")


if __name__ == "__main__":
    main()
