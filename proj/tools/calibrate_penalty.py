#!/usr/bin/env python3
"""Calibrate c_pen for a selection config.

Simulates replicates under a calibration seed, runs `nphmm select` once per
replicate with c_pen = 0, then rescores the stored likelihood tables over a
log-spaced c_pen grid. Prints the interval of c_pen on which every replicate
selects the target K and its geometric midpoint.
"""
import argparse
import json
import math
import pathlib
import re
import subprocess
import tempfile


def load_config(path):
    text = pathlib.Path(path).read_text()
    text = re.sub(r"^\s*//.*$", "", text, flags=re.M)
    return json.loads(text)


def chosen_k(rows, c_pen, r, n):
    best = None
    for row in rows:
        if row["status"] != "ok":
            continue
        size = row["K"] * row["M"] + row["K"] ** 2
        score = row["avg_log_likelihood"] - c_pen * size * math.log(n) ** r / n
        key = (score, -row["K"], -row["M"])
        if best is None or key > best[0]:
            best = (key, row["K"])
    return best[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("config")
    ap.add_argument("--binary", default="build/tools/nphmm")
    ap.add_argument("--seed", type=int, default=777)
    ap.add_argument("--replicates", type=int, default=10)
    ap.add_argument("--target-k", type=int, default=2)
    ap.add_argument("--work", default=None)
    args = ap.parse_args()

    cfg = load_config(args.config)
    n = cfg["n"]
    r = cfg["penalty"]["r"]
    work = pathlib.Path(args.work or tempfile.mkdtemp(prefix="calibrate_"))
    work.mkdir(parents=True, exist_ok=True)
    cfg.update(seed=args.seed, replicates=args.replicates, output_dir=str(work))
    cfg["penalty"] = {"c_pen": 0.0, "r": r}
    cfg_path = work / "config.json"
    cfg_path.write_text(json.dumps(cfg, indent=2))

    subprocess.run([args.binary, "simulate", "-c", str(cfg_path)], check=True, stdout=subprocess.DEVNULL)
    tables = []
    for rep in range(args.replicates):
        out = work / f"rep{rep}"
        subprocess.run([args.binary, "select", "-c", str(cfg_path), "--data", str(work / f"y_rep{rep}.csv"),
                        "--out", str(out)], check=True, stdout=subprocess.DEVNULL)
        tables.append(json.loads((out / "selection.json").read_text())["result"]["table"])
        print(f"replicate {rep} done", flush=True)

    grid = [10 ** (k / 50) for k in range(-150, 101)]
    good = [c for c in grid if all(chosen_k(t, c, r, n) == args.target_k for t in tables)]
    for c in grid[::10]:
        ks = [chosen_k(t, c, r, n) for t in tables]
        print(f"c_pen {c:10.4g}: K_hat = {ks}")
    if not good:
        print("no c_pen selects the target K in every replicate")
        return 1
    lo, hi = min(good), max(good)
    print(f"safe interval [{lo:.4g}, {hi:.4g}], geometric midpoint {math.sqrt(lo * hi):.4g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
