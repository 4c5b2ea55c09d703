"""Est-1+Res-1 vs Est-3+Res-3 on a low-consistency synthetic benchmark, several seeds, same budget."""
import argparse
import csv
import sys
import time

from tkc.experiments import ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--configs", nargs="+", default=["1,1", "3,3"], help="est,res pairs")
    ap.add_argument("--steps", type=int, help="override the desk budget (20 epochs x 50 steps)")
    ap.add_argument("--out", help="CSV path for per-seed mean rows")
    args = ap.parse_args()
    configs = [tuple(int(v) for v in c.split(",")) for c in args.configs]

    t0 = time.time()

    def progress(row):
        print(f"seed {row['seed']}  {row['model']:<14}  {row['psnr']:.3f} dB / {row['ssim']:.4f}  "
              f"{time.time() - t0:.0f}s", flush=True)

    rows = ablation(configs, tuple(args.seeds), steps=args.steps, callback=progress)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["seed", "model", "psnr", "ssim"])
    for r in rows:
        w.writerow(["" if r["seed"] is None else r["seed"], r["model"], f"{r['psnr']:.4f}", f"{r['ssim']:.4f}"])
    if args.out:
        out.close()


if __name__ == "__main__":
    main()
