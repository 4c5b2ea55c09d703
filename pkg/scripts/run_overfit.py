"""Overfit the desk model on one synthetic 8-frame sequence and report loss drop / code recovery."""
import argparse
import json
import time

from tkc.experiments import overfit_sanity


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--est-frames", type=int, default=1)
    ap.add_argument("--res-frames", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--lr", type=float, help="defaults to the desk preset rate")
    ap.add_argument("--out", help="optional JSON result path")
    args = ap.parse_args()

    t0 = time.time()

    def progress(row):
        if row["step"] == 1 or row["step"] % 100 == 0:
            print(f"step {row['step']:5d}  loss {row['total']:.4f}  frame {row['frame']:.4f}  "
                  f"kernel {row['kernel']:.4f}  {time.time() - t0:.0f}s", flush=True)

    res = overfit_sanity(args.steps, args.est_frames, args.res_frames, args.seed, args.lr, callback=progress)
    summary = {
        "initial_loss": res.initial_loss,
        "final_loss": res.final_loss,
        "ratio": res.ratio,
        "closer_fraction": res.closer_fraction,
        "est_l1": res.est_l1.tolist(),
        "dirac_l1": res.dirac_l1.tolist(),
        "seconds": time.time() - t0,
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
