"""Variant comparison on synthetic geo-temporal data.

Pretrains each requested variant over several seeds on one generated
dataset, fits a frozen linear probe per run, and prints held-out top-1
(single view and temporally aggregated) as a table. Medians per variant
are appended at the bottom.

Typical desk run (about five minutes):

    python scripts/desk_benchmark.py --areas 2000 --classes 8 --epochs 20
"""

from __future__ import annotations

import argparse
import csv
import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from geossl.data import SyntheticSpec, generate_synthetic, split_manifest
from geossl.evaluate import evaluate_probe, extract_features, train_linear_probe
from geossl.geocluster import fit_kmeans_restarts
from geossl.trainer import VARIANTS, TrainConfig, pretrain


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--areas", type=int, default=2000)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--views", type=int, default=3, help="views per area")
    p.add_argument("--rho", type=float, default=0.9,
                   help="probability that class follows the latent geo-center")
    p.add_argument("--temporal-noise", type=float, default=0.5)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=0.05)
    p.add_argument("--k", type=int, default=None,
                   help="geo clusters (default: 2x classes)")
    p.add_argument("--holdout", type=float, default=0.2)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--variants", nargs="+", default=["moco", "moco+tp", "moco+geo", "moco+geo+tp"],
                   choices=list(VARIANTS))
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--csv", type=pathlib.Path, default=None,
                   help="also write per-run rows to this CSV")
    return p.parse_args()


def main() -> int:
    args = parse_args()
    k = args.k if args.k is not None else 2 * args.classes

    spec = SyntheticSpec(
        n_areas=args.areas, n_classes=args.classes,
        min_views=args.views, max_views=args.views,
        h=32, w=32, rho=args.rho, temporal_noise=args.temporal_noise,
    )
    manifest = generate_synthetic(spec, seed=args.data_seed)
    train, hold = split_manifest(manifest, args.holdout, seed=args.data_seed)
    geo = fit_kmeans_restarts([(a.lat, a.lon) for a in train.areas], k,
                              seed=args.data_seed, n_restarts=10)
    print(f"{train.n_areas} train / {hold.n_areas} held-out areas, "
          f"{k} geo clusters (inertia {geo.inertia:.1f})")

    header = f"{'variant':<14}{'seed':>5}{'single':>9}{'temporal':>10}{'probe-train':>13}{'secs':>7}"
    print(header)
    print("-" * len(header))
    rows = []
    for variant in args.variants:
        for seed in args.seeds:
            t0 = time.time()
            cfg = TrainConfig(variant=variant, epochs=args.epochs,
                              batch_size=args.batch_size, lr=args.lr, seed=seed)
            ckpt, _ = pretrain(train, geo if "geo" in variant else None, cfg)
            feats = extract_features(ckpt, train)
            probe, train_acc = train_linear_probe(feats.features, feats.labels, train.n_classes)
            reports = evaluate_probe(ckpt, probe, hold)
            row = {
                "variant": variant, "seed": seed,
                "single_top1": reports["single"].top1,
                "temporal_top1": reports["temporal"].top1,
                "probe_train_top1": train_acc,
                "seconds": round(time.time() - t0, 1),
            }
            rows.append(row)
            print(f"{variant:<14}{seed:>5}{row['single_top1']:>9.4f}"
                  f"{row['temporal_top1']:>10.4f}{train_acc:>13.4f}{row['seconds']:>7.1f}")

    print("-" * len(header))
    for variant in args.variants:
        single = np.median([r["single_top1"] for r in rows if r["variant"] == variant])
        temporal = np.median([r["temporal_top1"] for r in rows if r["variant"] == variant])
        print(f"{variant:<14}{'med':>5}{single:>9.4f}{temporal:>10.4f}")

    if args.csv is not None:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
