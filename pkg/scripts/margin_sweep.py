#!/usr/bin/env python3
"""Sweep the two-agent network over (gain, radius) and map the certified set.

The closed loop of two first-order agents with gain k and links within a
relative deviation r is robustly stable exactly when k^2 (1+r)^2 < 1, which
makes this sweep a sharp end-to-end check of the certifier: the certified
region must fill the inside of that boundary and never cross it.

Usage:
    python scripts/margin_sweep.py [--points 20] [--out sweep.txt] [--plot sweep.png]
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

import netiqc as nq


def two_agent_spec(gain: float, radius: float) -> nq.NetworkSpec:
    return nq.parse_network_spec({
        "graph": {"vertices": 2, "edges": [[1, 2]]},
        "agents": {"default": {"gain": float(gain), "pole": 1.0}},
        "uncertainty": {"default": {"class": "gain_bounded", "radius": float(radius)}},
    })


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--points", type=int, default=20, help="grid points per axis")
    parser.add_argument("--out", default=None, help="write the sweep table here")
    parser.add_argument("--plot", default=None, help="write a PNG of the certified set")
    args = parser.parse_args(argv)

    gains = np.linspace(0.05, 1.4, args.points)
    radii = np.linspace(0.0, 1.5, args.points)
    rows = ["# gain radius certified margin boundary_value"]
    certified = np.zeros((args.points, args.points), dtype=bool)
    mistakes = 0
    for i, k in enumerate(gains):
        for j, r in enumerate(radii):
            rep = nq.certify_network(two_agent_spec(k, r))
            eps = rep.per_link[0].epsilon_star
            eps_txt = f"{eps:.6e}" if np.isfinite(eps) else "-inf"
            boundary = (k * (1.0 + r)) ** 2
            certified[i, j] = rep.certified
            rows.append(f"{k:.4f} {r:.4f} {int(rep.certified)} {eps_txt} {boundary:.4f}")
            if rep.certified and boundary >= 1.0:
                mistakes += 1

    table = "\n".join(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table + "\n")
    else:
        print(table)
    n_cert = int(certified.sum())
    print(f"# certified {n_cert}/{args.points**2} points, "
          f"{mistakes} boundary violations", file=sys.stderr)

    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        ax.pcolormesh(radii, gains, certified, shading="nearest", cmap="Greens")
        rr = np.linspace(0.0, 1.5, 200)
        ax.plot(rr, 1.0 / (1.0 + rr), "k--", label="k(1+r) = 1")
        ax.set_xlabel("link deviation radius r")
        ax.set_ylabel("agent gain k")
        ax.set_ylim(gains[0], gains[-1])
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.plot, dpi=150)
        print(f"# wrote {args.plot}", file=sys.stderr)

    return 1 if mistakes else 0


if __name__ == "__main__":
    sys.exit(main())
