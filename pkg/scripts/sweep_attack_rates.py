#!/usr/bin/env python3
"""Sweep the attacker's injection rate cap and report attack efficacy.

For each rate, runs a paired attack-free / physical-attack scenario with the
same seed and prints the EB count inflation and the real-vehicle waiting
increase over the analysis window.
"""
import argparse
import sys
from pathlib import Path

from atsclab.attacker import AttackConfig, ControllerAwarePolicy
from atsclab.harness import ScenarioConfig, run_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rates", type=float, nargs="+",
                    default=[60.0, 120.0, 240.0, 360.0])
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--out", default="runs/rate_sweep")
    args = ap.parse_args()

    out = Path(args.out)
    free = run_scenario(ScenarioConfig(seed=args.seed), out / "attack_free")
    free_mean = (sum(s.eb_count for s in free.analysis_samples)
                 / len(free.analysis_samples))
    print(f"attack-free: EB mean count {free_mean:.3f}, "
          f"EB waiting {free.eb_real_waiting:.0f} s")

    for rate in args.rates:
        cfg = ScenarioConfig(
            seed=args.seed,
            attack=AttackConfig(policy=ControllerAwarePolicy(max_rate_vph=rate)))
        arts = run_scenario(cfg, out / f"rate_{rate:g}")
        mean = (sum(s.eb_count for s in arts.analysis_samples)
                / len(arts.analysis_samples))
        print(f"rate {rate:6.1f} vph: {len(arts.inject_times):4d} injections, "
              f"EB mean count {mean:7.3f} ({mean / free_mean:5.2f}x), "
              f"EB waiting {arts.eb_real_waiting:7.0f} s "
              f"({arts.eb_real_waiting / max(free.eb_real_waiting, 1.0):5.2f}x)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
