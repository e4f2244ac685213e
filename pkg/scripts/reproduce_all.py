#!/usr/bin/env python3
"""Run every bundled reproduction config and print the headline numbers."""

import json
import sys
from pathlib import Path

from biphoton.cli import main

FIGURES = ("fig2", "fig3", "fig4", "fig5", "fig6", "purity")


def run(out_base: Path) -> int:
    for fig in FIGURES:
        out_dir = out_base / fig
        code = main(["reproduce", fig, "--out-dir", str(out_dir), "--quiet"])
        if code != 0:
            print(f"{fig}: FAILED (exit {code})")
            return code
        summary = json.loads((out_dir / "summary.json").read_text())
        derived = summary.get("derived", {})
        notes = []
        for key, val in derived.items():
            if key == "coherence":
                notes.append(f"lc = {val['length_um']:.1f} +/- {val['length_sigma_um']:.1f} um")
            elif key.startswith("visibility") and "value" in val:
                notes.append(f"{key} = {val['value']:.4f}")
            elif key == "verdet":
                notes.append(f"V = {val['verdet']:.1f} +/- {val['verdet_sigma']:.1f} rad/(T m)")
            elif key == "bell_fractions":
                fr = val["fractions"]
                notes.append("fractions " + ", ".join(f"{k}={v:.3f}" for k, v in sorted(fr.items())))
        print(f"{fig}: ok  {'; '.join(notes)}")
    return 0


if __name__ == "__main__":
    base = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("out")
    sys.exit(run(base))
