"""Recompute the Carleman regression baselines and write them to tests/data.

Run only after an intentional change to the schemes or weights; the
regression test compares against the pinned values to 1e-6.
"""

import json
from pathlib import Path

from schnull.carleman import reference_values

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "carleman_baselines.json"


def main() -> None:
    vals = reference_values()
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(vals, indent=2, sort_keys=True) + "\n")
    for k, v in sorted(vals.items()):
        print(f"{k:45s} {v!r}")


if __name__ == "__main__":
    main()
