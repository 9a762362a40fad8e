"""Show the four train/evaluation split geometries on one point cloud.

Positions mimic the measured layout: a 4 m x 2 m table. Each strategy keeps
roughly a tenth of the samples for evaluation; what differs is where that
tenth sits. The script prints the bounding box of each evaluation region and
dumps eval positions per strategy as CSV for external plotting.
"""

from pathlib import Path

import numpy as np

from csiloc import SplitStrategy, split_indices

rng = np.random.default_rng(5)
n = 17486
pos = np.column_stack([
    rng.uniform(0.0, 4.0, n),   # long axis
    rng.uniform(0.0, 2.0, n),   # short axis
    rng.uniform(0.8, 1.2, n),
])

out = Path("out/splits")
out.mkdir(parents=True, exist_ok=True)

for kind in ("random", "narrow", "wide", "within"):
    train_ids, eval_ids = split_indices(pos, SplitStrategy(kind, 0.1, seed=3))
    ev = pos[eval_ids]
    print(f"{kind:7s} eval {len(eval_ids):5d} samples; "
          f"x {ev[:,0].min():.2f}..{ev[:,0].max():.2f} m, "
          f"y {ev[:,1].min():.2f}..{ev[:,1].max():.2f} m")
    with open(out / f"eval_{kind}.csv", "w") as f:
        f.write("x_m,y_m\n")
        for x, y in ev[:, :2]:
            f.write(f"{x!r},{y!r}\n")

print(f"\neval position CSVs in {out}/ (plot x_m vs y_m to see the shapes)")
print("random scatters everywhere; narrow is a thin strip along the long edge; "
      "wide is a deeper strip along the short edge; within is a central cut-out")
