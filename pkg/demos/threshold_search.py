"""Walk through feature extraction and the double-threshold search on a small dataset.

    python3 demos/threshold_search.py
"""

import numpy as np

from octx import fdtgs, glcm, pipeline, synth

ds = synth.generate(n_frames=20, seed=1)
table = pipeline.extract(ds.frames)
print(f"{len(table)} patches, {table.gt.mean():.1%} lesion")

scores = glcm.fuse_score(table.fplus)
ts, state, trace = fdtgs.search(scores, table.gt)
print(f"thresholds low={ts.d1:.4f} high={ts.d2:.4f} after {state.iteration} rounds")
for it, val, lo, hi in trace[:6]:
    print(f"  round {it:2d}: objective {val:.4f} at ({lo:.4f}, {hi:.4f})")

part = fdtgs.partition(scores, ts.d1, ts.d2)
rp, ns = fdtgs.select_rp_ns(part)
print(f"reliable positives {len(rp)}, negatives {len(ns)}, "
      f"uncertain {len(scores) - len(rp) - len(ns)}")
print(f"label purity: rp {table.gt[rp].mean():.3f}, ns {1 - table.gt[ns].mean():.3f}")

best = fdtgs.exhaustive_grid(scores, table.gt, resolution=201)
print(f"201-grid optimum {np.round(best[1], 4)} for comparison")
