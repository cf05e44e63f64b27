"""Plant label noise and let the two-stream agent clean it.

    python3 demos/noise_filtering.py [noise_rate]
"""

import sys

from octx import agent, pipeline, synth

rate = float(sys.argv[1]) if len(sys.argv) > 1 else 0.2
table = pipeline.extract(synth.generate(n_frames=30, seed=0).frames)
base, cleaned, res = agent.noise_recovery_run(table.fplus, table.fminus, table.gt, rate, seed=0,
                                              epochs=5)
for epoch, stream, removed, f1, reward in res.trace:
    r = "-" if reward is None else f"{reward:+.3f}"
    print(f"epoch {epoch} {stream}: removed {removed:3d}  F1 {f1:.3f}  reward {r}")
print(f"validation F1 without agent {base:.3f}, with agent {cleaned:.3f}")
