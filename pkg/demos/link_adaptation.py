"""Compare adaptive and fixed modulation on a fading channel.

    python3 demos/link_adaptation.py
"""

from octx import multirate as mr

trace = mr.fading_trace(seed=0)
res = mr.run_link(trace)
print(f"adaptive: {res.state.goodput_rate / 1e3:.1f} kbit/s, {res.state.switch_count} switches")
for s in mr.DEFAULT_TABLE:
    fixed = mr.run_fixed(trace, s)
    print(f"fixed {s.name:>5}: {fixed.state.goodput_rate / 1e3:.1f} kbit/s")

rows = mr.speed_accuracy_sweep(lambda mask: 0.98, mr.default_sweep_configs(), trace, 500)
print("\nconfig           fps    acc  index")
for name, fps, acc, idx in rows:
    print(f"{name:<14} {fps:6.1f} {acc:6.3f} {idx:6.3f}")
