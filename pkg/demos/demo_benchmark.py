"""Sequence-length scaling of the scan kernel against quadratic attention.

The scan's cost is one recurrence step per token, so its log-log runtime
slope over length sits near 1. The attention baseline materializes an
L x L score matrix and lands near 2. Lengths are kept moderate here so the
demo finishes in seconds; the acceptance benchmark uses 256..4096.
"""

from dehazemamba.bench import format_bench, run_bench

result = run_bench(lengths=(128, 256, 512, 1024), channels=16, state_size=8,
                   warmup=1, repeats=5, seed=0)
print(format_bench(result), end="")

print(f"\nscan slope {result.scan_slope:.2f} (linear ~ 1), "
      f"attention slope {result.attention_slope:.2f} (quadratic ~ 2)")
ratios = [t2 / t1 for t1, t2 in zip(result.scan_times, result.scan_times[1:])]
print("scan time ratios per doubling:",
      " ".join(f"{r:.2f}" for r in ratios))
