"""
The five variants on one workload
=================================

A two-second skewed run where every transaction spans two nodes. 2PC pays
for each one; the rearranging variants move replicas so that almost
everything runs on a single node.
"""

from pathlib import Path

from lion.bench import VARIANTS, RunConfig, compare, compare_csv, run

cfg = RunConfig.load(Path(__file__).resolve().parent.parent / "configs" / "quick.ini")

reports = []
for name in VARIANTS:
    report, _ = run(cfg.with_overrides(run__variant=name), seed=0)
    reports.append(report.data)
    mix = report.data["path_mix"]
    print(f"{name:9s} {report.throughput:8.0f} txn/s   single {mix['SingleNode']:.2f}  "
          f"remastered {mix['Remastered']:.2f}  2pc {mix['Distributed2PC']:.2f}")

print()
print(compare_csv(compare(reports)), end="")
