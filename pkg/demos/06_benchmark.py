"""Replication experiments: deterministic grids, CSV reports.

A benchmark sweeps an (n, seed) grid; each cell simulates, estimates,
evaluates and learns, then scores itself against the exact oracle.  Reports
are bytewise reproducible from the config alone; wall-clock timings go to a
separate file because they are not.
"""

import json
import pathlib
import tempfile

from confgame.harness import ExperimentConfig, run_experiment

out = pathlib.Path(tempfile.mkdtemp()) / "bench"
config = ExperimentConfig(
    fixture="t1",
    n_grid=(500, 2_000, 8_000),
    seeds=tuple(range(5)),
    out_dir=str(out),
)
paths = run_experiment(config)
print("config hash:", config.config_hash())
for name, path in paths.items():
    print(f"  {name}: {path}")

print("\nper-n medians:")
for line in pathlib.Path(paths["summary"]).read_text().splitlines():
    print(" ", line)

manifest = json.loads(pathlib.Path(paths["manifest"]).read_text())
print("\nfailures recorded in the manifest:", manifest["failures"])
