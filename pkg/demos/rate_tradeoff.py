"""Rate paid for sensing: more targets and less power both cost throughput.

Averages the solver's DL rate over random scenes while sweeping the number
of sensed cars at 30 dBm, then the transmit budget with six cars. Runs
that cannot meet the sensing or saturation constraints are counted, not
averaged. A CSV of every run is written next to the console summary.

Run:  python demos/rate_tradeoff.py [runs] [out_dir]
"""

import sys
from pathlib import Path

from fdisac.simulator import aggregate, run_monte_carlo, write_rows_csv

runs = int(sys.argv[1]) if len(sys.argv) > 1 else 5
out = Path(sys.argv[2] if len(sys.argv) > 2 else "demo_out")
out.mkdir(parents=True, exist_ok=True)

for field, grid, unit in (("n_targets", [0, 2, 4, 6], "cars"),
                          ("tx_power_dbm", [20, 25, 30, 35, 40], "dBm")):
    rows = run_monte_carlo(n_runs=runs, sweep=(field, grid), simulate=False)
    write_rows_csv(out / f"tradeoff_{field}.csv", rows)
    print(f"\nSweep over {field} ({runs} scenes per point)")
    print(f"{unit:>6}  feasible  mean rate [bps/Hz]")
    for agg in aggregate(rows):
        print(f"{agg['value']:>6}  {agg['feasible_fraction']:8.0%}  {agg['rate_mean']:18.2f}")
print(f"\nPer-run rows written to {out}/")
