"""How much beamforming gain does a 150 m sensing range cost?

Walks the radar-equation budget of the reference node: the gain needed
for a range and SINR target, the range a given gain buys, and how the
shadowing mode (echo blocked once or on both legs) moves the answer.

Run:  python demos/link_budget_tour.py
"""

import numpy as np

from fdisac.link_budget import BudgetParams, gain_range_table, required_gain, sensing_range

params = BudgetParams()
print("Reference budget: 30 dBm, 28 GHz, RCS 20 dBsm, path-loss exponent 2.86,")
print("noise -87 dBm + 7 dB NF, 20 dB shadowing per blocked leg.\n")

for mode in ("round_trip", "one_way"):
    p = params.replace(shadow_mode=mode)
    g = required_gain(150.0, 10.0, p)
    print(f"{mode:>10}: {g:5.1f} dB of TX+RX gain reaches 150 m at 10 dB SINR")

# a 16-element subarray gives about 12 dB per side
g_node = 2 * 10 * np.log10(16)
print(f"\nTwo 16-element subarrays give {g_node:.1f} dB combined; that reaches "
      f"{sensing_range(params.replace(combined_gain_db=g_node)):.1f} m (round trip).")

print("\nRange [m] vs combined gain, per SINR target (round trip):")
rows = gain_range_table(np.arange(20, 61, 10))
sinrs = sorted({r[2] for r in rows})
print("gain dB " + "".join(f"{s:>10.0f} dB" for s in sinrs))
for g in sorted({r[0] for r in rows}):
    cells = [r[1] for r in rows if r[0] == g]
    print(f"{g:7.0f} " + "".join(f"{c:13.1f}" for c in cells))
