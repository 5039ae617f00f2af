"""How many analog taps does the canceller need?

For a solved design, places 0..64 greedy taps between the 8 TX and 8 RX
chains and reports the coupled-matrix residual and the worst RX-chain
power. Eight taps (one in eight chain pairs) bring the worst chain to
the ADC ceiling at the power the solver chose. What remains is mostly
target echo, which the taps leave alone by design, so more taps buy
little; with all 64 the direct SI no longer partly cancels the echo and
the total can even rise slightly.

Run:  python demos/canceller_taps.py [seed]
"""

import sys

import numpy as np

from fdisac import solve_op, table_scenario
from fdisac.cancellation import coupled_matrix, design_analog_canceller, residual_rf_power
from fdisac.signal_model import ChannelSet

seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
scene = table_scenario(seed=seed)
ch = ChannelSet(scene)
cfg = solve_op(scene, channels=ch)
bf = cfg.beamformer
c = coupled_matrix(ch.h_bb, bf.w_rf, bf.v_rf)
echo = ch.radar_matrix().entries
ceiling = scene.constraints.sat_spec.as_array().max()

print(f"Seed {seed}: ceiling {ceiling:.0f} dBm per RX chain\n")
print("taps  |C + A|_F        direct SI max [dBm]  direct+echo max [dBm]")
for n in (0, 1, 2, 4, 8, 16, 32, 64):
    canc = design_analog_canceller(ch.h_bb, bf.v_rf, bf.w_rf, n)
    fro = np.linalg.norm(c + canc.effective_matrix)
    direct = residual_rf_power(ch.h_bb, canc, bf.v_rf, bf.v_bb, bf.w_rf).max()
    total = residual_rf_power(ch.h_bb + echo, canc, bf.v_rf, bf.v_bb, bf.w_rf).max()
    print(f"{n:4d}  {fro:12.4e}  {direct:20.1f}  {total:21.1f}")
