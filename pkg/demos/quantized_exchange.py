"""How much does gradient-ranked quantisation save on one model exchange?

Parameters with large recent gradients get up to 16 bits and quiet ones
get as few as 4. We quantise a random 10k-parameter vector, check the
reconstruction error against the half-step bound, then build one wire
message both ways and compare sizes.

    python demos/quantized_exchange.py
"""

import numpy as np

from uavmec.config import make_config
from uavmec.fedlearn import (bit_width_schedule, comm_cost, decode, dequantize, encode,
                             make_message, quantize)

rng = np.random.default_rng(0)
theta = rng.normal(scale=0.1, size=10_000)
grads = rng.standard_cauchy(size=theta.size)

bits = bit_width_schedule(grads, 4, 16)
blob = quantize(theta, bits)
err = np.abs(dequantize(blob) - theta)
bound = np.ptp(theta) / (2 * (2.0 ** bits - 1))
print(f"mean bits {bits.mean():.2f}; max error {err.max():.2e}; "
      f"within half-step bound: {np.all(err <= bound)}")

for quantize_on in (True, False):
    fc = make_config("desk", {"dt": 8.0, "episode_len": 320.0, "fed": {"quantize": quantize_on}}).fed
    msg = make_message(1, {"vel": theta}, {"vel": grads}, rep=0.9, fc=fc)
    raw = encode(msg)
    back = decode(raw, names=["vel"])
    assert np.array_equal(back.blobs[0][1].codes, msg.blobs[0][1].codes)
    label = "quantised " if quantize_on else "32-bit    "
    print(f"{label} charged {comm_cost(msg):>7d} B   on the wire {len(raw):>7d} B")
