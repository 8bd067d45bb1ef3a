"""A few minutes of learning against the random reference.

Trains the agents for a handful of desk-scale episodes with small networks
and prints per-episode energy, completion time and deadline rate next to a
random policy on the same scenario. Expect energy to drop first. The random
policy wanders and pays for flight, while fresh learners hover.

    python demos/short_training.py [episodes]
"""

import sys
import warnings

from uavmec.config import make_config
from uavmec.runner import run_learning, run_reference

warnings.simplefilter("ignore", UserWarning)  # desk profile steps below the acceleration bound

episodes = int(sys.argv[1]) if len(sys.argv) > 1 else 5
small = {"gat_hidden": [16, 8], "gat_heads": 2, "gru_hidden": 16, "spatial_dim": 16,
         "shared_dim": 16, "actor_hidden": [32, 32], "critic_hidden": [32, 16], "window": 16}
cfg = make_config("desk", {"episodes": episodes, "learn": small})

learned = run_learning(cfg, seed=0)
rand = run_reference(cfg, seed=0, kind="random")

print(f"{'ep':>3} | {'learned: E kJ':>13} {'T s':>6} {'deadline':>8} | {'random: E kJ':>12} {'T s':>6} {'deadline':>8}")
for a, b in zip(learned.episodes, rand.episodes):
    print(f"{a.episode:3d} | {a.f_energy / 1e3:13.1f} {a.f_time:6.2f} {a.deadline_rate:8.3f} | "
          f"{b.f_energy / 1e3:12.1f} {b.f_time:6.2f} {b.deadline_rate:8.3f}")
print(f"\nconstraint audit (learned): {learned.audit}")
