"""Where should a task run?

Three UAVs hover near an IoT device. The device uploads a 2 MB task that needs
150 Mcycles. We time every simple offloading path of up to three UAVs and
print how the total splits into uplink, forwarding, queueing, compute and
return. The times come from the timing engine, and an independent brute-force
evaluator checks them.

    python demos/offload_paths.py
"""

import numpy as np

from uavmec.config import make_config
from uavmec.radio import Radio
from uavmec.tasking import Snapshot, Task, execute_path, oracle_best_path, oracle_enumerate

cfg = make_config("desk", {"dt": 8.0, "episode_len": 320.0})

# UAV 0 is closest to the device but already busy; UAV 2 is fast and idle.
snap = Snapshot(
    uav_pos=np.array([[500.0, 500.0, 100.0], [700.0, 500.0, 120.0], [550.0, 750.0, 90.0]]),
    cpu_freq=np.array([1.0e9, 1.5e9, 3.0e9]),
    queue_cycles=np.array([6e8, 1e8, 0.0]),
    active=np.ones(3, dtype=bool),
    device_loc=(480.0, 480.0),
    interference=np.zeros(3),
    radio=Radio(cfg.radio),
    r_comm=cfg.radio.r_comm,
    load_max=cfg.load_max,
    t_decision=cfg.t_decision,
)
task = Task(0, 0, cycles=150e6, in_bytes=2e6, out_bytes=0.3e6, deadline=8.0, created_at=0.0)

print(f"{'path':<12}{'uplink':>8}{'fwd':>8}{'queue':>8}{'cpu':>8}{'return':>8}{'total':>8}  oracle")
for path, t_oracle in oracle_enumerate(task, snap, max_hops=3):
    r = execute_path(task, path, snap)
    print(f"{'-'.join(map(str, path)):<12}{r.t_uplink:8.3f}{r.t_forward:8.3f}{r.t_queue:8.3f}"
          f"{r.t_compute:8.3f}{r.t_return + r.t_downlink:8.3f}{r.t_total:8.3f}  {t_oracle:.3f}")

best, t_best = oracle_best_path(task, snap, max_hops=3)
print(f"\nfastest: {'-'.join(map(str, best))} at {t_best:.3f} s (deadline {task.deadline} s)")
