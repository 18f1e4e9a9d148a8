# Dev scratchpad: closed-loop tuning for the two-bus scenario (not shipped).
import time

import numpy as np

from gridspike.plant import (
    ConverterParams, GridTopology, MicrogridSimulator, ControllerGains,
)


def two_bus(load1=10.0, load2=10.0, line_g=2.0, a=1.0):
    topo = GridTopology(
        n=2,
        adjacency=np.array([[0.0, a], [a, 0.0]]),
        line_conductance=np.array([[0.0, line_g], [line_g, 0.0]]),
        loads=(("resistance", load1), ("resistance", load2)),
    )
    params = [ConverterParams(), ConverterParams()]
    return params, topo


def report(trace, rated=500.0, v_ref=48.0, label=""):
    p = trace.p
    dp = np.abs(p[:, 0] - p[:, 1])
    vbar_err = np.abs(trace.v_bar.mean(axis=1) - v_ref)
    print(f"--- {label}")
    for frac in (0.25, 0.5, 0.75, 1.0):
        k = int(frac * (trace.n_ticks - 1))
        print(
            f" t={trace.t[k]:.3f}s  v={trace.v[k]}  i={trace.i[k]}  "
            f"P={p[k]}  |dP|={dp[k]:.3f} ({100*dp[k]/rated:.3f}%)  "
            f"|vbar-ref|={vbar_err[k]:.4f} ({100*vbar_err[k]/v_ref:.4f}%)"
        )


if __name__ == "__main__":
    params, topo = two_bus()
    sim = MicrogridSimulator(params, topo, v_ref=48.0)
    t0 = time.time()
    tr = sim.run(0.6)
    print(f"baseline 0.6 s run in {time.time()-t0:.2f} s wall")
    report(tr, label="no disturbance, balanced 10 ohm loads")

    # asymmetric loads force actual sharing through the line
    params, topo = two_bus(load1=6.0, load2=15.0)
    sim = MicrogridSimulator(params, topo, v_ref=48.0)
    tr = sim.run(0.6)
    report(tr, label="asymmetric loads 6/15 ohm")

    # load step at 0.5 s
    params, topo = two_bus()
    sim = MicrogridSimulator(params, topo, v_ref=48.0)
    ev = [{"time_s": 0.5, "kind": "load_step", "target_node": 0, "magnitude": 5.0}]
    t0 = time.time()
    tr = sim.run(1.5, events=ev)
    print(f"load-step 1.5 s run in {time.time()-t0:.2f} s wall")
    report(tr, label="load step 10->5 ohm at node 0, t=0.5")
    k0 = int(0.5 / tr.dt_ctrl)
    print(" around step:", tr.v[k0 - 2: k0 + 8, 0])
