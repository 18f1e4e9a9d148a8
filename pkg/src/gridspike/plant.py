"""Fixed-step simulation of an N-converter DC microgrid.

Each node is an averaged (duty-ratio) DC-DC converter feeding a bus
capacitor: ``L di/dt = d*v_in - v`` and ``C dv/dt = i - i_out`` where
``i_out`` collects the local load draw and the net tie-line outflow.
Control is layered: a per-node voltage/current PI cascade turns the
voltage command into a duty ratio, while the slower restoration layer
builds that command from a dynamic-consensus estimate of the network
average voltage plus a neighbor power-sharing correction.

The plant integrates with classic fixed-step RK4 at ``dt_plant``;
controllers sample at ``dt_ctrl`` with zero-order hold in between. Runs
are strictly sequential and deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

__all__ = [
    "ConverterParams",
    "ConverterState",
    "GridTopology",
    "ControllerGains",
    "ControllerState",
    "SimulationDivergenceError",
    "step_converter",
    "observer_step",
    "control_errors",
    "voltage_command",
    "network_flows",
    "simulate_open_loop",
    "MicrogridSimulator",
    "Trace",
    "TRACE_COLUMNS",
]

TRACE_COLUMNS = [
    "t", "node", "v", "i", "p", "v_bar", "v_star",
    "est_v_j", "est_i_j", "event_V", "event_I", "event_O",
]


class SimulationDivergenceError(RuntimeError):
    """Plant state became non-finite; carries the node and simulated time."""

    def __init__(self, node: int, time_s: float):
        super().__init__(f"simulation diverged at node {node}, t = {time_s:.6f} s")
        self.node = node
        self.time_s = time_s


@dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of one converter stage."""

    inductance: float = 1e-3        # H
    capacitance: float = 1e-3       # F
    v_in: float = 100.0             # V, input source
    rated_power: float = 500.0      # W

    def __post_init__(self) -> None:
        if self.inductance <= 0 or self.capacitance <= 0:
            raise ValueError("inductance and capacitance must be positive")
        if self.v_in <= 0:
            raise ValueError("input voltage must be positive")
        if self.rated_power <= 0:
            raise ValueError("rated power must be positive")


@dataclass
class ConverterState:
    """Per-node electrical state."""

    v: float          # bus voltage (V)
    i: float          # inductor / output current (A)
    d: float = 0.5    # equivalent voltage gain, 0..1
    i_in: float = 0.0  # input-side source current (A)

    def validate(self) -> None:
        if not (0.0 <= self.d <= 1.0):
            raise ValueError(f"duty gain out of range: {self.d}")
        for name in ("v", "i", "d", "i_in"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite converter state field {name}")


@dataclass(frozen=True)
class GridTopology:
    """Electrical and communication structure of the microgrid.

    ``adjacency`` holds the symmetric consensus weights a_kj (zero
    diagonal); ``line_conductance`` the tie-line conductances in siemens
    (same sparsity); ``loads`` one entry per node, each either
    ``("resistance", ohms)`` or ``("power", watts)``.
    """

    n: int
    adjacency: np.ndarray
    line_conductance: np.ndarray
    loads: tuple = ()

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=float)
        g = np.asarray(self.line_conductance, dtype=float)
        if adj.shape != (self.n, self.n) or g.shape != (self.n, self.n):
            raise ValueError("adjacency and conductance must be n x n")
        if not np.allclose(adj, adj.T):
            raise ValueError("consensus weights must be symmetric")
        if np.any(adj < 0) or np.any(g < 0):
            raise ValueError("weights and conductances must be non-negative")
        if np.any(np.diag(adj) != 0) or np.any(np.diag(g) != 0):
            raise ValueError("self-edges are not allowed")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "line_conductance", g)

    @property
    def incidence(self) -> np.ndarray:
        """Binary node-connection matrix J (1 where a tie-line exists)."""
        return (self.line_conductance > 0).astype(int)

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(np.triu(self.line_conductance, k=1))
        return list(zip(rows.tolist(), cols.tolist()))

    def is_connected(self) -> bool:
        if self.n == 1:
            return True
        link = (self.line_conductance > 0) | (self.adjacency > 0)
        seen = {0}
        frontier = [0]
        while frontier:
            k = frontier.pop()
            for j in np.nonzero(link[k])[0]:
                if j not in seen:
                    seen.add(int(j))
                    frontier.append(int(j))
        return len(seen) == self.n


@dataclass(frozen=True)
class ControllerGains:
    """PI gains for the control stack; defaults are tuned for the
    48 V / 500 W two-bus defaults in :mod:`gridspike.config`."""

    kp_restore: float = 0.8     # average-voltage restoration, V/V
    ki_restore: float = 60.0    # V/(V s)
    kp_share: float = 1.0e-3    # power sharing, V/W
    ki_share: float = 0.20      # V/(W s)
    kp_voltage: float = 2.0     # bus-voltage loop, A/V
    ki_voltage: float = 600.0   # A/(V s)
    kp_current: float = 3.0     # inductor-current loop, V/A
    ki_current: float = 2000.0  # V/(A s)


@dataclass
class ControllerState:
    """Integrator and observer state of one node's control stack."""

    v_bar: float                 # consensus estimate of the network average voltage
    v_ref: float                 # global voltage reference seen by this node
    gains: ControllerGains = field(default_factory=ControllerGains)
    xi_restore: float = 0.0      # restoration PI integrator (V)
    xi_share: float = 0.0        # sharing PI integrator (V)
    xi_voltage: float = 0.0      # voltage-loop integrator (A)
    xi_current: float = 0.0      # current-loop integrator (V)
    clamp_frac: float = 0.10     # anti-windup: outer integrators within +/- frac * v_ref


# --------------------------------------------------------------------------
# Plant primitives
# --------------------------------------------------------------------------

def _converter_rhs(v, i, d, params: ConverterParams, i_line_net):
    dv = (i - i_line_net) / params.capacitance
    di = (d * params.v_in - v) / params.inductance
    return dv, di


def step_converter(
    state: ConverterState,
    params: ConverterParams,
    i_line_net: float,
    dt: float,
    node: int = 0,
    t: float = 0.0,
) -> ConverterState:
    """Advance one converter by ``dt`` with RK4, holding the duty gain and
    the net line/load draw ``i_line_net`` constant over the step.

    The capacitor balance is ``C dv/dt = i - i_line_net`` (the caller folds
    local load and tie-line flows into ``i_line_net``) and the inductor
    follows ``L di/dt = d*v_in - v``. Raises
    :class:`SimulationDivergenceError` when the state leaves the finite
    range.
    """
    if not (0.0 < dt <= 1e-4):
        raise ValueError("dt must be positive and at most 1e-4 s")
    state.validate()
    v, i = state.v, state.i
    k1 = _converter_rhs(v, i, state.d, params, i_line_net)
    k2 = _converter_rhs(v + 0.5 * dt * k1[0], i + 0.5 * dt * k1[1], state.d, params, i_line_net)
    k3 = _converter_rhs(v + 0.5 * dt * k2[0], i + 0.5 * dt * k2[1], state.d, params, i_line_net)
    k4 = _converter_rhs(v + dt * k3[0], i + dt * k3[1], state.d, params, i_line_net)
    v_new = v + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    i_new = i + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    if not (np.isfinite(v_new) and np.isfinite(i_new)):
        raise SimulationDivergenceError(node, t)
    return replace(state, v=v_new, i=i_new, i_in=state.d * i_new)


def observer_step(
    v_local: float,
    v_bar_all: np.ndarray,
    topology: GridTopology,
    k: int,
    dt: float,
    v_local_prev: float | None = None,
) -> float:
    """One dynamic-average-consensus update of node ``k``'s estimate.

    The estimate is the local voltage plus an integrated disagreement with
    the neighbors, so for static inputs every node converges to the
    arithmetic mean of the initial local samples. ``v_local_prev`` carries
    the previous local sample so the estimate tracks local changes exactly;
    omit it when the local signal is static.
    """
    if not 0 <= k < topology.n:
        raise ValueError(f"node index {k} out of range")
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_bar_all = np.asarray(v_bar_all, dtype=float)
    disagreement = float(topology.adjacency[k] @ (v_bar_all - v_bar_all[k]))
    prev = v_local if v_local_prev is None else v_local_prev
    return float(v_bar_all[k] + (v_local - prev) + dt * disagreement)


def control_errors(
    k: int,
    v_bar_k: float,
    powers: np.ndarray,
    topology: GridTopology,
    v_ref: float,
    stale: np.ndarray | None = None,
):
    """Restoration and sharing errors for node ``k``.

    Returns ``(e_restore, e_share)`` where ``e_restore = v_ref - v_bar_k``
    (volts) and ``e_share`` is the adjacency-weighted sum of neighbor power
    mismatches (watts). ``powers`` may be ground truth or estimates; the
    optional ``stale`` mask drops neighbors whose estimates are currently
    unusable so a dead node cannot drag the survivors.
    """
    powers = np.asarray(powers, dtype=float)
    if not np.all(np.isfinite(powers)):
        raise ValueError("powers must be finite")
    e_restore = v_ref - v_bar_k
    weights = topology.adjacency[k].copy()
    if stale is not None:
        weights = np.where(np.asarray(stale, dtype=bool), 0.0, weights)
    e_share = float(weights @ (powers - powers[k]))
    return e_restore, e_share


def voltage_command(
    ctrl: ControllerState,
    e_restore: float,
    e_share: float,
    v_ref_k: float,
    dt: float,
) -> float:
    """PI restoration + PI sharing corrections on top of the node reference.

    Each integrator updates before the output is formed and is clamped to
    ``+/- clamp_frac * v_ref`` (anti-windup; outage scenarios wind up
    otherwise). Mutates ``ctrl`` and returns the voltage command.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = ctrl.gains
    clamp = ctrl.clamp_frac * ctrl.v_ref
    ctrl.xi_restore = float(np.clip(ctrl.xi_restore + g.ki_restore * e_restore * dt, -clamp, clamp))
    ctrl.xi_share = float(np.clip(ctrl.xi_share + g.ki_share * e_share * dt, -clamp, clamp))
    dv_restore = g.kp_restore * e_restore + ctrl.xi_restore
    dv_share = g.kp_share * e_share + ctrl.xi_share
    return v_ref_k + dv_restore + dv_share


def network_flows(voltages: np.ndarray, topology: GridTopology):
    """Tie-line currents from the resistive line model.

    Returns ``(edge_flows, net)``: one signed current per edge of
    ``topology.edges()`` (positive from the lower-indexed node to the
    higher), and the per-node net outflow whose total is zero.
    """
    if not topology.is_connected():
        raise ValueError("topology must be connected")
    voltages = np.asarray(voltages, dtype=float)
    g = topology.line_conductance
    edge_flows = np.array([g[a, b] * (voltages[a] - voltages[b]) for a, b in topology.edges()])
    net = (g * (voltages[:, None] - voltages[None, :])).sum(axis=1)
    return edge_flows, net


def _load_currents(voltages: np.ndarray, loads) -> np.ndarray:
    out = np.zeros_like(voltages)
    for idx, (kind, value) in enumerate(loads):
        if kind == "resistance":
            out[idx] = voltages[idx] / value
        elif kind == "power":
            out[idx] = value / max(voltages[idx], 1e-6)
        else:
            raise ValueError(f"unknown load kind {kind!r}")
    return out


def simulate_open_loop(
    params: list[ConverterParams],
    topology: GridTopology,
    v0: np.ndarray,
    i0: np.ndarray,
    duties: np.ndarray,
    dt: float,
    n_steps: int,
    outage: np.ndarray | None = None,
):
    """Integrate the coupled plant with fixed duty gains (no controllers).

    Used for integrator-order checks and charge-balance audits. Returns the
    ``(n_steps+1, n)`` voltage and current trajectories.
    """
    n = topology.n
    v = np.asarray(v0, dtype=float).copy()
    i = np.asarray(i0, dtype=float).copy()
    d = np.asarray(duties, dtype=float)
    out_v = np.empty((n_steps + 1, n))
    out_i = np.empty((n_steps + 1, n))
    out_v[0], out_i[0] = v, i
    dead = np.zeros(n, dtype=bool) if outage is None else np.asarray(outage, dtype=bool)
    cap = np.array([p.capacitance for p in params])
    ind = np.array([p.inductance for p in params])
    vin = np.array([p.v_in for p in params])
    g = topology.line_conductance
    loads = topology.loads

    def rhs(v, i):
        i_line = (g * (v[:, None] - v[None, :])).sum(axis=1)
        i_out = i_line + _load_currents(v, loads)
        dv = (i - i_out) / cap
        di = (d * vin - v) / ind
        # a dead converter's free-wheel path blocks reverse current
        di = np.where(dead & (i <= 0.0) & (di < 0.0), 0.0, di)
        return dv, di

    for step in range(n_steps):
        k1 = rhs(v, i)
        k2 = rhs(v + 0.5 * dt * k1[0], i + 0.5 * dt * k1[1])
        k3 = rhs(v + 0.5 * dt * k2[0], i + 0.5 * dt * k2[1])
        k4 = rhs(v + dt * k3[0], i + dt * k3[1])
        v = v + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        i = i + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if dead.any():
            i = np.where(dead, np.maximum(i, 0.0), i)
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
            bad = int(np.argmax(~(np.isfinite(v) & np.isfinite(i))))
            raise SimulationDivergenceError(bad, (step + 1) * dt)
        out_v[step + 1], out_i[step + 1] = v, i
    return out_v, out_i


# --------------------------------------------------------------------------
# Closed-loop simulator
# --------------------------------------------------------------------------

@dataclass
class Trace:
    """Time-indexed record of a closed-loop run, one sample per control tick.

    All per-node arrays have shape ``(n_ticks, n)``. ``est_v`` / ``est_i``
    are the neighbor-state estimates *held by* each node (NaN when the node
    has no estimator attached); the ``event_*`` planes flag triggering, and
    ``signals`` carries controller internals used by the event codec.
    """

    t: np.ndarray
    v: np.ndarray
    i: np.ndarray
    p: np.ndarray
    v_bar: np.ndarray
    v_star: np.ndarray
    est_v: np.ndarray
    est_i: np.ndarray
    event_v: np.ndarray
    event_i: np.ndarray
    event_o: np.ndarray
    signals: dict
    dt_ctrl: float
    disturbances: list = field(default_factory=list)

    @property
    def n_nodes(self) -> int:
        return self.v.shape[1]

    @property
    def n_ticks(self) -> int:
        return self.v.shape[0]


class MicrogridSimulator:
    """Closed-loop co-simulation: plant at ``dt_plant``, control stack and
    optional inference bridge at ``dt_ctrl``.

    ``inference`` is any object with a
    ``step(tick, measurements) -> (est_v, est_i, events, stale)`` method
    (see :class:`gridspike.experiments.InferenceBridge`); pass ``None`` to
    run the oracle-only loop. ``power_source`` selects whether the sharing
    error uses ground-truth powers or the estimates the bridge produces.
    """

    def __init__(
        self,
        params: list[ConverterParams],
        topology: GridTopology,
        v_ref: float,
        gains: ControllerGains | None = None,
        dt_plant: float = 1e-5,
        dt_ctrl: float = 1e-4,
        power_source: str = "oracle",
        inference=None,
        stale_after_s: float = 0.5,
    ):
        if dt_ctrl < dt_plant or (dt_ctrl / dt_plant) % 1.0 > 1e-9:
            raise ValueError("dt_ctrl must be an integer multiple of dt_plant")
        if power_source not in ("oracle", "estimates"):
            raise ValueError("power_source must be 'oracle' or 'estimates'")
        if power_source == "estimates" and inference is None:
            raise ValueError("power_source='estimates' needs an inference bridge")
        if not topology.is_connected():
            raise ValueError("topology must be connected")
        self.params = params
        self.topology = topology
        self.v_ref = float(v_ref)
        self.gains = gains if gains is not None else ControllerGains()
        self.dt_plant = float(dt_plant)
        self.dt_ctrl = float(dt_ctrl)
        self.substeps = int(round(dt_ctrl / dt_plant))
        self.power_source = power_source
        self.inference = inference
        self.stale_after_s = float(stale_after_s)

    def steady_duty(self, node: int) -> float:
        return self.v_ref / self.params[node].v_in

    def run(self, duration_s: float, events: list | None = None) -> Trace:
        """Simulate ``duration_s`` seconds from the flat-start equilibrium
        guess, applying the scheduled disturbances.

        ``events`` entries are dicts with ``time_s``, ``kind`` in
        ``{load_step, outage, reference_step}``, ``target_node`` and
        ``magnitude`` (new load resistance in ohms, ignored, or the new
        reference voltage respectively).
        """
        topo = self.topology
        n = topo.n
        n_ticks = int(round(duration_s / self.dt_ctrl))
        events = sorted(events or [], key=lambda e: e["time_s"])
        for ev in events:
            if ev["kind"] not in ("load_step", "outage", "reference_step"):
                raise ValueError(f"unknown event kind {ev['kind']!r}")

        loads = list(topo.loads)
        v = np.full(n, self.v_ref)
        i = _load_currents(v, loads) + (topo.line_conductance * (v[:, None] - v[None, :])).sum(axis=1)
        duties = np.array([self.steady_duty(k) for k in range(n)])
        dead = np.zeros(n, dtype=bool)
        v_ref_node = np.full(n, self.v_ref)

        ctrls = [
            ControllerState(v_bar=v[k], v_ref=self.v_ref, gains=self.gains)
            for k in range(n)
        ]
        # current-loop integrators start at the equilibrium inductor drive
        for k in range(n):
            ctrls[k].xi_voltage = i[k]

        cap = np.array([p.capacitance for p in self.params])
        ind = np.array([p.inductance for p in self.params])
        vin = np.array([p.v_in for p in self.params])
        g = topo.line_conductance

        cols = ("v", "i", "p", "v_bar", "v_star", "est_v", "est_i",
                "event_v", "event_i", "event_o")
        rec = {c: np.zeros((n_ticks, n)) for c in cols}
        rec["est_v"][:] = np.nan
        rec["est_i"][:] = np.nan
        sig = {c: np.zeros((n_ticks, n)) for c in
               ("d", "i_ref", "i_in", "e_i", "e_v", "i_flow_net", "i_load", "active")}
        t_axis = np.arange(n_ticks) * self.dt_ctrl
        disturbances = []

        v_prev_sample = v.copy()
        next_event = 0

        def rhs(v_, i_, duties_, loads_, dead_):
            i_line = (g * (v_[:, None] - v_[None, :])).sum(axis=1)
            i_out = i_line + _load_currents(v_, loads_)
            dv = (i_ - i_out) / cap
            di = (duties_ * vin - v_) / ind
            di = np.where(dead_ & (i_ <= 0.0) & (di < 0.0), 0.0, di)
            return dv, di

        for tick in range(n_ticks):
            t = t_axis[tick]
            # scheduled disturbances take effect at the start of their tick
            while next_event < len(events) and events[next_event]["time_s"] <= t + 1e-12:
                ev = events[next_event]
                node = int(ev.get("target_node", 0))
                if ev["kind"] == "load_step":
                    loads[node] = ("resistance", float(ev["magnitude"]))
                elif ev["kind"] == "outage":
                    dead[node] = True
                elif ev["kind"] == "reference_step":
                    v_ref_node[:] = float(ev["magnitude"])
                disturbances.append({"time_s": float(ev["time_s"]), "kind": ev["kind"],
                                     "node": node})
                next_event += 1

            # --- sample and control at dt_ctrl ---------------------------
            powers_true = v * i
            _, net_flow = network_flows(v, topo)
            i_load_now = _load_currents(v, loads)

            meas = {
                "t": t, "tick": tick, "v": v.copy(), "i": i.copy(),
                "flow_net": net_flow.copy(), "dead": dead.copy(),
            }

            est_v_row = np.full(n, np.nan)
            est_i_row = np.full(n, np.nan)
            events_row = np.zeros((n, 3))
            stale = np.zeros(n, dtype=bool)
            active_row = np.zeros(n)

            v_bar_vec = np.array([c.v_bar for c in ctrls])
            new_vbar = np.empty(n)
            for k in range(n):
                new_vbar[k] = observer_step(
                    v[k], v_bar_vec, topo, k, self.dt_ctrl, v_local_prev=v_prev_sample[k]
                )
            for k in range(n):
                ctrls[k].v_bar = new_vbar[k]
            v_prev_sample = v.copy()

            powers_ctrl = powers_true
            if self.inference is not None:
                est_v_row, est_i_row, events_row, stale, active_row = self.inference.step(meas)
                if self.power_source == "estimates":
                    powers_ctrl = np.where(np.isnan(est_v_row * est_i_row),
                                           powers_true, est_v_row * est_i_row)
                    # each node k uses its *estimate* of neighbor powers but its
                    # own true local power; with n=2 the row estimate is exactly
                    # the neighbor's power as seen from k, handled in the bridge.

            v_star = np.empty(n)
            i_ref = np.empty(n)
            duties_new = np.empty(n)
            for k in range(n):
                c = ctrls[k]
                if dead[k]:
                    v_star[k] = v_ref_node[k]
                    i_ref[k] = 0.0
                    duties_new[k] = 0.0
                    continue
                e_restore, e_share = control_errors(
                    k, c.v_bar, powers_ctrl, topo, v_ref_node[k],
                    stale=stale if self.power_source == "estimates" else None,
                )
                v_star[k] = voltage_command(c, e_restore, e_share, v_ref_node[k], self.dt_ctrl)
                # inner cascade: voltage PI -> current reference -> current PI -> duty
                e_v_track = v_star[k] - v[k]
                c.xi_voltage = float(np.clip(
                    c.xi_voltage + c.gains.ki_voltage * e_v_track * self.dt_ctrl,
                    -3.0 * self.params[k].rated_power / self.v_ref,
                    3.0 * self.params[k].rated_power / self.v_ref,
                ))
                i_ref[k] = c.gains.kp_voltage * e_v_track + c.xi_voltage
                e_i_track = i_ref[k] - i[k]
                c.xi_current = float(np.clip(
                    c.xi_current + c.gains.ki_current * e_i_track * self.dt_ctrl,
                    -0.3 * vin[k], 0.3 * vin[k],
                ))
                u_l = c.gains.kp_current * e_i_track + c.xi_current
                duties_new[k] = float(np.clip((u_l + v[k]) / vin[k], 0.0, 1.0))

            duties = np.where(dead, 0.0, duties_new)

            rec["v"][tick] = v
            rec["i"][tick] = i
            rec["p"][tick] = powers_true
            rec["v_bar"][tick] = new_vbar
            rec["v_star"][tick] = v_star
            rec["est_v"][tick] = est_v_row
            rec["est_i"][tick] = est_i_row
            rec["event_v"][tick] = events_row[:, 0]
            rec["event_i"][tick] = events_row[:, 1]
            rec["event_o"][tick] = events_row[:, 2]
            sig["d"][tick] = duties
            sig["i_ref"][tick] = i_ref
            sig["i_in"][tick] = duties * i
            sig["e_i"][tick] = v_star - v          # voltage-loop tracking error (V)
            sig["e_v"][tick] = i_ref - i           # current-loop tracking error (A)
            sig["i_flow_net"][tick] = net_flow
            sig["i_load"][tick] = i_load_now
            sig["active"][tick] = active_row

            # --- plant substeps at dt_plant -------------------------------
            for sub in range(self.substeps):
                k1 = rhs(v, i, duties, loads, dead)
                k2 = rhs(v + 0.5 * self.dt_plant * k1[0], i + 0.5 * self.dt_plant * k1[1],
                         duties, loads, dead)
                k3 = rhs(v + 0.5 * self.dt_plant * k2[0], i + 0.5 * self.dt_plant * k2[1],
                         duties, loads, dead)
                k4 = rhs(v + self.dt_plant * k3[0], i + self.dt_plant * k3[1],
                         duties, loads, dead)
                v = v + self.dt_plant / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
                i = i + self.dt_plant / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
                if dead.any():
                    i = np.where(dead, np.maximum(i, 0.0), i)
            if not (np.all(np.isfinite(v)) and np.all(np.isfinite(i))):
                bad = int(np.argmax(~(np.isfinite(v) & np.isfinite(i))))
                raise SimulationDivergenceError(bad, t)

        return Trace(
            t=t_axis,
            v=rec["v"], i=rec["i"], p=rec["p"], v_bar=rec["v_bar"], v_star=rec["v_star"],
            est_v=rec["est_v"], est_i=rec["est_i"],
            event_v=rec["event_v"], event_i=rec["event_i"], event_o=rec["event_o"],
            signals=sig, dt_ctrl=self.dt_ctrl, disturbances=disturbances,
        )
