"""Leaky integrate-and-fire primitives: response kernels, membrane updates,
and the first-order frequency-domain view of the neuron.

The neuron is the usual RC picture: the membrane voltage integrates input
current through a leaky conductance and decays back to rest with time
constant ``tau_m``. Spiking layers built on top of these kernels live in
:mod:`gridspike.network`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "KernelParams",
    "synaptic_kernel",
    "refractory_kernel",
    "lif_step",
    "lif_simulate",
    "lif_frequency_response",
]


@dataclass(frozen=True)
class KernelParams:
    """Time constants and electrical constants of one neuron population.

    tau_m / tau_syn shape the synaptic rise-decay kernel, tau_ref the
    post-spike suppression kernel. ``g`` is the leak conductance, ``v_rest``
    the resting potential and ``u_thr`` the firing threshold.
    """

    tau_m: float = 20e-3
    tau_syn: float = 5e-3
    tau_ref: float = 10e-3
    g: float = 1.0
    v_rest: float = 0.0
    u_thr: float = 1.0

    def __post_init__(self) -> None:
        for name in ("tau_m", "tau_syn", "tau_ref"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.g <= 0.0:
            raise ValueError(f"leak conductance must be positive, got {self.g}")
        if self.tau_m == self.tau_syn:
            raise ValueError(
                "tau_m == tau_syn makes the synaptic kernel vanish identically; "
                "use distinct time constants"
            )
        if self.u_thr <= self.v_rest:
            raise ValueError("firing threshold must sit above the rest potential")


def synaptic_kernel(t, k: KernelParams):
    """Post-synaptic response ``exp(-t/tau_m) - exp(-t/tau_syn)`` for t >= 0.

    Zero at t = 0, positive for t > 0 whenever tau_m > tau_syn, and decays
    back to zero. Accepts scalars or arrays.
    """
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("kernel is causal; t must be non-negative")
    return np.exp(-t / k.tau_m) - np.exp(-t / k.tau_syn)


def refractory_kernel(t, k: KernelParams):
    """Post-spike feedback ``-exp(-t/tau_ref)``: -1 at the spike, decaying
    suppression afterwards. Accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("kernel is causal; t must be non-negative")
    return -np.exp(-t / k.tau_ref)


def lif_step(v_mem, i_in, k: KernelParams, dt: float, noise_std: float = 0.0, rng=None):
    """One Euler-Maruyama update of the leaky membrane.

    Integrates ``tau_m dV/dt = -(V - v_rest) + I/g`` plus an optional
    zero-mean Gaussian disturbance whose per-step standard deviation is
    ``noise_std * sqrt(dt / tau_m)``, so ensemble statistics do not depend
    on the step size. ``noise_std = 0`` recovers the deterministic neuron.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    if noise_std < 0.0:
        raise ValueError("noise_std must be non-negative")
    v_mem = np.asarray(v_mem, dtype=float)
    drift = (-(v_mem - k.v_rest) + np.asarray(i_in, dtype=float) / k.g) * (dt / k.tau_m)
    if noise_std == 0.0:
        return v_mem + drift
    if rng is None:
        rng = np.random.default_rng()
    kick = noise_std * math.sqrt(dt / k.tau_m) * rng.standard_normal(np.shape(v_mem))
    return v_mem + drift + kick


def lif_simulate(
    i_drive: np.ndarray,
    k: KernelParams,
    dt: float,
    noise_std: float = 0.0,
    rng=None,
    v0: float | np.ndarray | None = None,
):
    """Run `lif_step` over a drive series; returns the membrane trajectory.

    ``i_drive`` may be ``(n_steps,)`` for a single neuron or
    ``(n_steps, m)`` for m independent members sharing the drive (each
    member gets its own noise draws). The returned array has one extra
    leading sample holding the initial state.
    """
    i_drive = np.asarray(i_drive, dtype=float)
    n_steps = i_drive.shape[0]
    member_shape = i_drive.shape[1:]
    v = np.full(member_shape, k.v_rest, dtype=float) if v0 is None else np.broadcast_to(
        np.asarray(v0, dtype=float), member_shape
    ).copy()
    out = np.empty((n_steps + 1,) + member_shape, dtype=float)
    out[0] = v
    for t in range(n_steps):
        v = lif_step(v, i_drive[t], k, dt, noise_std=noise_std, rng=rng)
        out[t + 1] = v
    return out


def lif_frequency_response(omega, k: KernelParams):
    """Gain of the membrane's built-in first-order low-pass filter.

    Returns ``(gain, cutoff)`` where ``gain = 1 / (g * sqrt(1 + (tau_m w)^2))``
    evaluated at angular frequency ``omega`` (scalar or array) and
    ``cutoff = 1 / tau_m`` in rad/s.
    """
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be non-negative")
    gain = 1.0 / (k.g * np.sqrt(1.0 + (k.tau_m * omega) ** 2))
    cutoff = 1.0 / k.tau_m
    if gain.ndim == 0:
        return float(gain), cutoff
    return gain, cutoff


def measure_sine_gain(k: KernelParams, omega: float, dt: float | None = None) -> float:
    """Empirical membrane gain under a sinusoidal current drive.

    Simulates the neuron well past its settling time, then projects the
    steady-state response on the drive quadratures over an integer number
    of periods. Used to cross-check `lif_frequency_response`.
    """
    if omega <= 0:
        raise ValueError("omega must be positive for a sine probe")
    if dt is None:
        period = 2.0 * math.pi / omega
        dt = min(k.tau_m / 2000.0, period / 2000.0)
    settle = 8.0 * k.tau_m
    n_periods = 10
    period = 2.0 * math.pi / omega
    n_settle = int(round(settle / dt))
    n_meas = int(round(n_periods * period / dt))
    t = np.arange(n_settle + n_meas) * dt
    drive = np.sin(omega * t)
    v = lif_simulate(drive, k, dt)[1:]
    seg_t = t[n_settle:]
    seg_v = v[n_settle:] - k.v_rest
    # quadrature projection -> amplitude of the fundamental
    c = 2.0 * np.mean(seg_v * np.cos(omega * seg_t))
    s = 2.0 * np.mean(seg_v * np.sin(omega * seg_t))
    return float(math.hypot(c, s))
