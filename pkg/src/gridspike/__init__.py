"""DC microgrid co-simulation with event-triggered spiking-network
remote-state inference and noise-resiliency experiments."""

__version__ = "0.1.0"

from .neurons import (
    KernelParams,
    lif_frequency_response,
    lif_simulate,
    lif_step,
    refractory_kernel,
    synaptic_kernel,
)
from .network import SrmNetwork, load_network, save_network, srm_layer_step
from .plant import (
    ControllerGains,
    ControllerState,
    ConverterParams,
    ConverterState,
    GridTopology,
    MicrogridSimulator,
    SimulationDivergenceError,
    Trace,
    control_errors,
    network_flows,
    observer_step,
    step_converter,
    voltage_command,
)

__all__ = [
    "__version__",
    "KernelParams",
    "synaptic_kernel",
    "refractory_kernel",
    "lif_step",
    "lif_simulate",
    "lif_frequency_response",
    "SrmNetwork",
    "srm_layer_step",
    "save_network",
    "load_network",
    "ConverterParams",
    "ConverterState",
    "GridTopology",
    "ControllerGains",
    "ControllerState",
    "MicrogridSimulator",
    "Trace",
    "SimulationDivergenceError",
    "step_converter",
    "observer_step",
    "control_errors",
    "voltage_command",
    "network_flows",
]
