"""Two qubits point-coupled to a 1D waveguide: entanglement generation,
manipulation and detection by guided photons."""

from .model import (
    ConcurrenceTrace,
    Direction,
    PhysicalParams,
    QubitBasisPopulations,
    TwoQubitDensityMatrix,
    WavepacketSpec,
    assemble_density_matrix,
    wavepacket_amplitude,
    wavepacket_momentum_amplitude,
    wootters_concurrence,
    x_state_concurrence,
    xi_concurrence,
)

__version__ = "0.1.0"
