"""Process matrices for dissipative Rydberg-blockade gates.

Monte Carlo wave-function simulation of pi-pulse gate sequences on neutral
atoms, chi-matrix extraction via Choi-state evolution, channel concatenation
rules for whole circuits, and trace-distance benchmarking of competing
implementations.
"""

from .basis import MATRIX_UNIT, PAULI, OperatorBasis, structure_constants
from .circuit import (Circuit, ComparisonReport, Gate, chi_via_concatenation,
                      chi_via_full_simulation, compare_implementations,
                      ideal_chi_library, toffoli_circuit)
from .errors import (ConfigError, DimensionCapError, NumericalAbortError,
                     RydchiError, SchemaError)
from .linalg import (kron, partial_trace, permute_subsystems,
                     propagate_segment, trace_norm)
from .mcwf import (EnsembleResult, HamiltonianSegment, InstantUnitary,
                   JumpOperator, PulseSchedule, TrajectoryConfig,
                   evolve_trajectory, extract_chi, no_jump_estimate,
                   run_ensemble, trajectory_seed)
from .process import (ProcessMatrix, chi_from_kraus, embed, from_choi,
                      identity_chi, load_chi, parallel_concat,
                      project_to_qubit_subspace, save_chi, serial_concat,
                      to_choi, trace_distance)
from .rydberg import (EFFECTIVE3, FULL4, PRESETS, TABLE1_HZ, AtomParams,
                      EffectiveModel, RegisterModel, adiabatic_eliminate,
                      blockade_hamiltonian, build_cknot_sequence,
                      build_cnot_sequence, build_pi_pulse, jump_operators,
                      single_qubit_gate)

__version__ = "0.1.0"
