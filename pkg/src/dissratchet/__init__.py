"""Classical and quantum spectra of the dissipative kicked ratchet."""
__version__ = "0.1.0"

from .analysis import ScenarioResult, compare_spectra, equilibration_time, overlap_table
from .config import PRESETS, ScenarioConfig, parse_config
from .errors import (ChecksumError, ConfigurationError, ConvergenceError, DissRatchetError,
                     DomainError, FieldFileError, TruncatedPayloadError, UnknownKindError)
from .io import read_field, write_field
from .krylov import LinearOperatorHandle, SpectralSet, leading_spectrum
from .lindblad import (DensityMatrix, HilbertSpec, apply_superoperator, build_dissipative_blocks,
                       build_hilbert, build_propagator, choi_positivity_check)
from .mapcore import MapParams, NoiseSpec, PhasePoint, step, step_thermal
from .phasespace import PhaseField, UlamGrid
from .pipeline import run_pipeline
from .ulam import TransferMatrix, build_grid, build_transfer_matrix
from .wigner import ChordCutoff, chord_filter, overlap, weyl_symbol, wigner_field
