from .waveform import ControlWaveform, Slice, jaksch_waveform, load_waveform, save_waveform, time_optimal_waveform
from .pulse import (DecayParameters, GammaMatrix, PlaquetteGeometry, apply_measurement_drain,
                    build_step_propagator, pair_channel, propagate_gamma)
from .chi import ChiDiagonal, extract_chi_diagonal
