"""One-bit compressed sensing recovery with a copula-coupled heavy-tailed
wavelet prior, plus baselines and a benchmark harness."""

from .baselines import BihtConfig, biht_recover
from .bench import ExperimentSpec, parse_spec, run_sweep, summarize, synthesize_test_image
from .copula import (
    DirectionalCopula,
    VineStructure,
    assemble_precision_correction,
    dvine_log_density,
    fit_sigma,
    gaussian_copula_density,
    v_transform,
)
from .dlomax import DLParams, fit_eta, fit_shape, sample_hierarchical
from .onebit import MeasurementEnsemble, generate_matrix, measure, reconstruction_snr, sign_consistency
from .vb import RecoveryConfig, VBState, jj_lambda, recover
from .wavelet import (
    NeighborhoodSet,
    PyramidLayout,
    WaveletPyramid,
    analyze,
    extract_neighborhoods,
    synthesize,
)

__all__ = [
    "BihtConfig",
    "biht_recover",
    "ExperimentSpec",
    "parse_spec",
    "run_sweep",
    "summarize",
    "synthesize_test_image",
    "DirectionalCopula",
    "VineStructure",
    "assemble_precision_correction",
    "dvine_log_density",
    "fit_sigma",
    "gaussian_copula_density",
    "v_transform",
    "DLParams",
    "fit_eta",
    "fit_shape",
    "sample_hierarchical",
    "MeasurementEnsemble",
    "generate_matrix",
    "measure",
    "reconstruction_snr",
    "sign_consistency",
    "RecoveryConfig",
    "VBState",
    "jj_lambda",
    "recover",
    "NeighborhoodSet",
    "PyramidLayout",
    "WaveletPyramid",
    "analyze",
    "extract_neighborhoods",
    "synthesize",
]

__version__ = "0.1.0"
