"""Random multilinear forms: finite-group obstruction, operator norms, degree
reduction, trace moments and random-matrix experiments."""
from .finite_group import GroupSpec, obstruction_report
from .harness import ScanConfig, ScanResult, fit_exponent, run_scan
from .linear_forms import FormFamily, LinearForm, change_of_variables, validate_family
from .operator import MultilinearInstance, op_norm_bruteforce, op_norm_lower, maximal_norm_lower
from .random_matrix import MatrixModel, sample_matrix
from .random_measure import SelectorModel, SignedMeasure, sample_r, shifted_product
from .reduction import reduce, verify_cs_step, verify_exceptional_bound
from .trace import TraceConfig, expected_trace_exact, matrix_trace_exact

__version__ = "0.1.0"
