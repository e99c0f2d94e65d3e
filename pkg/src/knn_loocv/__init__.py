"""k-NN regression with k chosen by leave-one-out cross-validation."""

from .dataset import (Dataset, LabeledDataset, SyntheticSpec, generate_synthetic, load_csv,
                      load_labeled, save_labeled)
from .errors import (ConvergenceError, KnnLoocvError, ParseError, ResourceError,
                     ValidationError)
from .neighbors import NeighborTable, TieRule, build_table, in_degree, query_neighbors
from .regress import (FittedModel, LoocvCurve, fit, load_model, loo_estimates, loocv_curve,
                      loocv_curve_streaming, predict, save_model, select_k)
from .spectral import (GramMatrix, SelectorMatrix, build_a, build_b, expected_quadratic_noise,
                       frobenius_sq, quadratic_form, two_norm)
from .verify import (ExperimentSpec, GapReport, adaptivity_probe, decomposition_check,
                     exact_mse, exact_mse_curve, gap_experiment, k_star)

__version__ = "0.1.0"
