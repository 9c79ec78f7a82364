"""Partial spline regression with adaptive LASSO variable selection."""

from .estimator import PartialSplineRegressor
from .exceptions import (CollinearDesignError, DegenerateDirectionError, DegenerateKnotsError,
                         DomainError, IllConditionedError, InputError, InsufficientDataError,
                         InsufficientDFError, InvariantError, IterationsExceededError,
                         NotPSDError, NumericalError, PsplineError, ShapeError,
                         UnsupportedOrderError)
from .kernel import (gram_matrix, kernel_matrix, nullspace_matrix, reproducing_kernel,
                     scaled_bernoulli)
from .path import (LassoPath, TransformedProblem, cd_solve, kkt_residual, lars_path, psd_sqrt,
                   soft_threshold, transform)
from .psa import (Dataset, PsaFit, PsFit, adaptive_weights, lqa_hat_matrix, make_dataset,
                  partial_spline, predict, psa_fit)
from .simulation import (ModelSpec, evaluate_replicate, gen_model1, gen_model2, gen_model3,
                         oracle_fit, run_study)
from .smoother import (SplineSystem, evaluate_spline, factorize, influence_matrix, smooth,
                       trace_influence)
from .tuning import (TunedFit, TuningConfig, bic_lambda2, gcv_lambda1, joint_gcv, sigma2_hat,
                     tune)

__version__ = "0.1.0"
