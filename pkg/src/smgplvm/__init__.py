"""GPLVM with a differentiable spectral-mixture random-feature kernel, trained by
variational inference, plus closed-form collapse analysis for the linear case."""
from .data import Dataset, apply_missing_mask, load_matrix, make_s_curve_dataset, save_matrix
from .dppca import DppcaReport, classify_regime, diagnose, global_optimum
from .evaluation import (EvalReport, affine_r2, imputation_mse, impute_posterior_mean,
                         knn_cv_accuracy)
from .kernels import PRESETS, BaseKernelConfig, SmKernelParams, SpectralSample
from .model import VariationalParams, elbo_mc, elbo_value_and_grad
from .trainer import TrainConfig, TrainTrace, count_zero_columns, train

__version__ = "0.1.0"
