"""Glucose forecasting: lag features, penalised linear fits, masked kernel
regression, and forward-chaining cross-validation."""
from .crossval import (
    LINEAR_MODELS,
    MODEL_NAMES,
    CVResult,
    FoldError,
    Model,
    cross_validate,
    fit_all,
    make_model,
    predict_static,
    rmse,
)
from .design import DesignMatrix, Scaler, make_lagged, pooled_scaler, standardize, standardize_target
from .kernel import (
    DivergenceError,
    fit_kernel_exog,
    fit_kernel_masked,
    kernel_loss_and_grad,
    kernel_predict,
)
from .linear import (
    FitResult,
    SingularDesignError,
    fit_enet,
    fit_lasso,
    fit_ols,
    fit_ols_or_ridge,
    fit_ridge,
    fit_tv,
    objective,
    tv_objective,
)
