"""Covariance estimation by eigenvalue regularization with a nuclear-norm prior."""

from ._core import (
    CernnError,
    InvalidInput,
    SingularMatrix,
    Underdetermined,
    adjusted_rand_index,
    alpha_hat,
    cernn_eigenvalue,
    cernn_eigenvalues,
    cernn_estimate,
    cnr_eigenvalues,
    cnr_estimate,
    cv_select_lambda,
    em_cluster,
    entropy_loss,
    fit_predict_qda,
    lambda_grid,
    lambda_max_bound,
    ledoit_wolf,
    linear_shrinkage,
    quadratic_loss,
    run_cli,
    sample_covariance,
)

__all__ = [name for name in dir() if not name.startswith("_")]
