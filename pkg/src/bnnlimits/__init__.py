"""Finite-width Bayesian neural networks, their Gaussian and Student-t
process limits, and Wasserstein convergence experiments."""

__version__ = "0.1.0"

from .network import (  # noqa: F401
    Architecture,
    Dataset,
    VarianceVector,
    forward,
    forward_batch,
    grad_log_posterior_theta,
    log_likelihood,
    log_posterior_and_grad,
    log_prior,
    sample_prior_params,
)
from .kernels import (  # noqa: F401
    ConstraintReport,
    KernelDegeneracyError,
    KernelMatrix,
    check_hyperparams,
    kernel_recursion,
    operator_norm,
    rescaled_kernel,
)
from .posteriors import (  # noqa: F401
    GaussianPosterior,
    IGPosterior,
    StudentTPosterior,
    gp_posterior,
    marginalize_nig_to_t,
    nig_posterior,
    student_t_logpdf,
    tp_posterior_predict,
    tp_posterior_train,
)
from .samplers import (  # noqa: F401
    Sigma2ConditionalParams,
    conditional_sigma2_params,
    sample_inverse_gamma,
    sample_mvn,
    sample_mvt,
    sample_sigma2_conditional,
)
from .nuts import HmcConfig, hmc_sample  # noqa: F401
from .gibbs import GibbsConfig, PosteriorSamples, gibbs_run, gibbs_run_fixed_variance  # noqa: F401
from .rng import RngStream  # noqa: F401
from .wasserstein import (  # noqa: F401
    SampleSet,
    sliced_w1,
    w1_1d,
    w1_exact,
    w1_weighted,
    wp_1d,
)
