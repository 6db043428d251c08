"""Batch neural Thompson-sampling toolkit for black-box optimization."""

from ntsbo.network import NetworkSpec, init_params, zero_last_layer, forward, param_gradient
from ntsbo.kernels import (
    tangent_features,
    empirical_ntk,
    reference_kernel,
    se_kernel,
    RFFBasis,
    make_rff_basis,
    rff_features,
    save_gram,
    load_gram,
)
from ntsbo.gp import PosteriorMoments, gp_posterior, sample_gp_prior, uncertainty_sampling
from ntsbo.training import (
    TrainConfig,
    AcquisitionSample,
    sto_loss,
    train_gd,
    ridge_closed_form,
    draw_acquisition_bnts,
    draw_acquisition_linear,
    draw_acquisition_deep_ensemble,
)
from ntsbo.engine import (
    Domain,
    History,
    EngineConfig,
    RegretTrace,
    beta_schedule,
    maximize_acquisition,
    select_batch,
    init_stage,
    run_campaign,
    regret_metrics,
    discretize_domain,
)

__version__ = "0.1.0"
