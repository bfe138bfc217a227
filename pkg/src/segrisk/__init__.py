"""HMM segmentation: Viterbi, PMAP and hybrid classifiers, their risks, and
Monte Carlo estimation of the asymptotic risks."""
from .alignment import StatePath, hybrid_logR1, hybrid_R1, log_joint, pmap, viterbi
from .inference import Posteriors, ZeroLikelihoodError, forgetting_profile, forward_backward, tv_distance
from .model import (
    Categorical,
    Gaussian,
    HmmModel,
    LabeledSample,
    ModelValidationError,
    expected_log_emission,
    identity_model,
    load_model,
    m2_model,
    markov_entropy_rate,
    model_from_dict,
    sample,
    stationary_distribution,
    validate_model,
)
from .risk import RiskReport, empirical_r1, evaluate_risks

__version__ = "0.1.0"
