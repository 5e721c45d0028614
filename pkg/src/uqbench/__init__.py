"""uqbench: calibration and uncertainty benchmark with an exact synthetic oracle.

Generates radially symmetric two-class data whose conditional class
probability is known in closed form, trains six probabilistic classifiers
(neural-network ensemble, conflictual-loss ensemble, evidential network,
Monte-Carlo dropout, Laplace Gaussian-process classification, Dirichlet-
process mixture model), and evaluates calibration, data-size uncertainty
scaling and out-of-distribution behavior against the oracle.
"""

from .classifiers import (
    ConflictualEnsembleClassifier,
    DropoutClassifier,
    EnsembleClassifier,
    EvidentialClassifier,
    ProbabilisticClassifier,
)
from .dpmm import DPMMClassifier, DPMMPrior, dpmm_predict, gibbs_fit
from .gp import GPClassifier, RBFKernel, gp_predict, laplace_fit
from .metrics import EvaluationBatch, accuracy, ece, log_loss, mean_kl, wasserstein1, z_score
from .posterior import (
    BetaBernoulliPosterior,
    PredictiveBatch,
    PredictiveEstimate,
    beta_bernoulli_mean,
    beta_bernoulli_variance,
    mc_estimate,
    mc_mean,
    mc_uncertainty,
)
from .synthdata import (
    DATASET_SPECS,
    Dataset,
    GammaClassSpec,
    OODGrid,
    gamma_pdf,
    generate_splits,
    lrfd,
    make_ood_grid,
    sample_dataset,
    training_subsets,
)

__version__ = "0.1.0"
