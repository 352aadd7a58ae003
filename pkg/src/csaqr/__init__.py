"""Complete subset averaging for conditional quantile prediction.

Check-loss quantile regressions are averaged with equal weights over all (or
a capped random sample of) size-k regressor subsets; the subset size is
chosen by cross-validation.  The package also ships the four comparator
methods (JMA, L1QR, BAG, L2QR), a Monte Carlo harness, and rolling-window /
random-split empirical protocols, all behind one CLI.
"""

__version__ = "0.1.0"

from .qr_core import (
    Dataset,
    QuantileFit,
    SolverOptions,
    belloni_lambda,
    check_loss,
    fit_qr,
    fit_qr_l1,
    fit_qr_l2,
    predict,
    residual_sign_counts,
    unconditional_quantile,
)
from .subsets import (
    SubsetModel,
    SubsetPlan,
    count_combinations,
    rank_combination,
    sample_subsets,
    unrank_combination,
)
from .csa import (
    CsaConfig,
    CsaFitForK,
    CsaPredictor,
    CvCurve,
    csa_predict,
    cv_value,
    fit_csa,
    fit_csa_for_k,
    load_predictor_json,
    save_predictor_json,
    select_k,
)
from .competitors import (
    BagPredictor,
    JmaPredictor,
    bag_predict,
    encompassing_models,
    fit_bag,
    fit_jma,
    fit_l1qr,
    fit_l2qr_cv,
    fit_to_json_dict,
    jma_predict,
)
from .methods import MethodSettings
from .simulate import (
    SimDesign,
    StudyResult,
    default_k_obs,
    fpe_of,
    gen_equicorrelated_normal,
    gen_replication,
    run_study,
    signal_variance,
    solve_theta_for_r2,
)
from .empirical import (
    RollingSpec,
    SplitSpec,
    load_csv,
    random_split_eval,
    rolling_forecast,
)
