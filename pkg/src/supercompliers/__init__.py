"""Supercomplier shares and characteristics in binary instrument experiments.

Supercompliers are compliers whose outcome also responds to treatment. This
package estimates their share, covariate means, CDFs and quantiles; tests the
sharp implications of the identifying assumptions; and ships an exact
principal-stratification simulator used as ground truth.
"""

__version__ = "0.1.0"

from types import ModuleType as _ModuleType

from .assumption_tests import (
    InequalityStatistic,
    OMTestResult,
    SharpTestResult,
    equal_frequency_cells,
    inequality_statistics,
    joint_sharp_test,
    om_test,
    om_test_conditional,
)
from .data import (
    ADMISSIBLE_GROUPS,
    DataConfig,
    Group,
    ObservationTable,
    concat_tables,
    group_to_potentials,
    load_config,
    load_observations,
)
from .dgp import (
    AnalyticTruth,
    DiscreteLaw,
    ObservedDistribution,
    StratificationDGP,
    Stratum,
    induce,
    load_dgp,
    rationalize,
    sample,
    save_dgp,
    simulate_variance_gap,
    true_values,
    variance_gap_dgp,
    variance_gap_example,
    violation_dgp,
)
from .exceptions import (
    ConfigError,
    DataValidationError,
    EstimationError,
    InequalityViolation,
    RankDeficiencyError,
    SupercomplierError,
    WeakFirstStageError,
)
from .identification import (
    CharacteristicsRow,
    WaldEstimate,
    bias_under_violation,
    characteristics_cdf,
    characteristics_plugin,
    characteristics_wald,
    complier_share,
    compute_weights,
    fink_noto_equivalence_check,
    other_group_shares,
    stacked_characteristics,
    stratified_characteristics,
    summarize,
    supercomplier_quantile,
    supercomplier_share,
    weighted_quantile,
)
from .regression import anderson_rubin_ci, ols, stacked_regression, tsls

__all__ = sorted(name for name, obj in list(globals().items())
                 if not name.startswith("_") and not isinstance(obj, _ModuleType))
