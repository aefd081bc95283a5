"""macgof: goodness-of-fit testing for statistical models.

Measures how far observed data sit from a fitted working model by
comparing the joint distribution of (covariates, response) with that of
(covariates, model-simulated response), using the maximum adjusted
chi-squared two-sample statistic and a simulated null distribution.
"""

from macgof.counting import HAVE_EXTENSION, backend_name
from macgof.errors import DataError, MacgofError, NumericalError
from macgof.gof import GofConfig, GofReport, gof_test, gof_test_external
from macgof.mac import (
    MacConfig,
    MacResult,
    RepeatedMac,
    local_statistic,
    mac,
    mixed_statistic,
    population_local_statistic,
    select_locations,
)
from macgof.models import (
    FeatureMap,
    FittedModel,
    FixedARSpec,
    ModelSpec,
    NoiseSpec,
    ThresholdRegime,
    bootstrap_response,
    fit_external,
    fit_glm,
    fit_model,
    fit_ols,
    lag_embed,
    predict,
    simulate_ar,
)
from macgof.nulldist import NullCache, NullDistribution, p_value, simulate_null
from macgof.sample import CellCounts, Location, LocationSet, PairedSample, cell_counts, classify, distance

__version__ = "0.1.0"

__all__ = [
    "backend_name",
    "HAVE_EXTENSION",
    "MacgofError",
    "DataError",
    "NumericalError",
    "PairedSample",
    "Location",
    "LocationSet",
    "CellCounts",
    "distance",
    "classify",
    "cell_counts",
    "MacConfig",
    "MacResult",
    "RepeatedMac",
    "local_statistic",
    "population_local_statistic",
    "select_locations",
    "mac",
    "mixed_statistic",
    "FeatureMap",
    "ModelSpec",
    "FittedModel",
    "FixedARSpec",
    "ThresholdRegime",
    "NoiseSpec",
    "fit_ols",
    "fit_external",
    "fit_glm",
    "fit_model",
    "predict",
    "bootstrap_response",
    "simulate_ar",
    "lag_embed",
    "NullDistribution",
    "NullCache",
    "simulate_null",
    "p_value",
    "GofConfig",
    "GofReport",
    "gof_test",
    "gof_test_external",
    "__version__",
]
