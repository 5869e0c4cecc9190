"""Case-crossover analysis with weekly-trend adjustment and permutation calibration."""

__version__ = "0.1.0"

from .calibrate import CalibrationResult, calibrate, permute_null_fits
from .design import (
    CaseCrossoverTable,
    Event,
    EventList,
    build_table,
    build_table_from_hazards,
    load_events,
    referent_days,
)
from .glm import FitResult, ModelSpec, fit_logistic, wald_inference
from .grid import Cohort, GridSpec, run_grid, season_of
from .series import (
    DailySeries,
    StudyCalendar,
    TrendDecomposition,
    decompose,
    iqr_standardize,
    load_columns,
    load_series,
)
from .simulate import (
    ScenarioSpec,
    generate_synthetic_series,
    run_scenario,
    sample_event_days,
    summarize_size_power,
)
