"""slobn: telemetry-driven Bayesian networks for SLO-aware reconfiguration.

The pipeline: ingest raw device telemetry, discretize it, learn a Bayesian
network (hill-climb structure search plus maximum-likelihood tables),
extract the Markov blanket around each Service Level Objective, and use
blanket-scoped exact inference to pick the device configuration most likely
to keep every SLO fulfilled. A bundled simulator with a known ground-truth
model lets every stage be verified end to end.
"""

from .graph import (
    BlanketReport,
    Dag,
    GraphError,
    blanket_dot,
    d_separated,
    markov_blanket,
    merged_blanket,
    topological_order,
)
from .inference import (
    EliminationPlan,
    Factor,
    InconsistentEvidenceError,
    InferenceError,
    elimination_order,
    factor_from_cpt,
    factor_product,
    marginalize,
    query,
    reduce,
    variable_elimination,
)
from .learn import (
    Cpt,
    DiscreteBayesNet,
    ScoreCache,
    bic_local,
    bic_total,
    fit_cpts,
    hill_climb,
)
from .model_io import ModelFormatError, load_model, parse_model, save_model, serialize_model
from .reconfig import (
    AdaptDecision,
    ConfigScore,
    DeviceConfig,
    RankedConfigs,
    adapt,
    infer_best_config,
    naive_config,
    parameter_space,
    random_config,
    score_config,
)
from .slo import (
    FulfillmentReport,
    SloEvent,
    SloParseError,
    SloSpec,
    empirical_fulfillment,
    expected_objective,
    parse_slos,
    serialize_slos,
    slo_event,
    slo_probability,
)
from .telemetry import (
    ColumnSpec,
    DEFAULT_SCHEMA,
    DiscreteDataset,
    DiscretizationMap,
    DiscretizationWarning,
    EmptyInputError,
    RawDataset,
    TelemetryError,
    VariableMeta,
    contingency,
    discretize,
    load_telemetry,
    write_csv,
)

__version__ = "0.1.0"
