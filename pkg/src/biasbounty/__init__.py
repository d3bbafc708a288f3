"""Patchable pointer-decision-list models with a certificate-checked bias
bounty service and batch trainers."""

from .certify import (
    CertificateStats,
    CheckerConfig,
    CheckerHaltedError,
    CheckerState,
    certificate_statistic,
    check,
    required_holdout_size,
)
from .dataset import (
    CATEGORICAL,
    NUMERIC,
    DatasetError,
    EmptyGroupError,
    Feature,
    FeatureSchema,
    GroupRule,
    LabeledDataset,
    SchemaMismatchError,
    SyntheticSpec,
    generate_synthetic,
    group_mass,
    load_csv,
    loss_on,
    split,
    write_csv,
    zero_one_loss,
)
from .engine import EngineRun, falsify_and_update, monotone_falsify_and_update, run_report
from .pdl import (
    Model,
    PdlNode,
    PointerDecisionList,
    Repair,
    deserialize_pdl,
    evaluate_prefix,
    groups_of,
    list_update,
    pdl_from_doc,
    pdl_to_doc,
    prefix_model,
    serialize_pdl,
)
from .predictor import (
    DEFER,
    Conjunction,
    Constant,
    DocumentError,
    Predictor,
    RealRegressor,
    Stump,
    TernaryFromCosts,
    Tree,
    derive_group,
    derive_model,
    deserialize,
    evaluate,
    fit_tree_classifier,
    fit_tree_regressor,
    serialize,
)
from .service import BountyProgram, ProgramConfig, create_app
from .trainers import (
    FinderResult,
    alt_min_finder,
    brute_force_finder,
    csc_finder,
    induced_costs,
    objective,
    train_by_opt,
)

__all__ = [name for name in dir() if not name.startswith("_")]
