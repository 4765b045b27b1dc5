"""Kronecker-product open-loop calibration with D-optimal posture selection."""

from .calibration import (
    AXES,
    LinearCalibration,
    MotorConversion,
    angle_to_pulse,
    assemble_design,
    identify,
    invert_calibration,
    join_parameters,
    predict,
    pulse_to_angle,
    residual_stats,
    row_block,
    split_parameters,
)
from .doe import (
    LOGDET_FLOOR,
    DOptimalSelector,
    SubsetSelection,
    design_log_det,
    exchange_improve,
    exhaustive_select,
    greedy_select,
    information_matrix,
    log_det_objective,
    random_select,
    subset_objective,
)
from .exceptions import (
    DatasetError,
    EnumerationLimitError,
    IdentifiabilityError,
    InputError,
    InversionError,
    KroncalError,
    MaskedActionError,
    NonFiniteLossError,
)
from .simulator import (
    DatasetSpec,
    EpisodeData,
    PlantTruth,
    generate_candidates,
    make_dataset,
    read_dataset,
    simulate_measure,
    table1_plant,
)

__version__ = "0.1.0"

__all__ = [
    "AXES",
    "LinearCalibration",
    "MotorConversion",
    "angle_to_pulse",
    "assemble_design",
    "identify",
    "invert_calibration",
    "join_parameters",
    "predict",
    "pulse_to_angle",
    "residual_stats",
    "row_block",
    "split_parameters",
    "LOGDET_FLOOR",
    "DOptimalSelector",
    "SubsetSelection",
    "design_log_det",
    "exchange_improve",
    "exhaustive_select",
    "greedy_select",
    "information_matrix",
    "log_det_objective",
    "random_select",
    "subset_objective",
    "DatasetError",
    "EnumerationLimitError",
    "IdentifiabilityError",
    "InputError",
    "InversionError",
    "KroncalError",
    "MaskedActionError",
    "NonFiniteLossError",
    "DatasetSpec",
    "EpisodeData",
    "PlantTruth",
    "generate_candidates",
    "make_dataset",
    "read_dataset",
    "simulate_measure",
    "table1_plant",
]
