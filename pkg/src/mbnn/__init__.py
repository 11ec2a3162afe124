"""Feed-forward classifiers trained with a margin-based objective."""

from mbnn.network import (
    DimensionError,
    ForwardTrace,
    Network,
    NetworkShape,
    activation,
    activation_derivative,
    forward,
    init_network,
    load_model,
    predict,
    save_model,
)
from mbnn.objective import ObjectiveBreakdown, dataset_objective, sample_objective
from mbnn.gradients import (
    GradCheckReport,
    GradientSet,
    exact_gradient,
    finite_difference_gradient,
    gradient_check,
    paper_gradient,
)
from mbnn.trainer import NumericError, TrainConfig, TrainLog, sgd_step, train

__version__ = "0.1.0"
