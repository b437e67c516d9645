"""Built-in experiment problems: the modified Branin field and the
Kuramoto-Sivashinsky pseudospectral solver at two fidelities."""

from .branin import (
    BraninConfig,
    branin_grid,
    branin_observation_points,
    branin_observations,
    branin_stochastic_ensemble,
    branin_truth,
)
from .ks import (
    BlowUp,
    KsConfig,
    extend_periodic,
    ks_ensembles,
    ks_grid,
    ks_high_subset,
    ks_initial_condition,
    ks_observation_points,
    ks_observations,
    ks_reference,
    ks_solve,
    trig_resample,
)

__all__ = [
    "BraninConfig", "branin_grid", "branin_observation_points",
    "branin_observations", "branin_stochastic_ensemble", "branin_truth",
    "BlowUp", "KsConfig", "extend_periodic", "ks_ensembles", "ks_grid",
    "ks_high_subset", "ks_initial_condition", "ks_observation_points",
    "ks_observations", "ks_reference", "ks_solve", "trig_resample",
]
