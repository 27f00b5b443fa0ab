"""
Nested cross-validation on a small synthetic cohort
===================================================

Every model family is tuned in an inner loop and scored on held-out outer
folds.  The grid and chains here are tiny so the script finishes quickly;
``bnn-severity run --synthetic --fast`` runs the full-size version.
"""

from bnn_severity.baseline import EarlyStopConfig
from bnn_severity.data import CohortSpec, generate_cohort
from bnn_severity.dropout import DropoutConfig
from bnn_severity.experiment import ExperimentSettings, HyperGrid, make_fold_plan, run_experiment
from bnn_severity.hmc import HmcConfig
from bnn_severity.report import render_table

data = generate_cohort(CohortSpec(n_patients=80, n_features=60, seed=2))
plan = make_fold_plan(len(data), seed=2)
print("outer test fold sizes:", [len(f) for f in plan.outer_folds])

###########################################################################
# A deliberately small grid.  ``strict=False`` allows widths below 100.

grid = HyperGrid(
    architectures=((16,), (16, 16)),
    prior_precisions=(1.0, 10.0),
    dropout_rates=(0.1,),
    early_stop_patiences=(5,),
    learning_rates=(1e-2,),
    strict=False,
)
settings = ExperimentSettings(
    hmc=HmcConfig(step_size=0.05, leapfrog_steps=20, num_samples=100, burn_in=100),
    inner_hmc=HmcConfig(step_size=0.05, leapfrog_steps=20, num_samples=40, burn_in=60),
    dropout=DropoutConfig(t_samples=100, epochs=40, learning_rate=1e-2),
    early_stop=EarlyStopConfig(max_epochs=80),
)

report = run_experiment(data, grid, plan, settings, seed=2)
print(render_table(report))

###########################################################################
# Hyperparameters chosen in each outer fold.

for fold in report.folds:
    print(fold.family, fold.fold, fold.hyperparameters)
