"""
Choosing lambda and beta on validation data
===========================================

Hyperparameters are picked by validation likelihood and only the winner
is scored on test data. The grid here is a corner of the default sudden
change grid, with a shorter step budget so the script runs in a couple of
minutes.
"""

from tempcov import FitConfig, evaluation, experiments, synthetic

scenario = synthetic.sudden_change_dataset(p=64, m=4, s=8, T=10, seed=3)
grid = {"lambda": [0.0, 0.3, 3.0], "beta": [1e-9, 0.5], "phi": ["l1"]}
cells = experiments.grid_search(scenario.split("train"), scenario.split("val"), grid,
                                FitConfig(m=4, steps_per_round=200))

print(f"{'lambda':>7} {'beta':>6} {'val NLL':>9}")
for cell in cells:
    print(f"{cell.config.lam:>7g} {cell.config.beta:>6g} {cell.val_nll:>9.2f}")

best = experiments.select(cells)
print(f"selected lambda={best.config.lam:g} beta={best.config.beta:g}; "
      f"test NLL {evaluation.nll(best.model, scenario.split('test')).mean_nll:.2f}")
