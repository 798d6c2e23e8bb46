"""
The command line, end to end
============================

Generate a scenario, fit it, evaluate it and look at the change-point
scores, all through ``tempcov`` subcommands (run in-process here).
"""

import json
import os
import tempfile

from tempcov.cli import main

work = tempfile.mkdtemp()
data = os.path.join(work, "sudden")

main(["synth", "--kind", "sudden", "--p", "64", "--m", "4", "--s", "16", "--seed", "1",
      "--out", data])
main(["fit", "--data", data, "--m", "4", "--lambda", "0.3", "--beta", "0.5",
      "--out", os.path.join(work, "model.json"), "--log", os.path.join(work, "fit_log.json")])
main(["eval", "--model", os.path.join(work, "model.json"), "--data", data, "--changepoints",
      "--out", os.path.join(work, "report.json")])

with open(os.path.join(work, "report.json")) as fh:
    report = json.load(fh)
print("test NLL", round(report["mean_nll"], 2), " ARI", round(report["mean_ari"], 3))
with open(os.path.join(work, "report.changepoints.txt")) as fh:
    print(fh.read())
