"""
A script to create a formatted json file with the experiment presets.

Each preset is a flat set of config overrides. Keys not listed fall back to
the defaults in marlcpc/config.py.

Sources:
  learning rates, discount, message vocabularies, budgets and the rollout
  layout follow the published bandit and observer experiments. The desk-scale
  observer preset shortens the budget for continuous integration.
"""

import json
import os

# set the output file path
script_path = os.path.realpath(__file__)
repo_directory = os.path.dirname(os.path.dirname(script_path))
output_path = os.path.join(repo_directory, "marlcpc", "data", "presets.json")

# create the dictionary to write as json
presets = {
    "bandit": {
        "env": "bandit",
        "learning_rate": 3e-4,
        "K": 5,
        "budget": 30000,
        "bandit_batch": 256,
        "n_minibatches": 4,
    },
    "bandit-coop": {
        "env": "bandit-coop",
        "learning_rate": 3e-4,
        "K": 5,
        "budget": 30000,
        "bandit_batch": 256,
        "n_minibatches": 4,
    },
    "observer": {
        "env": "observer",
        "learning_rate": 2.5e-4,
        "K": 20,
        "budget": 3000000,
        "n_workers": 8,
        "steps_per_worker": 128,
        "n_minibatches": 4,
        "max_steps": 1000,
    },
    "observer-desk": {
        "env": "observer",
        "learning_rate": 2.5e-4,
        "K": 20,
        "budget": 500000,
        "n_workers": 8,
        "steps_per_worker": 128,
        "n_minibatches": 4,
        "max_steps": 1000,
    },
}


# write the output file
with open(output_path, "w+") as f:
    f.write(json.dumps(presets, indent=2, sort_keys=True))
