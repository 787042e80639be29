"""Default configuration paths and parameters"""

import configparser
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional, Union

from marlcpc.errors import ConditionError, ConfigError, EnvironmentNameError

# file paths for the package data
package_path = os.path.realpath(__file__)
package_dir = os.path.dirname(package_path)
presets_path = os.path.join(package_dir, "data", "presets.json")

# read critical data into memory
with open(presets_path, "r") as f:
    presets = json.load(f)

# default output root, overridden with the MARLCPC_OUT environment variable
OUTPUT_ENV_VAR = "MARLCPC_OUT"
DEFAULT_OUTPUT_ROOT = "runs"

# experiment vocabulary
CONDITIONS = ("no-comm", "message", "cpc", "shared")
ENVIRONMENTS = ("bandit", "bandit-coop", "observer")
ABLATION_MODES = ("none", "random", "zero")
COMMUNICATING = ("message", "cpc")

# network sizes
HIDDEN_UNITS = 64
CPC_HIDDEN_UNITS = 64

# optimizer defaults (not stated by the source experiments)
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPSILON = 1e-8

# ppo constants
GAMMA = 0.99
CLIP_EPSILON = 0.2
VALUE_COEF = 0.5
ENTROPY_COEF = 0.01
N_MINIBATCHES = 4
N_WORKERS = 8
STEPS_PER_WORKER = 128
GAE_LAMBDA = 0.95
N_EPOCHS = 4

# bandit-cpc defaults
BANDIT_BATCH = 256

# cpc defaults
BETA = 1.0
PROB_FLOOR = 1e-8
STRAIGHT_THROUGH_MODES = ("softmax", "broadcast")

# initial scale of the policy output layer
POLICY_OUTPUT_GAIN = 0.01

# environment constants
OBSERVER_MAX_STEPS = 1000
GRID_SIZE = 4

# evaluation defaults
EVAL_INTERVAL = 10
EVAL_EPISODES = 100
ABLATION_TRIALS = 100
RESAMPLES = 2000
CONFIDENCE = 0.95
CHECKPOINT_INTERVAL = 50

# keys whose defaults fill gaps in the source experiments
GAP_FILL_KEYS = (
    "informed_agent",
    "checkpoint_interval",
    "gae_lambda",
    "n_epochs",
    "bandit_batch",
    "normalize_advantages",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "prob_floor",
    "decoder_scope",
    "straight_through",
    "eval_interval",
    "eval_episodes",
)


@dataclass
class TrainerConfig:
    """Hyperparameters shared by the Bandit-CPC and IPPO-CPC trainers."""

    learning_rate: float = 3e-4
    gamma: float = GAMMA
    gae_lambda: float = GAE_LAMBDA
    clip_epsilon: float = CLIP_EPSILON
    value_coef: float = VALUE_COEF
    entropy_coef: float = ENTROPY_COEF
    n_minibatches: int = N_MINIBATCHES
    n_epochs: int = N_EPOCHS
    budget: int = 30000
    bandit_batch: int = BANDIT_BATCH
    n_workers: int = N_WORKERS
    steps_per_worker: int = STEPS_PER_WORKER
    hidden: int = HIDDEN_UNITS
    normalize_advantages: bool = True
    adam_beta1: float = ADAM_BETA1
    adam_beta2: float = ADAM_BETA2
    adam_epsilon: float = ADAM_EPSILON
    K: int = 5
    beta: float = BETA
    cpc_hidden: int = CPC_HIDDEN_UNITS
    prob_floor: float = PROB_FLOOR
    decoder_scope: str = "joint"
    straight_through: str = "softmax"

    def validate(self) -> None:
        """Checks value ranges, raising ConfigError on the first bad key."""
        positive = (
            "learning_rate",
            "gamma",
            "clip_epsilon",
            "value_coef",
            "entropy_coef",
            "n_minibatches",
            "n_epochs",
            "bandit_batch",
            "n_workers",
            "steps_per_worker",
            "hidden",
            "adam_epsilon",
            "K",
            "cpc_hidden",
            "prob_floor",
        )
        for key in positive:
            if getattr(self, key) <= 0:
                raise ConfigError(f"[trainer] {key} must be positive")
        if self.budget < 0:
            raise ConfigError("[trainer] budget must be non-negative")
        if self.beta < 0:
            raise ConfigError("[cpc] beta must be non-negative")
        if not self.clip_epsilon < 1:
            raise ConfigError("[trainer] clip_epsilon must be below 1")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError("[trainer] gae_lambda must be in [0, 1]")
        if not self.gamma <= 1:
            raise ConfigError("[trainer] gamma must be at most 1")
        for key in ("adam_beta1", "adam_beta2"):
            if not 0 <= getattr(self, key) < 1:
                raise ConfigError(f"[trainer] {key} must be in [0, 1)")
        if self.decoder_scope not in ("joint", "own"):
            raise ConfigError("[cpc] decoder_scope must be 'joint' or 'own'")
        if self.straight_through not in STRAIGHT_THROUGH_MODES:
            supported = ", ".join(STRAIGHT_THROUGH_MODES)
            raise ConfigError(f"[cpc] straight_through must be one of {supported}")

    @property
    def rollout_steps(self) -> int:
        return self.n_workers * self.steps_per_worker


@dataclass
class RunConfig:
    """Everything needed to reproduce a single training run."""

    env: str = "bandit"
    condition: str = "cpc"
    seed: int = 0
    informed_agent: str = "random"
    max_steps: int = OBSERVER_MAX_STEPS
    checkpoint_interval: int = CHECKPOINT_INTERVAL
    output_dir: str = ""
    eval_interval: int = EVAL_INTERVAL
    eval_episodes: int = EVAL_EPISODES
    ablation: str = "none"
    resamples: int = RESAMPLES
    confidence: float = CONFIDENCE
    trainer: TrainerConfig = field(default_factory=TrainerConfig)

    def validate(self) -> None:
        """Checks every field, raising a package error that names the bad key."""
        if self.env not in ENVIRONMENTS:
            raise EnvironmentNameError(
                f"Invalid env: {self.env}. Supported: {', '.join(ENVIRONMENTS)}"
            )
        if self.condition not in CONDITIONS:
            raise ConditionError(
                f"Invalid condition: {self.condition}. "
                f"Supported: {', '.join(CONDITIONS)}"
            )
        if self.ablation not in ABLATION_MODES:
            raise ConfigError(
                f"[eval] Invalid ablation: {self.ablation}. "
                f"Supported: {', '.join(ABLATION_MODES)}"
            )
        if self.informed_agent not in ("random", "0", "1"):
            raise ConfigError("[run] informed_agent must be random, 0 or 1")
        for key in ("max_steps", "checkpoint_interval", "eval_interval"):
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive")
        if self.eval_episodes < 1:
            raise ConfigError("[eval] eval_episodes must be at least 1")
        if self.resamples < 1 or not 0 < self.confidence < 1:
            raise ConfigError("[eval] resamples/confidence out of range")
        self.trainer.validate()

    def resolved(self) -> str:
        """Renders the full effective configuration, marking gap-fill defaults."""
        return renderConfig(self)


# section layout of the config file
RUN_SECTIONS = {
    "run": (
        "env",
        "condition",
        "seed",
        "informed_agent",
        "max_steps",
        "checkpoint_interval",
        "output_dir",
    ),
    "eval": ("eval_interval", "eval_episodes", "ablation", "resamples", "confidence"),
}
TRAINER_SECTIONS = {
    "trainer": (
        "learning_rate",
        "gamma",
        "gae_lambda",
        "clip_epsilon",
        "value_coef",
        "entropy_coef",
        "n_minibatches",
        "n_epochs",
        "budget",
        "bandit_batch",
        "n_workers",
        "steps_per_worker",
        "hidden",
        "normalize_advantages",
        "adam_beta1",
        "adam_beta2",
        "adam_epsilon",
    ),
    "cpc": (
        "K",
        "beta",
        "cpc_hidden",
        "prob_floor",
        "decoder_scope",
        "straight_through",
    ),
}
SECTION_ORDER = ("run", "trainer", "cpc", "eval")


def getPreset(name: str) -> dict:
    """Returns a copy of a named preset's overrides.

    Args:
        name: the preset name (from marlcpc.config.presets).

    Returns:
        preset: a dict of config keys to values.
    """
    if name not in presets:
        raise ConfigError(
            f"Invalid preset: {name}. Supported: {', '.join(presets.keys())}"
        )
    return dict(presets[name])


def defaultConfig(env: str = "bandit", condition: str = "cpc", seed: int = 0):
    """Builds a RunConfig with the experiment defaults of an environment."""
    config = RunConfig(env=env, condition=condition, seed=seed)
    overrides = getPreset(env) if env in presets else {}
    return applyOverrides(config, overrides)


def applyOverrides(config: RunConfig, overrides: dict) -> RunConfig:
    """Returns a copy of a config with flat key overrides applied.

    Args:
        config: the base config.
        overrides: flat {key: value} pairs, from any section.

    Returns:
        a new RunConfig.
    """
    run_keys = {f.name for f in fields(RunConfig)} - {"trainer"}
    trainer_keys = {f.name for f in fields(TrainerConfig)}
    run_updates, trainer_updates = dict(), dict()
    for key, value in overrides.items():
        if key in run_keys:
            run_updates[key] = _coerce(RunConfig, key, value)
        elif key in trainer_keys:
            trainer_updates[key] = _coerce(TrainerConfig, key, value)
        else:
            raise ConfigError(f"Unknown config key: {key}")
    trainer = replace(config.trainer, **trainer_updates)
    return replace(config, trainer=trainer, **run_updates)


def _coerce(cls, key: str, value):
    """Converts a raw value to the declared type of a dataclass field."""
    kind = {f.name: f.type for f in fields(cls)}[key]
    if isinstance(value, kind) and not (kind is int and isinstance(value, bool)):
        return value
    try:
        if kind is bool:
            text = str(value).strip().lower()
            if text in ("true", "yes", "1", "on"):
                return True
            if text in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        if kind is int:
            number = float(value)
            if number != int(number):
                raise ValueError(value)
            return int(number)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"Invalid value for {key}: {value!r}")


def parseConfig(
    text: str, source: str = "<config>", preset: Optional[str] = None
) -> RunConfig:
    """Parses INI-style config text into a validated RunConfig.

    Keys missing from the text take the defaults of the `[run] env`, then the
    `preset` argument, then an optional `[run] preset`. Keys in the text
    always win over both presets.

    Args:
        text: the config file contents.
        source: a name for the text, used in error messages.
        preset: a named preset applied beneath the file values.

    Returns:
        a validated RunConfig.

    Raises:
        ConfigError: on syntax errors, unknown sections or keys, or bad values.
    """
    parser = configparser.ConfigParser(
        inline_comment_prefixes=("#", ";"), interpolation=None
    )
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(f"{source}: {e}")

    layout = {**RUN_SECTIONS, **TRAINER_SECTIONS}
    values = dict()
    file_preset = None
    for section in parser.sections():
        if section not in layout:
            raise ConfigError(
                f"{source}: unknown section [{section}]. "
                f"Supported: {', '.join(SECTION_ORDER)}"
            )
        for key, value in parser.items(section):
            if section == "run" and key == "preset":
                file_preset = value
                continue
            if key not in layout[section]:
                raise ConfigError(
                    f"{source}: unknown key '{key}' in section [{section}]"
                    f"{_lineHint(text, key)}"
                )
            values[key] = value

    env = values.get("env", "bandit")
    base = defaultConfig(env=env) if env in ENVIRONMENTS else RunConfig(env=env)
    for name in (preset, file_preset):
        if name is not None:
            base = applyOverrides(base, getPreset(name))
    for key, value in values.items():
        try:
            applyOverrides(base, {key: value})
        except ConfigError as e:
            raise ConfigError(f"{source}: {e.args[0]}{_lineHint(text, key)}")
    config = applyOverrides(base, values)
    config.validate()
    return config


def _lineHint(text: str, key: str) -> str:
    """Returns ' (line N)' for the first line assigning a key, if any."""
    for number, line in enumerate(text.splitlines(), start=1):
        if line.strip().split("=")[0].strip() == key:
            return f" (line {number})"
    return ""


def readConfig(path: str, preset: Optional[str] = None) -> RunConfig:
    """Reads and validates a config file.

    Args:
        path: path to an INI-style run config.
        preset: a named preset applied beneath the file values.

    Returns:
        a validated RunConfig.
    """
    with open(path, "r") as f:
        text = f.read()
    return parseConfig(text, source=path, preset=preset)


def _formatValue(value: Union[bool, int, float, str]) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def renderConfig(config: RunConfig) -> str:
    """Renders a RunConfig as INI text, marking gap-fill defaults.

    Args:
        config: the config to render.

    Returns:
        text that parseConfig reads back to an equal RunConfig.
    """
    run_values = asdict(config)
    trainer_values = run_values.pop("trainer")
    lookup = {**run_values, **trainer_values}
    layout = {**RUN_SECTIONS, **TRAINER_SECTIONS}

    lines = ["# marlcpc run configuration"]
    for section in SECTION_ORDER:
        lines.append("")
        lines.append(f"[{section}]")
        for key in layout[section]:
            line = f"{key} = {_formatValue(lookup[key])}"
            if key in GAP_FILL_KEYS:
                line += "  # gap-fill"
            lines.append(line)
    return "\n".join(lines) + "\n"


def outputRoot() -> str:
    """Returns the default output root directory."""
    return os.environ.get(OUTPUT_ENV_VAR, DEFAULT_OUTPUT_ROOT)


def defaultOutputDir(config: RunConfig) -> str:
    """Returns the output directory a run writes to when none is configured."""
    if config.output_dir:
        return config.output_dir
    name = f"{config.env}-{config.condition}-seed{config.seed}"
    return os.path.join(outputRoot(), name)
