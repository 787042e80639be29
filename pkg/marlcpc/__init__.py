from marlcpc import (
    CPC,
    BanditCPC,
    IPPOCPC,
    agents,
    autodiff,
    checkpoint,
    envs,
    evaluate,
    networks,
    stats,
)
from marlcpc.__version__ import __version__
from marlcpc.config import presets
from marlcpc.utils import (
    listAblationModes,
    listConditions,
    listEnvironments,
    validateCondition,
    validateEnvironment,
)
