"""Actor-critic trained by latent imagination."""

from .actor_critic import (
    MODE_ALIASES,
    POLICY_MODES,
    AcConfig,
    ActorCritic,
    Agent,
    ImaginedTrajectory,
    policy_mode,
)
from .returns import ReturnNorm, lambda_returns, normalize_returns
