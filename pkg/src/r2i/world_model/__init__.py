"""World model: encoder, S3M sequence model, prior and heads."""

from .dists import (
    TwoHot,
    bernoulli_nll,
    categorical_entropy,
    categorical_kl,
    kl_terms,
    sample_onehot,
    symexp,
    symlog,
    unimix_probs,
)
from .model import HeadOutputs, LatentState, NonFiniteError, WmConfig, WorldModel
