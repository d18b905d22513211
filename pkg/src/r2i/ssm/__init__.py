"""S3M sequence backbone."""

from .discretize import DiscreteSsm, SingularStepError, bilinear, discretize_bilinear
from .hippo import ContinuousSsm, SsmLayerConfig, hippo_normal, hippo_spectrum, init_hippo_diag
from .layer import (
    S3M,
    LayerState,
    S3MConfig,
    S3MLayer,
    s3m_block_forward,
    ssm_parallel,
    ssm_step,
)
from .scan import BACKEND, ScanElement, combine, linear_scan, parallel_scan, reset_scan
