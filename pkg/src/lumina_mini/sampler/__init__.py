from .config import CacheState, GuidanceConfig, NfeReport, SamplerConfig
from .guidance import cfg_active, cfg_combine
from .run import sample, sample_batch, write_ppm
from .solvers import FdpmRecord, euler_step, fdpm_step, midpoint_step, x0_prediction
from .teacache import COMPUTE, SKIP, teacache_gate

__all__ = [
    "CacheState",
    "COMPUTE",
    "FdpmRecord",
    "GuidanceConfig",
    "NfeReport",
    "SKIP",
    "SamplerConfig",
    "cfg_active",
    "cfg_combine",
    "euler_step",
    "fdpm_step",
    "midpoint_step",
    "sample",
    "sample_batch",
    "teacache_gate",
    "write_ppm",
    "x0_prediction",
]
