#!/usr/bin/env python3
"""
Render Configuration
Default hyperparameters for the adaptive MLT renderer and the RenderConfig record
"""

from dataclasses import asdict, dataclass, fields, replace
from typing import Dict, List, Optional

__version__ = "1.0.0"

# Strategy variants and perturbations understood by the renderer
STRATEGIES = ('fixed', 'global', 'ra-grid', 'ra-quadtree')
PERTURBATIONS = ('lens', 'multi-chain')

# Adaptation defaults (batch length, step-size schedule, target acceptance)
DEFAULT_BATCH_LENGTH = 10
DEFAULT_GAMMA_MAX = 1.0
DEFAULT_GAMMA_SCALE = 5.0
DEFAULT_TARGET_ACCEPTANCE = 0.5
DEFAULT_LAMBDA_INIT = 1.0
DEFAULT_LAMBDA_MIN = -30.0

# Partition defaults
DEFAULT_N_TOP = 20
DEFAULT_N_BOTTOM = 50
DEFAULT_M_SPLIT = 5000
DEFAULT_M_REFINE = 10_000_000
MAX_QUADTREE_DEPTH = 16

# Path and film defaults
DEFAULT_K_MAX = 20
DEFAULT_EPSILON_RAY = 1e-4
DEFAULT_RRMSE_EPSILON = 1e-2
DEFAULT_B_SAMPLES = 100_000
DEFAULT_WIDTH = 64
DEFAULT_HEIGHT = 64

# Suitability of the configured perturbation when it can mutate the path
PERTURBATION_PROBABILITY = 0.5


class ConfigError(ValueError):
    """Raised when a RenderConfig field is out of range or unknown"""


@dataclass(frozen=True)
class RenderConfig:
    strategy: str = 'ra-quadtree'
    perturbation: str = 'lens'
    mutations: int = 1_000_000
    time_budget_s: Optional[float] = None
    chains: int = 1
    batch_length: int = DEFAULT_BATCH_LENGTH
    gamma_max: float = DEFAULT_GAMMA_MAX
    gamma_scale: float = DEFAULT_GAMMA_SCALE
    target_acceptance: float = DEFAULT_TARGET_ACCEPTANCE
    lambda_init: float = DEFAULT_LAMBDA_INIT
    lambda_min: float = DEFAULT_LAMBDA_MIN
    sigma2_ratio: float = 1.0
    n_top: int = DEFAULT_N_TOP
    n_bottom: int = DEFAULT_N_BOTTOM
    m_split: int = DEFAULT_M_SPLIT
    m_refine: int = DEFAULT_M_REFINE
    b_samples: int = DEFAULT_B_SAMPLES
    k_max: int = DEFAULT_K_MAX
    epsilon_ray: float = DEFAULT_EPSILON_RAY
    seed: int = 0
    width: int = DEFAULT_WIDTH
    height: int = DEFAULT_HEIGHT
    log_interval: Optional[int] = None
    trace_path: Optional[str] = None
    partition_dump_path: Optional[str] = None
    chain_trace_path: Optional[str] = None

    def validate(self) -> 'RenderConfig':
        """Check every field, raising ConfigError naming the first bad one"""
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.perturbation not in PERTURBATIONS:
            raise ConfigError(f"perturbation must be one of {PERTURBATIONS}, got {self.perturbation!r}")

        positive_counts = ('chains', 'batch_length', 'n_top', 'n_bottom', 'm_split',
                           'm_refine', 'b_samples', 'width', 'height')
        for name in positive_counts:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

        if self.mutations < 0:
            raise ConfigError(f"mutations must be >= 0, got {self.mutations}")
        if self.time_budget_s is not None and self.time_budget_s <= 0:
            raise ConfigError(f"time_budget_s must be > 0, got {self.time_budget_s}")
        if self.k_max < 2:
            raise ConfigError(f"k_max must be >= 2, got {self.k_max}")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ConfigError(f"target_acceptance must lie in (0, 1), got {self.target_acceptance}")
        if self.gamma_max <= 0 or self.gamma_scale <= 0:
            raise ConfigError("gamma_max and gamma_scale must be > 0")
        if self.lambda_init < self.lambda_min:
            raise ConfigError(f"lambda_init ({self.lambda_init}) is below lambda_min ({self.lambda_min})")
        if self.sigma2_ratio <= 0:
            raise ConfigError(f"sigma2_ratio must be > 0, got {self.sigma2_ratio}")
        if self.epsilon_ray <= 0:
            raise ConfigError(f"epsilon_ray must be > 0, got {self.epsilon_ray}")
        if self.log_interval is not None and self.log_interval < 1:
            raise ConfigError(f"log_interval must be >= 1, got {self.log_interval}")
        return self

    @property
    def uses_quadtree(self) -> bool:
        return self.strategy == 'ra-quadtree'

    def to_manifest(self) -> List[str]:
        """Ordered key=value lines describing the resolved configuration"""
        lines = [f"{key}={value}" for key, value in asdict(self).items()]
        lines.append(f"version={__version__}")
        return lines

    @classmethod
    def from_overrides(cls, overrides: Dict[str, object], base: Optional['RenderConfig'] = None) -> 'RenderConfig':
        """Apply a mapping of field overrides on top of base (defaults if None)"""
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(overrides) - known)
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        config = replace(base or cls(), **overrides)
        return config.validate()
