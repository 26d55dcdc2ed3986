"""
Kernel adaptation
Per-region adaptation state and the Fixed / Global / regional controllers
that steer each region's perturbation size toward a target acceptance
"""

import math
import threading
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

from partition import (CompositePartition4D, Grid2D, Quadtree, classify_lens, classify_multichain,
                       dump_lines)
from render_config import (DEFAULT_BATCH_LENGTH, DEFAULT_GAMMA_MAX, DEFAULT_GAMMA_SCALE,
                           DEFAULT_LAMBDA_INIT, DEFAULT_LAMBDA_MIN, DEFAULT_TARGET_ACCEPTANCE,
                           RenderConfig)


# Perturbation widths beyond this behave like large steps
MAX_SIGMA = 1e6
MAX_LAMBDA = 2.0 * math.log(MAX_SIGMA)


@dataclass(frozen=True)
class AdaptationConfig:
    batch_length: int = DEFAULT_BATCH_LENGTH
    gamma_max: float = DEFAULT_GAMMA_MAX
    gamma_scale: float = DEFAULT_GAMMA_SCALE
    target_acceptance: float = DEFAULT_TARGET_ACCEPTANCE
    lambda_init: float = DEFAULT_LAMBDA_INIT
    lambda_min: float = DEFAULT_LAMBDA_MIN

    def __post_init__(self):
        if self.batch_length < 1:
            raise ValueError("batch_length must be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ValueError("target_acceptance must lie in (0, 1)")

    @classmethod
    def from_render_config(cls, config: RenderConfig) -> 'AdaptationConfig':
        return cls(config.batch_length, config.gamma_max, config.gamma_scale,
                   config.target_acceptance, config.lambda_init, config.lambda_min)


@dataclass(eq=False)
class RegionState:
    lam: float
    visits: int = 0              # i_k, since the last update
    accumulated: float = 0.0     # A_k, since the last update
    updates: int = 1             # n_k
    total_visits: int = 0
    total_acceptance: float = 0.0
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def sigma(self) -> float:
        return sigma_from_lambda(self.lam)

    def split_child(self) -> 'RegionState':
        """Child region after a quadtree split: same lambda, a quarter of the updates"""
        return RegionState(lam=self.lam, updates=max(1, self.updates // 4))


class UpdateEvent(NamedTuple):
    mutation_index: Optional[int]
    region_id: object
    n_k: int
    lam: float
    alpha_hat: float
    previous_lam: float


def step_size(j: int, config: AdaptationConfig) -> float:
    return min(config.gamma_max, config.gamma_scale / math.sqrt(j))


def sgn(x: float) -> int:
    return (x > 0) - (x < 0)


def update_lambda(state: RegionState, alpha_hat: float, config: AdaptationConfig) -> float:
    """New lambda after a batch; the step index is the region's update count n_k (starting at 1)"""
    gamma = step_size(state.updates, config)
    return max(config.lambda_min, state.lam + gamma * sgn(alpha_hat - config.target_acceptance))


def sigma_from_lambda(lam: float) -> float:
    """sqrt(exp(lambda)), capped at MAX_SIGMA"""
    if lam >= MAX_LAMBDA:
        return MAX_SIGMA
    return math.exp(0.5 * lam)


def global_acceptance_identity(tallies: Sequence[Tuple[float, int]], total_acceptance: float,
                               total_count: int) -> float:
    """|global mean acceptance - visit-weighted mean of per-region means|"""
    if total_count == 0:
        return 0.0
    weighted = math.fsum((count / total_count) * (acceptance / count)
                         for acceptance, count in tallies if count > 0)
    return abs(total_acceptance / total_count - weighted)


VARIANTS = ('fixed', 'global', 'ra-grid', 'ra-quadtree')


def build_partition(config: RenderConfig, make_state):
    """Single region for fixed/global; grids or quadtrees (behind a screen grid for multi-chain) otherwise"""
    multichain = config.perturbation == 'multi-chain'
    if config.strategy in ('fixed', 'global'):
        return Grid2D(1, make_state)
    if config.strategy == 'ra-grid':
        if multichain:
            return CompositePartition4D(config.n_top, lambda: Grid2D(config.n_bottom, make_state))
        return Grid2D(config.n_top, make_state)
    if not config.uses_quadtree:
        raise ValueError(f"unknown strategy {config.strategy!r}")
    if multichain:
        return CompositePartition4D(config.n_top, lambda: Quadtree(make_state))
    return Quadtree(make_state)


class KernelController:
    """Maps a path to its region and owns every region's adaptation state"""

    def __init__(self, variant: str, perturbation: str, config: AdaptationConfig,
                 partition=None, sigma2_ratio: float = 1.0, keep_trace: bool = False):
        if variant not in VARIANTS:
            raise ValueError(f"unknown variant {variant!r}")
        self.variant = variant
        self.perturbation = perturbation
        self.config = config
        self.sigma2_ratio = sigma2_ratio
        self.keep_trace = keep_trace
        self.trace: List[UpdateEvent] = []
        self._trace_lock = threading.Lock()
        self.partition = partition if partition is not None else Grid2D(1, self.new_state)
        self.is_multichain = isinstance(self.partition, CompositePartition4D)

    @classmethod
    def from_config(cls, config: RenderConfig, keep_trace: bool = False) -> 'KernelController':
        adaptation = AdaptationConfig.from_render_config(config)
        partition = build_partition(config, lambda: RegionState(lam=adaptation.lambda_init))
        return cls(config.strategy, config.perturbation, adaptation, partition=partition,
                   sigma2_ratio=config.sigma2_ratio, keep_trace=keep_trace)

    def new_state(self) -> RegionState:
        return RegionState(lam=self.config.lambda_init)

    @property
    def adapts(self) -> bool:
        return self.variant != 'fixed'

    @property
    def region_count(self) -> int:
        return self.partition.leaf_count

    def classify(self, path, camera):
        """Region id of the current path, or None when it cannot be classified"""
        if self.is_multichain:
            return classify_multichain(path, self.partition, camera)
        return classify_lens(path, self.partition, camera)

    def record_visit(self, region_id):
        self.partition.record_visit(region_id)

    def sigma_for(self, region_id) -> Union[float, Tuple[float, float]]:
        """sigma_k, or the (sigma1, sigma2) pair for the multi-chain perturbation"""
        sigma = sigma_from_lambda(self.partition.state(region_id).lam)
        if self.perturbation == 'multi-chain':
            return sigma, sigma * self.sigma2_ratio
        return sigma

    def record_acceptance(self, region_id, a: float, mutation_index: Optional[int] = None) -> Optional[UpdateEvent]:
        """Accumulate one perturbation acceptance; apply the batch update when i_k reaches L"""
        state = self.partition.state(region_id)
        with state.lock:
            state.total_visits += 1
            state.total_acceptance += a
            if not self.adapts:
                return None
            state.accumulated += a
            state.visits += 1
            if state.visits < self.config.batch_length:
                return None
            alpha_hat = state.accumulated / self.config.batch_length
            previous = state.lam
            n_k = state.updates
            state.lam = update_lambda(state, alpha_hat, self.config)
            state.visits = 0
            state.accumulated = 0.0
            state.updates += 1
            lam = state.lam
        event = UpdateEvent(mutation_index, region_id, n_k, lam, alpha_hat, previous)
        if self.keep_trace:
            with self._trace_lock:
                self.trace.append(event)
        return event

    def refine(self, m_split: int) -> int:
        if self.variant != 'ra-quadtree':
            return 0
        return self.partition.refine(m_split)

    def states(self) -> List[RegionState]:
        return self.partition.all_states()

    def tallies(self) -> List[Tuple[float, int]]:
        return [(state.total_acceptance, state.total_visits) for state in self.states()]

    def mean_acceptance(self) -> float:
        tallies = self.tallies()
        count = sum(n for _, n in tallies)
        return math.fsum(a for a, _ in tallies) / count if count else 0.0

    def dump_lines(self) -> List[str]:
        return dump_lines(self.partition)
