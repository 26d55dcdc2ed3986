"""
Mutation strategies
Large step, lens perturbation and multi-chain perturbation, the suitability
s(j|x) over them, and the Metropolis-Hastings acceptance probability
"""

import math
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from light_path import (Contribution, Path, PathVertex, ZERO_CONTRIBUTION, abs_cos, eval_contribution,
                        path_pdf, surface_vertex, trace_eye_subpath)
from render_config import DEFAULT_K_MAX, PERTURBATION_PROBABILITY
from sampling_core import AngularKernel, RandomSequence, direction_pdf, perturb_direction
from scene import SceneModel, specular_response

LARGE_STEP = 'large_step'
LENS = 'lens'
MULTI_CHAIN = 'multi_chain'

# CLI / config spelling -> strategy id
PERTURBATION_STRATEGIES = {'lens': LENS, 'multi-chain': MULTI_CHAIN}


class InvalidStateError(RuntimeError):
    """The chain occupies a state with zero target density"""


@dataclass
class Proposal:
    strategy: str
    path: Optional[Path]
    contribution: Contribution
    forward_density: float = 0.0          # T(y|x)
    reverse_density: float = 0.0          # T(x|y)
    rejected: bool = False
    reason: str = ''
    forward_kernels: Tuple[float, ...] = ()
    reverse_kernels: Tuple[float, ...] = ()

    @classmethod
    def rejection(cls, strategy: str, reason: str) -> 'Proposal':
        return cls(strategy, None, ZERO_CONTRIBUTION, rejected=True, reason=reason)


class LensLayout(NamedTuple):
    s: int                  # 1-based index of y_s
    t: Optional[int]        # 1-based index of z_t, None when y_s is on the light


class ChainLayout(NamedTuple):
    starts: Tuple[int, ...]     # c_1 = 1, c_2, ... (1-based)
    s: int
    t: Optional[int]


# ---------------------------------------------------------------------------
# Eligibility
# ---------------------------------------------------------------------------

def _chain_end(path: Path, start: int) -> int:
    """First non-specular vertex after start (1-based); the light vertex ends every chain"""
    end = start + 1
    while end < path.k and path.vertex(end).is_specular:
        end += 1
    return end


def lens_eligibility(path: Path) -> Optional[LensLayout]:
    end = _chain_end(path, 1)
    if end == path.k:
        return LensLayout(end, None)
    if not path.vertex(end + 1).is_specular:
        return LensLayout(end, end + 1)
    return None


def multichain_eligibility(path: Path) -> Optional[ChainLayout]:
    """Chains are appended until one ends on the light or before a non-specular z_t.

    At least two perturbed directions are required; a path whose first chain
    already reaches the light has nothing for the second kernel to act on.
    """
    starts = [1]
    start = 1
    while True:
        end = _chain_end(path, start)
        if end == path.k:
            if len(starts) >= 2:
                return ChainLayout(tuple(starts), end, None)
            return None
        if len(starts) >= 2 and not path.vertex(end + 1).is_specular:
            return ChainLayout(tuple(starts), end, end + 1)
        starts.append(end)
        start = end


# ---------------------------------------------------------------------------
# Suitability
# ---------------------------------------------------------------------------

def perturbation_applies(path: Path, perturbation: str) -> bool:
    if perturbation == LENS:
        return lens_eligibility(path) is not None
    if perturbation == MULTI_CHAIN:
        return multichain_eligibility(path) is not None
    raise ValueError(f"unknown perturbation {perturbation!r}")


def suitability(path: Path, strategy: str, perturbation: str,
                perturbation_probability: float = PERTURBATION_PROBABILITY) -> float:
    applies = perturbation_applies(path, perturbation)
    if strategy == perturbation:
        return perturbation_probability if applies else 0.0
    if strategy == LARGE_STEP:
        return 1.0 - perturbation_probability if applies else 1.0
    return 0.0


class StrategySet:
    """Large step plus one configured perturbation"""

    def __init__(self, perturbation: str, perturbation_probability: float = PERTURBATION_PROBABILITY):
        if perturbation not in (LENS, MULTI_CHAIN):
            raise ValueError(f"unknown perturbation {perturbation!r}")
        self.perturbation = perturbation
        self.perturbation_probability = perturbation_probability

    @property
    def strategies(self) -> Tuple[str, str]:
        return LARGE_STEP, self.perturbation

    def probabilities(self, path: Path) -> Dict[str, float]:
        return {strategy: suitability(path, strategy, self.perturbation, self.perturbation_probability)
                for strategy in self.strategies}

    def choose(self, probabilities: Dict[str, float], rng: RandomSequence) -> str:
        if rng.uniform() < probabilities[self.perturbation]:
            return self.perturbation
        return LARGE_STEP


# ---------------------------------------------------------------------------
# Proposals
# ---------------------------------------------------------------------------

def large_step(scene: SceneModel, rng: RandomSequence, current: Optional[Path] = None,
               k_max: int = DEFAULT_K_MAX) -> Proposal:
    """Independent regeneration of a whole path by eye-subpath tracing"""
    subpath = trace_eye_subpath(scene, rng, k_max)
    if not subpath.reached_emitter:
        return Proposal.rejection(LARGE_STEP, 'no-path')
    path = subpath.to_path()
    forward = path_pdf(scene, path)
    if forward <= 0.0:
        return Proposal.rejection(LARGE_STEP, 'no-path')
    reverse = path_pdf(scene, current) if current is not None else 0.0
    return Proposal(LARGE_STEP, path, eval_contribution(scene, path), forward, reverse)


def _propagate_chain(scene: SceneModel, origin: np.ndarray, direction: np.ndarray,
                     template: Tuple[PathVertex, ...]):
    """Re-trace one chain along the template's vertex types.

    Returns (new vertices, None) or (None, rejection reason).
    """
    new_vertices: List[PathVertex] = []
    for position, old in enumerate(template):
        hit = scene.intersect(origin, direction)
        if hit is None:
            return None, 'miss'
        vertex = surface_vertex(scene, hit)
        if vertex.on_emitter != old.on_emitter:
            return None, 'emitter-mismatch'
        if vertex.is_specular != old.is_specular:
            return None, 'vertex-type-mismatch'
        if new_vertices:
            new_vertices[-1].traced = True
        new_vertices.append(vertex)
        if position == len(template) - 1:
            break
        response = specular_response(scene.material(hit.material_id), -direction, hit.normal, old.event)
        if response is None:
            return None, 'specular-event-infeasible'
        vertex.event = old.event
        origin, direction = hit.position, response[0]
    return new_vertices, None


def _kernel_and_jacobian(path_from: Path, path_to: Path, index: int, kernel: AngularKernel) -> Tuple[float, float]:
    """Angular kernel density for the direction leaving x_index and the area conversion of its hit"""
    omega_from = path_from.direction(index)
    omega_to = path_to.direction(index)
    density = direction_pdf(kernel, omega_from, omega_to)
    jacobian = abs_cos(path_to.vertex(index + 1).normal, omega_to) / path_to.distances[index - 1] ** 2
    return density, jacobian


def lens_density(path_from: Path, path_to: Path, sigma1: float) -> Tuple[float, Tuple[float, ...]]:
    """T(path_to | path_from) for the lens perturbation, plus its kernel factor"""
    density, jacobian = _kernel_and_jacobian(path_from, path_to, 1, AngularKernel(sigma1))
    return density * jacobian, (density,)


def multichain_density(path_from: Path, path_to: Path, layout: ChainLayout,
                       sigma1: float, sigma2: float) -> Tuple[float, Tuple[float, ...]]:
    """T(path_to | path_from) for the multi-chain perturbation: one kernel factor per chain"""
    total = 1.0
    kernels = []
    for i, start in enumerate(layout.starts):
        kernel = AngularKernel(sigma1 if i == 0 else sigma2)
        density, jacobian = _kernel_and_jacobian(path_from, path_to, start, kernel)
        kernels.append(density)
        total *= density * jacobian
    return total, tuple(kernels)


def lens_perturb(scene: SceneModel, path: Path, sigma1: float, rng: RandomSequence) -> Proposal:
    layout = lens_eligibility(path)
    if layout is None:
        return Proposal.rejection(LENS, 'ineligible')
    kernel = AngularKernel(sigma1)
    camera = path.vertices[0]
    omega_new = perturb_direction(path.directions[0], kernel, rng)

    chain, reason = _propagate_chain(scene, camera.position, omega_new, path.vertices[1:layout.s])
    if chain is None:
        return Proposal.rejection(LENS, reason)

    proposed = Path((camera,) + tuple(chain) + path.vertices[layout.s:])
    forward, forward_kernels = lens_density(path, proposed, sigma1)
    reverse, reverse_kernels = lens_density(proposed, path, sigma1)
    return Proposal(LENS, proposed, eval_contribution(scene, proposed), forward, reverse,
                    forward_kernels=forward_kernels, reverse_kernels=reverse_kernels)


def multichain_perturb(scene: SceneModel, path: Path, sigma1: float, sigma2: float,
                       rng: RandomSequence) -> Proposal:
    layout = multichain_eligibility(path)
    if layout is None:
        return Proposal.rejection(MULTI_CHAIN, 'ineligible')

    vertices: List[PathVertex] = [path.vertices[0]]
    bounds = layout.starts[1:] + (layout.s,)
    for i, (start, end) in enumerate(zip(layout.starts, bounds)):
        kernel = AngularKernel(sigma1 if i == 0 else sigma2)
        omega_new = perturb_direction(path.direction(start), kernel, rng)
        origin = vertices[-1]
        chain, reason = _propagate_chain(scene, origin.position, omega_new, path.vertices[start:end])
        if chain is None:
            return Proposal.rejection(MULTI_CHAIN, reason)
        if i > 0:
            origin.traced = True
        vertices.extend(chain)

    proposed = Path(tuple(vertices) + path.vertices[layout.s:])
    forward, forward_kernels = multichain_density(path, proposed, layout, sigma1, sigma2)
    reverse, reverse_kernels = multichain_density(proposed, path, layout, sigma1, sigma2)
    return Proposal(MULTI_CHAIN, proposed, eval_contribution(scene, proposed), forward, reverse,
                    forward_kernels=forward_kernels, reverse_kernels=reverse_kernels)


# ---------------------------------------------------------------------------
# Acceptance
# ---------------------------------------------------------------------------

def acceptance_ratio(current: Contribution, proposal: Proposal, s_fwd: float, s_rev: float) -> float:
    """Unclamped pi(y) T(x|y) s(j|y) / pi(x) T(y|x) s(j|x)"""
    if not current.pi > 0.0:
        raise InvalidStateError(f"current state has pi = {current.pi}")
    if proposal.rejected or not proposal.contribution.pi > 0.0:
        return 0.0
    numerator = proposal.contribution.pi * proposal.reverse_density * s_rev
    denominator = current.pi * proposal.forward_density * s_fwd
    if not denominator > 0.0 or not math.isfinite(denominator):
        return 0.0
    ratio = numerator / denominator
    if math.isnan(ratio):
        return 0.0
    return ratio


def mh_accept(current: Contribution, proposal: Proposal, s_fwd: float, s_rev: float) -> float:
    return min(1.0, acceptance_ratio(current, proposal, s_fwd, s_rev))
