"""
MLT renderer
Normalisation estimate, chain start-up, the mutation loop over parallel
chains with refinement barriers, film splatting and the path-traced reference
"""

import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from adaptation import KernelController, global_acceptance_identity
from diagnostics import RunLog, rrmse
from light_path import Contribution, Path, eval_contribution, path_pdf, trace_eye_subpath
from mutations import (LARGE_STEP, LENS, PERTURBATION_STRATEGIES, InvalidStateError, StrategySet,
                       large_step, lens_perturb, mh_accept, multichain_perturb)
from partition import format_region_id
from render_config import RenderConfig
from sampling_core import CanonicalPoint2, RandomSequence, luminance
from scene import SceneModel

# Large steps tried per chain before the scene is declared black
MAX_INIT_ATTEMPTS = 100_000
# Mutations per chain between wall-clock checks
TIME_SLICE = 2000
REFERENCE_STREAM = 0xFFFFFFFF

TRACE_COLUMNS = ['mutation_index', 'region_id', 'n_k', 'lambda', 'alpha_hat']
CHAIN_TRACE_COLUMNS = ['mutation', 'pi', 'accept_prob', 'accepted', 'u', 'v']


class BlackSceneError(RuntimeError):
    """No light reaches the camera"""


class Film:
    """RGB accumulation buffer, row 0 at the top of the image"""

    def __init__(self, width: int, height: int):
        self.width = width
        self.height = height
        self.buffer = np.zeros((height, width, 3))
        self.weight = 0.0        # total luminance weight splatted
        self.samples = 0         # mutations (or independent samples) accounted for

    def pixel_of(self, point: CanonicalPoint2):
        column = min(int(point.u * self.width), self.width - 1)
        row = min(int((1.0 - point.v) * self.height), self.height - 1)
        return row, column

    def add(self, point: CanonicalPoint2, rgb: np.ndarray):
        row, column = self.pixel_of(point)
        self.buffer[row, column] += rgb
        self.weight += luminance(rgb)

    def merge(self, other: 'Film'):
        self.buffer += other.buffer
        self.weight += other.weight
        self.samples += other.samples

    def finalize(self, scale: float) -> np.ndarray:
        """scale * buffer / samples"""
        if self.samples == 0:
            return np.zeros_like(self.buffer)
        return scale * self.buffer / self.samples


def splat(film: Film, a: float, current: Contribution, proposal: Optional[Contribution]):
    """Expected-value splat of one mutation: (1-a) f(x)/pi(x) and a f(y)/pi(y)"""
    if a < 1.0 and current.pi > 0.0:
        film.add(current.raster, (1.0 - a) * current.f / current.pi)
    if a > 0.0 and proposal is not None and proposal.pi > 0.0:
        film.add(proposal.raster, a * proposal.f / proposal.pi)
    film.samples += 1


class BEstimate(NamedTuple):
    b: float
    stderr: float
    samples: int


def estimate_b(scene: SceneModel, samples: int, rng: RandomSequence, k_max: int) -> BEstimate:
    """Independent estimate of the integral of pi over path space"""
    if samples < 1:
        raise ValueError("sample count must be >= 1")
    values = np.zeros(samples)
    for i in range(samples):
        subpath = trace_eye_subpath(scene, rng, k_max)
        if not subpath.reached_emitter:
            continue
        path = subpath.to_path()
        pdf = path_pdf(scene, path)
        if pdf > 0.0:
            values[i] = eval_contribution(scene, path).pi / pdf
    if not values.any():
        raise BlackSceneError("no light path reached an emitter during normalisation")
    stderr = float(values.std(ddof=1) / math.sqrt(samples)) if samples > 1 else 0.0
    return BEstimate(float(values.mean()), stderr, samples)


@dataclass(eq=False)
class ChainState:
    index: int
    rng: RandomSequence
    path: Path
    contribution: Contribution
    film: Film
    mutations: int = 0
    accepted: int = 0
    perturbation_proposals: int = 0
    perturbation_acceptance: float = 0.0
    trace_rows: Optional[List[tuple]] = None


def initial_chain(scene: SceneModel, index: int, rng: RandomSequence, config: RenderConfig) -> ChainState:
    """Repeat large steps until the chain sits on a path with pi > 0"""
    for _ in range(MAX_INIT_ATTEMPTS):
        proposal = large_step(scene, rng, None, config.k_max)
        if not proposal.rejected and proposal.contribution.pi > 0.0:
            film = Film(config.width, config.height)
            return ChainState(index, rng, proposal.path, proposal.contribution, film)
    raise BlackSceneError(f"chain {index} found no contributing path in {MAX_INIT_ATTEMPTS} large steps")


class MutationCounter:
    """Global mutation index shared by every chain"""

    def __init__(self):
        self._value = 0
        self._lock = threading.Lock()

    def next(self) -> int:
        with self._lock:
            value = self._value
            self._value += 1
            return value


@dataclass
class RenderResult:
    image: np.ndarray
    film: Film
    b: float
    b_stderr: float
    mutations: int
    seconds: float
    controller: KernelController
    run_log: RunLog
    perturbation_proposals: int = 0
    perturbation_acceptance: float = 0.0
    accepted: int = 0
    refinements: int = 0
    splits: int = 0
    chain_trace: Optional[pd.DataFrame] = None
    config: Optional[RenderConfig] = None
    chains: List[ChainState] = field(default_factory=list)

    @property
    def mean_acceptance(self) -> float:
        """Mean MH acceptance probability of perturbation proposals"""
        if self.perturbation_proposals == 0:
            return 0.0
        return self.perturbation_acceptance / self.perturbation_proposals

    @property
    def acceptance_identity_residual(self) -> float:
        return global_acceptance_identity(self.controller.tallies(), self.perturbation_acceptance,
                                          self.perturbation_proposals)

    def adaptation_trace(self) -> pd.DataFrame:
        rows = [(e.mutation_index, format_region_id(e.region_id), e.n_k, e.lam, e.alpha_hat)
                for e in self.controller.trace]
        return pd.DataFrame(rows, columns=TRACE_COLUMNS)


class MLTRenderer:
    """Runs the chains of one render against a shared controller"""

    def __init__(self, scene: SceneModel, config: RenderConfig, keep_trace: bool = False):
        self.config = config.validate()
        self.scene = scene.with_film(config.width, config.height)
        self.camera = self.scene.camera
        self.controller = KernelController.from_config(
            config, keep_trace=keep_trace or config.trace_path is not None)
        self.strategies = StrategySet(PERTURBATION_STRATEGIES[config.perturbation])
        self.counter = MutationCounter()

    def mutate(self, chain: ChainState):
        """One Metropolis-Hastings step of one chain"""
        rng = chain.rng
        path, current = chain.path, chain.contribution
        probabilities = self.strategies.probabilities(path)
        strategy = self.strategies.choose(probabilities, rng)
        index = self.counter.next()

        region = None
        if strategy == LARGE_STEP:
            proposal = large_step(self.scene, rng, path, self.config.k_max)
        else:
            region = self.controller.classify(path, self.camera)
            if region is None:
                raise InvalidStateError("current path cannot be classified")
            self.controller.record_visit(region)
            sigma = self.controller.sigma_for(region)
            if strategy == LENS:
                proposal = lens_perturb(self.scene, path, sigma, rng)
            else:
                proposal = multichain_perturb(self.scene, path, sigma[0], sigma[1], rng)

        s_fwd = probabilities[strategy]
        s_rev = 0.0 if proposal.rejected else self.strategies.probabilities(proposal.path)[strategy]
        a = mh_accept(current, proposal, s_fwd, s_rev)

        if region is not None:
            self.controller.record_acceptance(region, a, index)
            chain.perturbation_proposals += 1
            chain.perturbation_acceptance += a

        splat(chain.film, a, current, proposal.contribution)

        if a > 0.0 and rng.uniform() < a:
            if strategy != LARGE_STEP:
                assert proposal.path.specular_signature() == path.specular_signature()
            chain.path = proposal.path
            chain.contribution = proposal.contribution
            chain.accepted += 1
            accepted = True
        else:
            accepted = False
        assert chain.contribution.pi > 0.0
        chain.mutations += 1

        if chain.trace_rows is not None:
            raster = chain.contribution.raster
            chain.trace_rows.append((chain.mutations, chain.contribution.pi, a, int(accepted), raster.u, raster.v))

    def run_batch(self, chain: ChainState, count: int):
        for _ in range(count):
            self.mutate(chain)

    def _current_image(self, chains: List[ChainState], b: float) -> np.ndarray:
        film = Film(self.config.width, self.config.height)
        for chain in chains:
            film.merge(chain.film)
        return film.finalize(b)

    def render(self, reference: Optional[np.ndarray] = None,
               progress: Optional[Callable[[str], None]] = None) -> RenderResult:
        config = self.config
        report = progress or (lambda message: None)
        started = time.perf_counter()
        run_log = RunLog()

        if config.mutations == 0 and config.time_budget_s is None:
            film = Film(config.width, config.height)
            return RenderResult(film.finalize(0.0), film, 0.0, 0.0, 0, 0.0, self.controller, run_log, config=config)

        estimate = estimate_b(self.scene, config.b_samples, RandomSequence(config.seed, 0), config.k_max)
        report(f"[RENDER] b = {estimate.b:.6g} +/- {estimate.stderr:.2g} from {estimate.samples} samples")

        chains = [initial_chain(self.scene, i, RandomSequence(config.seed, i + 1), config)
                  for i in range(config.chains)]
        if config.chain_trace_path is not None:
            chains[0].trace_rows = []

        log_every = config.log_interval if reference is not None else None
        next_refine = config.m_refine
        next_log = log_every
        done = 0
        refinements = 0
        splits = 0

        with ThreadPoolExecutor(max_workers=config.chains) as pool:
            while True:
                if config.time_budget_s is not None:
                    if time.perf_counter() - started >= config.time_budget_s:
                        break
                    epoch = TIME_SLICE * config.chains
                else:
                    epoch = config.mutations - done
                    if epoch <= 0:
                        break
                epoch = min(epoch, next_refine - done)
                if next_log is not None:
                    epoch = min(epoch, next_log - done)

                share, extra = divmod(epoch, config.chains)
                futures = [pool.submit(self.run_batch, chain, share + (1 if i < extra else 0))
                           for i, chain in enumerate(chains)]
                for future in futures:
                    future.result()
                done += epoch

                if done >= next_refine:
                    refinements += 1
                    new_splits = self.controller.refine(config.m_split)
                    splits += new_splits
                    if new_splits:
                        report(f"[REFINE] {new_splits} split(s) at {done:,} mutations, "
                               f"{self.controller.region_count} regions")
                    next_refine += config.m_refine

                if next_log is not None and done >= next_log:
                    image = self._current_image(chains, estimate.b)
                    proposals = sum(c.perturbation_proposals for c in chains)
                    acceptance = sum(c.perturbation_acceptance for c in chains)
                    run_log.record(time.perf_counter() - started, done, rrmse(image, reference).rrmse,
                                   acceptance / proposals if proposals else 0.0)
                    next_log += log_every

        film = Film(config.width, config.height)
        for chain in chains:
            film.merge(chain.film)
        seconds = time.perf_counter() - started
        report(f"[RENDER] {done:,} mutations in {seconds:.1f}s")

        chain_trace = None
        if chains[0].trace_rows is not None:
            chain_trace = pd.DataFrame(chains[0].trace_rows, columns=CHAIN_TRACE_COLUMNS)

        result = RenderResult(
            image=film.finalize(estimate.b),
            film=film,
            b=estimate.b,
            b_stderr=estimate.stderr,
            mutations=done,
            seconds=seconds,
            controller=self.controller,
            run_log=run_log,
            perturbation_proposals=sum(c.perturbation_proposals for c in chains),
            perturbation_acceptance=math.fsum(c.perturbation_acceptance for c in chains),
            accepted=sum(c.accepted for c in chains),
            refinements=refinements,
            splits=splits,
            chain_trace=chain_trace,
            config=config,
            chains=chains,
        )
        write_artifacts(result, config)
        return result


def write_artifacts(result: RenderResult, config: RenderConfig):
    """Adaptation trace, partition dump and chain trace, when their paths are configured"""
    if config.trace_path is not None:
        result.adaptation_trace().to_csv(config.trace_path, index=False)
    if config.partition_dump_path is not None:
        with open(config.partition_dump_path, 'w', encoding='utf-8') as f:
            for line in result.controller.dump_lines():
                f.write(line + '\n')
    if config.chain_trace_path is not None and result.chain_trace is not None:
        result.chain_trace.to_csv(config.chain_trace_path, index=False)


def run_render(scene: SceneModel, config: RenderConfig, reference: Optional[np.ndarray] = None,
               progress: Optional[Callable[[str], None]] = None, keep_trace: bool = False) -> RenderResult:
    return MLTRenderer(scene, config, keep_trace=keep_trace).render(reference, progress)


def render_reference(scene: SceneModel, config: RenderConfig, samples: int,
                     progress: Optional[Callable[[str], None]] = None) -> Film:
    """Path-traced estimate of every pixel: mean of 1_j f/p over independent eye paths"""
    scene = scene.with_film(config.width, config.height)
    rng = RandomSequence(config.seed, REFERENCE_STREAM)
    film = Film(config.width, config.height)
    report_every = max(1, samples // 10)
    for i in range(samples):
        subpath = trace_eye_subpath(scene, rng, config.k_max)
        if subpath.reached_emitter:
            path = subpath.to_path()
            contribution = eval_contribution(scene, path)
            if contribution.pi > 0.0:
                film.add(contribution.raster, contribution.f / path_pdf(scene, path))
        film.samples += 1
        if progress is not None and (i + 1) % report_every == 0:
            progress(f"[RENDER] reference {i + 1:,}/{samples:,} samples")
    return film
