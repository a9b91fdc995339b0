"""Block-randomized stochastic proximal gradient CPD (BrasCPD / AdaCPD).

One iteration samples a mode n and a batch of mode-n fibers, forms the
minibatch gradient for A_(n) and takes a proximal step on that factor only.
BrasCPD uses the stepsize alpha / r**beta; AdaCPD uses entrywise Adagrad
stepsizes accumulated per mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, DivergedError, MetricError
from .gradient import stochastic_block_gradient
from .metrics import TraceRecord, cost, mse
from .prox import Regularizer, apply_prox
from .sampling import BatchSchedule, SamplerState, sample_fibers, sample_mode
from .tensor import DenseTensor, FactorModel, full_mttkrp, gram_hadamard

ALGORITHMS = ("brascpd", "adacpd")


@dataclass(frozen=True)
class StepSchedule:
    """``power_decay``: alpha / r**beta.  ``adagrad``: eta / (b + sum G^2)**(1/2 + epsilon).

    ``include_current`` selects whether the Adagrad sum contains the gradient
    of the step being taken (standard Adagrad) or only earlier ones. With
    the small default b the history-only form makes the first step on every
    mode eta / sqrt(b) times the gradient.
    """

    kind: str = "power_decay"
    alpha: float = 0.1
    beta: float = 1e-6
    eta: float = 1.0
    b: float = 1e-6
    epsilon: float = 0.0
    include_current: bool = True

    def __post_init__(self):
        if self.kind not in ("power_decay", "adagrad"):
            raise ValueError(f"unknown step schedule {self.kind!r}")
        if self.kind == "power_decay" and (self.alpha <= 0 or self.beta < 0):
            raise ValueError("power_decay needs alpha > 0 and beta >= 0")
        if self.kind == "adagrad" and (self.eta <= 0 or self.b < 0 or self.epsilon < 0):
            raise ValueError("adagrad needs eta > 0, b >= 0 and epsilon >= 0")

    @property
    def robbins_monro(self) -> bool:
        """Whether alpha / r**beta has a divergent sum and a summable square."""
        return self.kind == "power_decay" and 0.5 < self.beta <= 1.0

    def alpha_at(self, r: int) -> float:
        if r < 1:
            raise ValueError("iterations are numbered from 1")
        return self.alpha / r ** self.beta


@dataclass
class StoppingRule:
    max_iterations: Optional[int] = None
    max_mttkrp: Optional[float] = None
    max_wall_seconds: Optional[float] = None
    target_cost: Optional[float] = None

    def __post_init__(self):
        if all(v is None for v in (self.max_iterations, self.max_mttkrp,
                                   self.max_wall_seconds, self.target_cost)):
            raise ValueError("a stopping rule needs at least one bound")


@dataclass
class SolverConfig:
    algorithm: str = "adacpd"
    rank: int = 10
    batch: BatchSchedule = field(default_factory=BatchSchedule)
    schedule: Optional[StepSchedule] = None
    seed: int = 0
    mode_weights: Optional[Sequence[float]] = None
    safeguard_mu: float = 0.0
    trace_every: float = 1.0
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.schedule is None:
            kind = "adagrad" if self.algorithm == "adacpd" else "power_decay"
            self.schedule = StepSchedule(kind=kind)
        want = "adagrad" if self.algorithm == "adacpd" else "power_decay"
        if self.schedule.kind != want:
            raise ValueError(f"{self.algorithm} needs a {want} schedule")
        if self.rank < 1:
            raise ValueError("rank must be at least 1")
        if self.trace_every <= 0:
            raise ValueError("trace_every must be positive")


class SolverState:
    """Mutable iterate plus counters; owned by a single solver loop.

    ``r`` counts completed iterations. ``fibers_sampled[n]`` counts mode-n
    fibers drawn so far, so mode n has consumed fibers_sampled[n] / J_n
    MTTKRP-equivalents.
    """

    def __init__(self, model: FactorModel, sampler: SamplerState):
        self.model = model
        self.r = 0
        self.sampler = sampler
        self.grad_accum = [np.zeros_like(a) for a in model.factors]
        self.fibers_sampled = np.zeros(model.ndim, dtype=np.int64)
        self.sampled_entries = 0
        self.wall_seconds = 0.0
        self.last_mode: Optional[int] = None
        self.last_stepsize = None
        self._num_fibers = None

    def _fibers(self, shape) -> np.ndarray:
        if self._num_fibers is None:
            total = int(np.prod(shape))
            self._num_fibers = np.array([total // s for s in shape], dtype=np.int64)
        return self._num_fibers

    def mode_mttkrp(self, mode: int) -> float:
        return float(self.fibers_sampled[mode - 1] / self._fibers(self.model.shape)[mode - 1])

    @property
    def mttkrp_equivalents(self) -> float:
        return float(np.sum(self.fibers_sampled / self._fibers(self.model.shape)))

    @property
    def all_mode_mttkrp(self) -> float:
        return self.mttkrp_equivalents / self.model.ndim


@dataclass(frozen=True)
class Safeguarded:
    """Regularizer plus the proximal term mu * ||A - A_prev||_F^2."""

    reg: Regularizer
    mu: float = 0.0

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("safeguard weight must be >= 0")


def proximal_safeguard(reg, mu: float) -> Safeguarded:
    """Wrap ``reg`` so each step also penalizes movement away from the current factor."""
    if isinstance(reg, Safeguarded):
        return Safeguarded(reg.reg, mu)
    return Safeguarded(reg, mu)


def proximal_update(reg, A: np.ndarray, G: np.ndarray, step) -> np.ndarray:
    """Prox of ``reg`` at A - step * G; ``step`` is a scalar or entrywise matrix.

    With a safeguard weight mu the quadratic model gains mu * ||Z - A||^2,
    which is again a prox at (A - step*G + 2 step mu A) / (1 + 2 step mu)
    with stepsize step / (1 + 2 step mu).
    """
    mu = 0.0
    if isinstance(reg, Safeguarded):
        reg, mu = reg.reg, reg.mu
    V = A - step * G
    if mu > 0:
        c = 1.0 + 2.0 * mu * step
        V = (V + 2.0 * mu * step * A) / c
        step = step / c
    if np.ndim(step) > 0 and not reg.separable:
        step = float(np.mean(step))
    return apply_prox(reg, V, step)


def adagrad_stepsize(accum: np.ndarray, schedule: StepSchedule) -> np.ndarray:
    """Entrywise eta / (b + accum)**(1/2 + epsilon); zero where the denominator is zero."""
    denom = (schedule.b + accum) ** (0.5 + schedule.epsilon)
    out = np.zeros_like(denom)
    np.divide(schedule.eta, denom, out=out, where=denom > 0)
    return out


def _regs_for(regs, ndim: int) -> list:
    if regs is None:
        return [Regularizer()] * ndim
    if isinstance(regs, (Regularizer, Safeguarded)):
        return [regs] * ndim
    regs = list(regs)
    if len(regs) != ndim:
        raise DimensionError(f"need {ndim} regularizers, got {len(regs)}")
    return regs


def _sample(state: SolverState, tensor: DenseTensor, batch: BatchSchedule):
    n = sample_mode(state.sampler)
    J = tensor.num_fibers(n)
    B = batch.size(state.r + 1, J)
    ids = sample_fibers(state.sampler, n, J, B)
    return n, ids


def _advance(state: SolverState, tensor: DenseTensor, n: int, ids: np.ndarray) -> None:
    state.r += 1
    state.fibers_sampled[n - 1] += ids.size
    state.sampled_entries += ids.size * tensor.shape[n - 1]
    state.last_mode = n


def bras_step(state: SolverState, tensor: DenseTensor, regs, schedule: StepSchedule,
              batch: BatchSchedule = BatchSchedule()) -> SolverState:
    """One BrasCPD iteration with stepsize alpha / r**beta (r counted from 1)."""
    if schedule.kind != "power_decay":
        raise ValueError("bras_step needs a power_decay schedule")
    regs = _regs_for(regs, tensor.ndim)
    n, ids = _sample(state, tensor, batch)
    alpha = schedule.alpha_at(state.r + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        G = stochastic_block_gradient(tensor, state.model, n, ids).G
        state.model.factors[n - 1] = proximal_update(regs[n - 1], state.model.factors[n - 1], G, alpha)
    state.last_stepsize = alpha
    _advance(state, tensor, n, ids)
    return state


def ada_step(state: SolverState, tensor: DenseTensor, regs, schedule: StepSchedule,
             batch: BatchSchedule = BatchSchedule()) -> SolverState:
    """One AdaCPD iteration; only the sampled mode's accumulator absorbs G**2."""
    if schedule.kind != "adagrad":
        raise ValueError("ada_step needs an adagrad schedule")
    regs = _regs_for(regs, tensor.ndim)
    n, ids = _sample(state, tensor, batch)
    with np.errstate(over="ignore", invalid="ignore"):
        G = stochastic_block_gradient(tensor, state.model, n, ids).G
        if schedule.include_current:
            state.grad_accum[n - 1] += G * G
        eta = adagrad_stepsize(state.grad_accum[n - 1], schedule)
        state.model.factors[n - 1] = proximal_update(regs[n - 1], state.model.factors[n - 1], G, eta)
        if not schedule.include_current:
            state.grad_accum[n - 1] += G * G
    state.last_stepsize = eta
    _advance(state, tensor, n, ids)
    return state


def init_state(tensor: DenseTensor, config: SolverConfig, init: Optional[FactorModel] = None) -> SolverState:
    """Seeded starting state: uniform[0, 1] factors unless ``init`` is given."""
    init_seed, sampler_seed = np.random.SeedSequence(config.seed).spawn(2)
    if init is None:
        rng = np.random.Generator(np.random.PCG64(init_seed))
        init = FactorModel([rng.random((s, config.rank)) for s in tensor.shape])
    else:
        init = init.copy()
        if init.rank != config.rank:
            raise DimensionError(f"initial model rank {init.rank} != configured rank {config.rank}")
    init.check_against(tensor.shape)
    sampler = SamplerState(sampler_seed, tensor.ndim, config.mode_weights)
    return SolverState(init, sampler)


def _guarded_cost(tensor: DenseTensor, model: FactorModel) -> float:
    with np.errstate(over="ignore", invalid="ignore"):
        return cost(tensor, model)


def _trace_mse(model: FactorModel, truth: FactorModel) -> list:
    # a prox step can zero a whole column; report NaN for that mode instead of failing
    out = []
    for n in range(1, model.ndim + 1):
        try:
            out.append(mse(model, truth, n))
        except MetricError:
            out.append(float("nan"))
    return out


def run(tensor: DenseTensor, config: SolverConfig, regs, stopping: StoppingRule,
        trace_sink: Optional[Callable[[TraceRecord], None]] = None,
        truth: Optional[FactorModel] = None, init: Optional[FactorModel] = None):
    """Iterate until a stopping bound is hit; returns ``(model, trace)``.

    A trace record is taken at the start, whenever the MTTKRP-equivalent
    counter crosses a multiple of ``config.trace_every``, and at the end.
    Raises DivergedError (carrying the last finite model and the trace so
    far) on non-finite factors or a cost above ``divergence_factor`` times
    the initial cost.
    """
    if tensor.ndim < 3:
        raise DimensionError("the solvers need a tensor of order >= 3")
    regs = _regs_for(regs, tensor.ndim)
    if config.safeguard_mu > 0:
        regs = [proximal_safeguard(r, config.safeguard_mu) for r in regs]
    state = init_state(tensor, config, init)
    step = ada_step if config.algorithm == "adacpd" else bras_step
    trace: list = []
    t0 = time.perf_counter()

    def record() -> TraceRecord:
        rec = TraceRecord(
            iteration=state.r,
            mttkrp_equivalents=state.mttkrp_equivalents,
            all_mode_mttkrp=state.all_mode_mttkrp,
            sampled_entries=state.sampled_entries,
            wall_seconds=state.wall_seconds,
            cost=_guarded_cost(tensor, state.model),
            mse_per_mode=_trace_mse(state.model, truth) if truth is not None else None,
        )
        trace.append(rec)
        if trace_sink is not None:
            trace_sink(rec)
        return rec

    def diverged(msg):
        nan = float("nan")
        progress = TraceRecord(state.r, state.mttkrp_equivalents, state.all_mode_mttkrp,
                               state.sampled_entries, state.wall_seconds, nan,
                               [nan] * tensor.ndim if truth is not None else None)
        return DivergedError(msg, model=state.model.copy(), trace=trace, iteration=state.r,
                             progress=progress)

    initial_cost = record().cost
    next_trace = config.trace_every
    last_recorded = 0

    def done() -> bool:
        if stopping.max_iterations is not None and state.r >= stopping.max_iterations:
            return True
        if stopping.max_mttkrp is not None and state.mttkrp_equivalents >= stopping.max_mttkrp - 1e-12:
            return True
        if stopping.max_wall_seconds is not None and state.wall_seconds >= stopping.max_wall_seconds:
            return True
        if stopping.target_cost is not None and trace[-1].cost <= stopping.target_cost:
            return True
        return False

    while not done():
        before = list(state.model.factors)
        step(state, tensor, regs, config.schedule, config.batch)
        n = state.last_mode
        state.wall_seconds = time.perf_counter() - t0
        if not np.all(np.isfinite(state.model.factors[n - 1])):
            state.model.factors[n - 1] = before[n - 1]
            raise diverged(f"non-finite factor {n} at iteration {state.r}")
        if state.mttkrp_equivalents >= next_trace - 1e-12:
            rec = record()
            last_recorded = state.r
            while next_trace <= state.mttkrp_equivalents + 1e-12:
                next_trace += config.trace_every
            if not np.isfinite(rec.cost) or rec.cost > config.divergence_factor * max(initial_cost, 1e-300):
                raise diverged(f"cost {rec.cost!r} exploded at iteration {state.r}")
    if last_recorded != state.r:
        record()
    return state.model, trace


def als_update(tensor: DenseTensor, model: FactorModel, mode: int, regularize: bool = True) -> np.ndarray:
    """Exact least-squares factor ((H^T H)^{-1} H^T X_(n))^T for one mode."""
    model.check_against(tensor.shape)
    gram = gram_hadamard(model.factors, mode)
    M = full_mttkrp(tensor, model, mode)
    F = gram.shape[0]
    if np.linalg.cond(gram) > 1e12:
        if not regularize:
            raise np.linalg.LinAlgError("Gram matrix is singular to working precision")
        tr = np.trace(gram)
        gram = gram + (1e-12 * tr / F if tr > 0 else 1e-12) * np.eye(F)
    return np.linalg.solve(gram, M.T).T
