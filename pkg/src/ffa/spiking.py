"""Spiking Hebbian trainer: LIF neurons, rate coding, output and eligibility traces.

Inputs are Bernoulli spike trains; a leaky integrate-and-fire layer turns
them into output spikes, and a smooth per-neuron output trace stands in for
the non-differentiable spike train when evaluating goodness, probability and
the modulation factor.  During the last few timesteps of each sample the
three-factor product ``modulation * trace * input_spike`` is fed through a
per-synapse eligibility trace that low-passes the updates into the weights.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._kernels import plasticity_step
from .analog import DenseLayer, EpochStats, TrainConfig, _RunningStats, check_finite, partition_for
from .core import (
    Polarity,
    PolarityPartition,
    ProbabilityFn,
    SigmoidProb,
    modulation_batch,
    probability_batch,
)
from .data import ContrastiveSample, ExperimentData, batches
from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

TRACE_KINDS = ("li", "hard_li", "relu")
RESET_MODES = ("to_zero", "subtract")


@dataclass(frozen=True)
class LIFConfig:
    """Leaky integrate-and-fire parameters.

    ``input_gain`` scales the injected current; at the default weight-init
    scale a gain of 1 leaves the layer essentially silent, so the default
    is picked to give healthy initial firing rates.
    """

    decay: float = 0.85
    threshold: float = 1.0
    reset_mode: str = "to_zero"
    input_gain: float = 4.0

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigError("lif decay must be in [0, 1]")
        if self.reset_mode not in RESET_MODES:
            raise ConfigError(f"reset_mode must be one of {RESET_MODES}")


@dataclass
class LIFState:
    """Membrane potentials plus the dynamics parameters that govern them."""

    potential: np.ndarray
    decay: float = 0.85
    threshold: float = 1.0
    reset_mode: str = "to_zero"
    input_gain: float = 1.0

    @classmethod
    def zeros(cls, shape, config: LIFConfig) -> "LIFState":
        return cls(
            np.zeros(shape),
            decay=config.decay,
            threshold=config.threshold,
            reset_mode=config.reset_mode,
            input_gain=config.input_gain,
        )


def lif_step(state: LIFState, weights: np.ndarray, in_spikes: np.ndarray) -> np.ndarray:
    """Integrate one timestep and return the binary output spikes.

    Accepts a single spike vector [n_in] or a lockstep batch [B, n_in]
    (with a matching [B, n_out] potential).
    """
    in_spikes = np.asarray(in_spikes, dtype=np.float64)
    if in_spikes.ndim == 1:
        current = weights @ in_spikes
    else:
        current = in_spikes @ weights.T
    state.potential *= state.decay
    state.potential += state.input_gain * current
    out = state.potential >= state.threshold
    if state.reset_mode == "to_zero":
        state.potential[out] = 0.0
    else:
        state.potential[out] -= state.threshold
    return out.astype(np.float64)


@dataclass(frozen=True)
class TraceConfig:
    """Which output-trace dynamics to run and their step/decay constants."""

    kind: str = "relu"
    mu: float = 0.1
    tau_o: float = 0.9

    def __post_init__(self):
        if self.kind not in TRACE_KINDS:
            raise ConfigError(f"trace kind must be one of {TRACE_KINDS}")
        if not 0.0 <= self.tau_o < 1.0:
            raise ConfigError("tau_o must be in [0, 1)")


@dataclass
class OutputTrace:
    """Per-neuron smooth summary of recent output spikes."""

    kind: str
    value: np.ndarray
    mu: float = 0.1
    tau_o: float = 0.9

    @classmethod
    def zeros(cls, shape, config: TraceConfig) -> "OutputTrace":
        return cls(config.kind, np.zeros(shape), mu=config.mu, tau_o=config.tau_o)


def trace_step(trace: OutputTrace, out_spikes: np.ndarray) -> OutputTrace:
    """Advance the trace one timestep, elementwise.

    li:      T <- mu * I + tau_o * T         (leaky integration)
    hard_li: T <- I + tau_o * (1 - I) * T    (a spike pins the trace to 1)
    relu:    T <- mu * I + T                 (pure accumulation)
    """
    I = np.asarray(out_spikes, dtype=np.float64)
    if trace.kind == "li":
        trace.value = trace.mu * I + trace.tau_o * trace.value
    elif trace.kind == "hard_li":
        trace.value = I + trace.tau_o * (1.0 - I) * trace.value
    elif trace.kind == "relu":
        trace.value = trace.mu * I + trace.value
    else:
        raise ConfigError(f"unknown trace kind {trace.kind!r}")
    return trace


@dataclass
class EligibilityTrace:
    """Per-synapse low-pass filter over update impulses."""

    e: np.ndarray
    tau_e: float

    def __post_init__(self):
        if not 0.0 <= self.tau_e < 1.0:
            raise ConfigError("tau_e must be in [0, 1)")

    @classmethod
    def zeros(cls, shape, tau_e: float) -> "EligibilityTrace":
        return cls(np.zeros(shape), tau_e)


def eligibility_step(
    el: EligibilityTrace, impulse: np.ndarray, weights: np.ndarray, eta: float
) -> None:
    """Fold an update impulse into the trace, then the trace into the weights.

    Impulses are descent directions, so the weight move is a plain addition.
    """
    el.e += (1.0 - el.tau_e) * (impulse - el.e)
    weights += eta * el.e


@dataclass(frozen=True)
class SpikeEncoderConfig:
    """Bernoulli rate coding over a fixed simulation window."""

    scale: float = 0.25
    steps: int = 24
    active_window: int = 9

    def __post_init__(self):
        if not 0.0 <= self.scale <= 1.0:
            raise ConfigError("encoder scale must be in [0, 1]")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        if not 0 <= self.active_window <= self.steps:
            raise ConfigError("active_window must be in [0, steps]")


def rate_encode(x: np.ndarray, scale: float, rng: np.random.Generator) -> np.ndarray:
    """One timestep of Bernoulli spikes: P(spike_i) = scale * x_i."""
    x = np.asarray(x, dtype=np.float64)
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise DataError("rate encoder input must lie in [0, 1]")
    return (rng.random(x.shape) < scale * x).astype(np.float64)


def _modulation_single(
    trace_value: np.ndarray,
    polarity: Polarity,
    prob_fn: ProbabilityFn,
    partition: PolarityPartition,
) -> tuple[float, np.ndarray]:
    """Lean scalar path for one latent row (the online hot loop).

    Returns the positive probability and the per-neuron modulation vector.
    """
    sq = trace_value * trace_value
    if isinstance(prob_fn, SigmoidProb):
        g = float(sq.sum())
        z = prob_fn.alpha * (g - prob_fn.theta)
        if z >= 0.0:
            p = 1.0 / (1.0 + np.exp(-z))
        else:
            ez = np.exp(z)
            p = ez / (1.0 + ez)
        if polarity is Polarity.POSITIVE:
            factor = prob_fn.alpha * (1.0 - p)
        else:
            factor = -prob_fn.alpha * p
        return float(p), np.full(trace_value.shape, factor)
    g_pos = float(sq[partition.pos_mask].sum())
    g_neg = float(sq.sum() - g_pos)
    eps = prob_fn.epsilon
    total = g_pos + g_neg + eps
    p = (g_pos + 0.5 * eps) / total
    if polarity is Polarity.POSITIVE:
        g_match, p_match, match_mask = g_pos, p, partition.pos_mask
    else:
        g_match, p_match, match_mask = g_neg, 1.0 - p, ~partition.pos_mask
    if prob_fn.denominator == "total":
        pot = (1.0 - p_match) / total
    else:
        pot = (1.0 - p_match) / (g_match + 0.5 * eps)
    return float(p), np.where(match_mask, pot, -1.0 / total)


def hebbian_impulse(
    trace_value: np.ndarray,
    in_spikes: np.ndarray,
    prob_fn: ProbabilityFn,
    polarity: Polarity,
    partition: PolarityPartition,
) -> np.ndarray:
    """Three-factor update impulse: modulation * trace_j * in_spike_i.

    The returned matrix is a descent direction; with no presynaptic spikes
    or a fully converged probability it is exactly zero.
    """
    trace_value = np.asarray(trace_value, dtype=np.float64)
    _, modulation = _modulation_single(trace_value, polarity, prob_fn, partition)
    return np.outer(modulation * trace_value, np.asarray(in_spikes, dtype=np.float64))


@dataclass(frozen=True)
class SpikingConfig:
    """All spiking-side knobs bundled for the trainer."""

    lif: LIFConfig = field(default_factory=LIFConfig)
    trace: TraceConfig = field(default_factory=TraceConfig)
    encoder: SpikeEncoderConfig = field(default_factory=SpikeEncoderConfig)
    tau_e: float = 0.999
    n_out: int = 200
    modulation_window: str = "instantaneous"

    def __post_init__(self):
        if self.modulation_window not in ("instantaneous", "window_mean"):
            raise ConfigError("modulation_window must be 'instantaneous' or 'window_mean'")


@dataclass
class SpikingModel:
    """A dense layer together with the dynamics it is simulated under."""

    layer: DenseLayer
    prob_fn: ProbabilityFn
    spiking: SpikingConfig

    @classmethod
    def initialize(
        cls, n_in: int, prob_fn: ProbabilityFn, spiking: SpikingConfig, seed: int
    ) -> "SpikingModel":
        partition = partition_for(prob_fn, spiking.n_out)
        layer = DenseLayer.initialize(n_in, spiking.n_out, partition, seed)
        return cls(layer, prob_fn, spiking)


def run_sample(
    model: SpikingModel,
    sample: ContrastiveSample,
    train: bool,
    rng: np.random.Generator,
    eligibility: Optional[EligibilityTrace] = None,
    eta: float = 0.0,
) -> np.ndarray:
    """Simulate one sample for the full window; returns the final trace.

    LIF and trace state start fresh.  When ``train`` is set, the last
    ``active_window`` timesteps also apply the Hebbian impulse through the
    (persistent) eligibility trace; outside that window the weights are
    untouched by construction.
    """
    if train and eligibility is None:
        raise ConfigError("training requires an eligibility trace")
    cfg = model.spiking
    enc = cfg.encoder
    layer = model.layer
    lif = LIFState.zeros(layer.n_out, cfg.lif)
    trace = OutputTrace.zeros(layer.n_out, cfg.trace)
    active_start = enc.steps - enc.active_window
    window_mean = cfg.modulation_window == "window_mean"
    win_sum = np.zeros(layer.n_out) if window_mean else None
    x = sample.input
    for t in range(enc.steps):
        spikes = rate_encode(x, enc.scale, rng)
        out = lif_step(lif, layer.weights, spikes)
        trace_step(trace, out)
        if train and t >= active_start:
            if window_mean:
                win_sum += trace.value
                effective = win_sum / (t - active_start + 1)
            else:
                effective = trace.value
            _, modulation = _modulation_single(
                effective, sample.polarity, model.prob_fn, layer.partition
            )
            plasticity_step(
                eligibility.e, layer.weights, modulation * effective, spikes,
                eligibility.tau_e, eta,
            )
    return trace.value.copy()


def simulate_latents(
    layer: DenseLayer,
    X: np.ndarray,
    spiking: SpikingConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Lockstep plasticity-free simulation of a stack of inputs [B, n_in].

    Returns the final output traces [B, n_out], the latent vectors used for
    classification and latent-geometry metrics.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.size and (X.min() < 0.0 or X.max() > 1.0):
        raise DataError("rate encoder input must lie in [0, 1]")
    enc = spiking.encoder
    B = X.shape[0]
    lif = LIFState.zeros((B, layer.n_out), spiking.lif)
    trace = OutputTrace.zeros((B, layer.n_out), spiking.trace)
    for _ in range(enc.steps):
        spikes = (rng.random(X.shape) < enc.scale * X).astype(np.float64)
        out = lif_step(lif, layer.weights, spikes)
        trace_step(trace, out)
    return trace.value


def _train_epoch_batch(
    model: SpikingModel,
    config: TrainConfig,
    data: ExperimentData,
    eligibility: EligibilityTrace,
    epoch: int,
    stats: _RunningStats,
) -> None:
    """One epoch in lockstep batch mode.

    All 2K instances of a batch are simulated on a shared clock; at each
    active timestep the per-instance impulses are averaged before the single
    eligibility/weight update, mirroring the 1/K batch mean of the analog
    gradient.
    """
    cfg = model.spiking
    enc = cfg.encoder
    layer = model.layer
    prob_fn = model.prob_fn
    rng = np.random.default_rng([config.seed, epoch, 0x5E1])
    active_start = enc.steps - enc.active_window
    window_mean = cfg.modulation_window == "window_mean"
    for batch in batches(data.train, data.codebook, config.batch_size, config.seed, epoch):
        X = np.stack([s.input for s in batch])
        if X.min() < 0.0 or X.max() > 1.0:
            raise DataError("rate encoder input must lie in [0, 1]")
        codes = np.asarray([s.polarity.value for s in batch], dtype=np.int8)
        B = X.shape[0]
        lif = LIFState.zeros((B, layer.n_out), cfg.lif)
        trace = OutputTrace.zeros((B, layer.n_out), cfg.trace)
        win_sum = np.zeros((B, layer.n_out)) if window_mean else None
        for t in range(enc.steps):
            spikes = (rng.random(X.shape) < enc.scale * X).astype(np.float64)
            out = lif_step(lif, layer.weights, spikes)
            trace_step(trace, out)
            if t >= active_start:
                if window_mean:
                    win_sum += trace.value
                    effective = win_sum / (t - active_start + 1)
                else:
                    effective = trace.value
                _, modulation = modulation_batch(effective, codes, prob_fn, layer.partition)
                impulse = ((modulation * effective).T @ spikes) / B
                eligibility_step(eligibility, impulse, layer.weights, config.eta)
        p = probability_batch(trace.value, prob_fn, layer.partition)
        stats.update(trace.value, [s.polarity for s in batch], p)


def _train_epoch_online(
    model: SpikingModel,
    config: TrainConfig,
    data: ExperimentData,
    eligibility: EligibilityTrace,
    epoch: int,
    stats: _RunningStats,
) -> None:
    """One epoch in online mode: every instance updates the weights itself."""
    layer = model.layer
    rng = np.random.default_rng([config.seed, epoch, 0x5E1])
    for batch in batches(data.train, data.codebook, 1, config.seed, epoch):
        for sample in batch:
            final = run_sample(model, sample, True, rng, eligibility, config.eta)
            p, _ = _modulation_single(final, sample.polarity, model.prob_fn, layer.partition)
            stats.update(final[None, :], [sample.polarity], np.asarray([p]))


def train_hebbian(
    config: TrainConfig,
    data: ExperimentData,
    mode: str = "batch",
    spiking: Optional[SpikingConfig] = None,
    eval_fn: Optional[Callable[[DenseLayer], float]] = None,
) -> tuple[DenseLayer, list[EpochStats]]:
    """Train the spiking layer with per-timestep Hebbian updates.

    ``mode`` is "batch" (impulses averaged over config.batch_size pairs) or
    "online" (batch size forced to 1).  ``eval_fn`` reports test accuracy
    after each epoch when provided.
    """
    if mode not in ("batch", "online"):
        raise ConfigError("mode must be 'batch' or 'online'")
    spiking = spiking or SpikingConfig()
    model = SpikingModel.initialize(data.input_dim, config.prob_fn, spiking, config.seed)
    eligibility = EligibilityTrace.zeros(model.layer.weights.shape, spiking.tau_e)
    if mode == "online" and config.batch_size != 1:
        config = TrainConfig(
            eta=config.eta, batch_size=1, epochs=config.epochs,
            seed=config.seed, prob_fn=config.prob_fn,
        )
    log: list[EpochStats] = []
    for epoch in range(config.epochs):
        stats = _RunningStats()
        if mode == "batch":
            _train_epoch_batch(model, config, data, eligibility, epoch, stats)
        else:
            _train_epoch_online(model, config, data, eligibility, epoch, stats)
        check_finite(model.layer.weights, f"epoch {epoch}")
        accuracy = eval_fn(model.layer) if eval_fn is not None else float("nan")
        entry = stats.finish(epoch, accuracy)
        log.append(entry)
        logger.info(
            "hebbian(%s) epoch %d: loss=%.4f g+=%.3f g-=%.3f acc=%.4f",
            mode, epoch, entry.train_loss, entry.mean_goodness_pos,
            entry.mean_goodness_neg, entry.test_accuracy,
        )
    return model.layer, log
