"""Decoding simulator: synthetic energies, stepping loop, stop criterion.

The trained content pathway is replaced by synthetic energy generators
so alignment behavior can be studied in isolation: a duration-aligned
diagonal, a noisy diagonal, an adversarial variant with off-diagonal
spikes, and a seeded query-feedback generator that exercises the
additive scoring path end to end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .attention import (
    AlignmentDistribution,
    AlignmentMatrix,
    EnergyParams,
    StepOptions,
    content_energies,
    context_vector,
    fa_step,
    gdca_step,
    init_alignment,
    la_step,
    normalize_energies,
)
from .score import PhonemeSequence
from .tokens import TransitionTokens

__all__ = [
    "ENERGY_MODES",
    "SynthEnergySpec",
    "SimConfig",
    "SimResult",
    "QueryGenerator",
    "phoneme_at_frame",
    "synth_energies",
    "run_simulation",
    "realized_durations",
]

ENERGY_MODES = ("oracle_diagonal", "noisy_diagonal", "adversarial_spike", "from_query_generator")


@dataclass(frozen=True)
class SynthEnergySpec:
    mode: str = "oracle_diagonal"
    noise_sigma: float = 0.0
    spike_magnitude: float = 8.0
    spike_schedule: tuple[tuple[int, int], ...] = ()  # (step, phoneme) pairs
    sharpness: float = 2.0

    def __post_init__(self):
        if self.mode not in ENERGY_MODES:
            raise ValueError(f"unknown energy mode '{self.mode}'")
        if self.noise_sigma < 0:
            raise ValueError("negative noise sigma")
        if self.sharpness <= 0:
            raise ValueError("sharpness must be positive")
        object.__setattr__(
            self, "spike_schedule", tuple((int(s), int(n)) for s, n in self.spike_schedule)
        )


@dataclass(frozen=True)
class SimConfig:
    opts: StepOptions = StepOptions()
    energy: SynthEnergySpec = SynthEnergySpec()
    seed: int = 0
    max_steps: int = 10000
    fixed_steps: int | None = None  # run exactly this many steps instead of the stop rule
    stop_patience: int = 3  # consecutive steps with argmax parked at the last phoneme

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.stop_patience < 1:
            raise ValueError("stop_patience must be >= 1")


@dataclass
class SimResult:
    alignment: AlignmentMatrix  # stepped rows only, one per decoder step
    realized_frames: np.ndarray
    stop_step: int
    stopped_by: str  # "parked" | "fixed" | "max_steps"
    monotone: bool
    config: SimConfig

    def to_json_dict(self) -> dict:
        cfg = self.config
        return {
            "mechanism": cfg.opts.mechanism,
            "filter_enabled": cfg.opts.filter_enabled,
            "window_width": cfg.opts.window_width,
            "window_shape": cfg.opts.window_shape,
            "convention": cfg.opts.convention,
            "energy_mode": cfg.energy.mode,
            "noise_sigma": cfg.energy.noise_sigma,
            "sharpness": cfg.energy.sharpness,
            "spike_magnitude": cfg.energy.spike_magnitude,
            "spike_schedule": [list(pair) for pair in cfg.energy.spike_schedule],
            "seed": cfg.seed,
            "max_steps": cfg.max_steps,
            "fixed_steps": cfg.fixed_steps,
            "stop_patience": cfg.stop_patience,
            "stop_step": self.stop_step,
            "stopped_by": self.stopped_by,
            "monotone": self.monotone,
            "realized_frames": [int(v) for v in self.realized_frames],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def phoneme_at_frame(d: np.ndarray, t: int) -> int:
    """Index of the phoneme whose cumulative frame interval contains t;
    frames past the end belong to the last phoneme."""
    bounds = np.cumsum(d)
    idx = int(np.searchsorted(bounds, t, side="right"))
    return min(idx, d.size - 1)


def _step_rng(seed: int, t: int) -> np.random.Generator:
    return np.random.default_rng([seed, t])


def synth_energies(
    d: np.ndarray, spec: SynthEnergySpec, seed: int, t: int
) -> np.ndarray:
    """Normalized synthetic energy row for decoder step t.

    Deterministic given (seed, t).  Only the precomputable modes are
    handled here; the query-feedback mode lives in QueryGenerator
    because it carries state.
    """
    if spec.mode == "from_query_generator":
        raise ValueError("query-generator energies are stateful; use QueryGenerator")
    d = np.asarray(d, dtype=np.float64)
    n = d.size
    target = phoneme_at_frame(d, t)
    raw = -spec.sharpness * np.abs(np.arange(n) - target).astype(np.float64)
    if spec.mode == "noisy_diagonal" and spec.noise_sigma > 0:
        raw = raw + _step_rng(seed, t).normal(0.0, spec.noise_sigma, n)
    if spec.mode == "adversarial_spike":
        if spec.noise_sigma > 0:
            raw = raw + _step_rng(seed, t).normal(0.0, spec.noise_sigma, n)
        for step, phoneme in spec.spike_schedule:
            if not 0 <= phoneme < n:
                raise ValueError(f"spike schedule references phoneme {phoneme} out of range")
            if step == t:
                raw[phoneme] += spec.spike_magnitude
    return normalize_energies(raw)


class QueryGenerator:
    """Seeded linear-recurrence query source feeding the scoring path.

    m_t = tanh(A m_{t-1} + B c_{t-1}) with fixed seeded weights; the
    context c_{t-1} closes the loop with the previous alignment.
    """

    def __init__(self, n_phonemes: int, seed: int, dim: int = 8):
        rng = np.random.default_rng([seed, 0xC0FFEE])
        self.keys = rng.normal(0.0, 1.0, (n_phonemes, dim))
        self.params = EnergyParams.init(seed, query_dim=dim, key_dim=dim, attn_dim=dim)
        self.A = rng.normal(0.0, 0.4, (dim, dim))
        self.B = rng.normal(0.0, 0.4, (dim, dim))
        self.m = rng.normal(0.0, 1.0, dim)

    def energies(self, p_prev: AlignmentDistribution) -> np.ndarray:
        c = context_vector(p_prev, self.keys)
        self.m = np.tanh(self.A @ self.m + self.B @ c)
        return normalize_energies(content_energies(self.params, self.m, self.keys))


def run_simulation(
    seq: PhonemeSequence | np.ndarray,
    tokens: TransitionTokens | None,
    cfg: SimConfig,
) -> SimResult:
    """Step the selected mechanism until the stop rule fires.

    Stops when the argmax has sat on the final phoneme for
    ``stop_patience`` consecutive steps (or after ``fixed_steps``).
    Hitting ``max_steps`` first flags the result instead of raising.
    """
    d = (
        np.array(seq.target_frames, dtype=np.float64)
        if isinstance(seq, PhonemeSequence)
        else np.asarray(seq, dtype=np.float64)
    )
    n = d.size
    if cfg.opts.mechanism == "gdca":
        if tokens is None or len(tokens) != n:
            raise ValueError("gdca needs tokens matching the phoneme count")

    qgen = QueryGenerator(n, cfg.seed) if cfg.energy.mode == "from_query_generator" else None
    dist = init_alignment(n)
    rows: list[np.ndarray] = []
    parked = 0
    stopped_by = "max_steps"
    limit = cfg.fixed_steps if cfg.fixed_steps is not None else cfg.max_steps
    for t in range(limit):
        if qgen is not None:
            e = qgen.energies(dist)
        else:
            e = synth_energies(d, cfg.energy, cfg.seed, t)
        if cfg.opts.mechanism == "gdca":
            dist = gdca_step(dist, tokens, e, cfg.opts)
        elif cfg.opts.mechanism == "fa":
            dist = fa_step(dist, e, cfg.opts)
        else:
            dist = la_step(e, dist, cfg.opts)
        rows.append(dist.p)
        if cfg.fixed_steps is None:
            parked = parked + 1 if int(np.argmax(dist.p)) == n - 1 else 0
            if parked >= cfg.stop_patience:
                stopped_by = "parked"
                break
    else:
        if cfg.fixed_steps is not None:
            stopped_by = "fixed"

    alignment = AlignmentMatrix(probs=np.vstack(rows))
    realized, monotone = realized_durations(alignment)
    return SimResult(
        alignment=alignment,
        realized_frames=realized,
        stop_step=alignment.n_steps,
        stopped_by=stopped_by,
        monotone=monotone,
        config=cfg,
    )


def realized_durations(alignment: AlignmentMatrix) -> tuple[np.ndarray, bool]:
    """Frames attributed to each phoneme by the per-step argmax.

    Returns (counts, monotone); monotone is False if the argmax path
    ever steps backward.
    """
    if alignment.n_steps == 0:
        raise ValueError("empty alignment")
    path = alignment.argmax_path()
    counts = np.bincount(path, minlength=alignment.n_phonemes)
    monotone = bool(np.all(np.diff(path) >= 0))
    return counts, monotone
