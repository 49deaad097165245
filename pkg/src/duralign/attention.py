"""Monotonic alignment lattice with duration-token control.

The recursion advances probability mass over phonemes one step at a
time: mass at phoneme n either moves to n+1 (weight q_n) or stays
(weight 1-q_n), is reweighted by content energies, and is renormalized.
The final phoneme is absorbing: its outgoing move weight folds back
into its stay weight, so the pre-normalization step conserves mass.

Three mechanisms share one step kernel:

* gdca  - duration-token weights (move q_{n-1}, stay 1-q_n)
* fa    - token-free forward recursion (move 1, stay 1)
* la    - content-only (the energies are the alignment)

With q = 0.5 everywhere the gdca weights are exactly half the fa
weights (including the absorbing boundary), so the two mechanisms agree
bit-for-bit after normalization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tokens import TransitionTokens

__all__ = [
    "EnergyParams",
    "EnergyGrads",
    "AlignmentDistribution",
    "AlignmentMatrix",
    "StepOptions",
    "LatticeCache",
    "content_energies",
    "content_energies_backward",
    "normalize_energies",
    "init_alignment",
    "gdca_step",
    "fa_step",
    "la_step",
    "dynamic_filter",
    "window_mask",
    "context_vector",
    "lattice_forward",
    "lattice_backward",
    "pure_lattice_occupancy",
    "alignment_to_csv",
    "alignment_to_pgm",
]

MECHANISMS = ("la", "fa", "gdca")
CONVENTIONS = ("prose", "eq3-literal")
WINDOW_SHAPES = ("rectangular", "triangular")


# ---------------------------------------------------------------------------
# Content energies


@dataclass
class EnergyParams:
    """Additive scoring: e(n) = v . tanh(W m + V h_n + b)."""

    W: np.ndarray  # (attn_dim, query_dim)
    V: np.ndarray  # (attn_dim, key_dim)
    v: np.ndarray  # (attn_dim,)
    b: np.ndarray  # (attn_dim,)

    def __post_init__(self):
        a = self.v.size
        if self.W.shape[0] != a or self.V.shape[0] != a or self.b.shape != (a,):
            raise ValueError("inconsistent energy parameter shapes")
        for arr in (self.W, self.V, self.v, self.b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite energy parameter")

    @classmethod
    def init(cls, seed: int, query_dim: int = 8, key_dim: int = 8, attn_dim: int = 8, scale: float = 0.5):
        rng = np.random.default_rng(seed)
        return cls(
            W=rng.normal(0.0, scale, (attn_dim, query_dim)),
            V=rng.normal(0.0, scale, (attn_dim, key_dim)),
            v=rng.normal(0.0, scale, attn_dim),
            b=rng.normal(0.0, scale, attn_dim),
        )


@dataclass
class EnergyGrads:
    W: np.ndarray
    V: np.ndarray
    v: np.ndarray
    b: np.ndarray


def content_energies(params: EnergyParams, query: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Raw energy of the query against each key row; 64-bit throughout."""
    query = np.asarray(query, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if keys.ndim != 2 or keys.shape[0] < 1:
        raise ValueError("keys must be a non-empty (N, key_dim) array")
    if query.shape != (params.W.shape[1],) or keys.shape[1] != params.V.shape[1]:
        raise ValueError("query/key dimension mismatch")
    z = params.W @ query + keys @ params.V.T + params.b  # (N, attn_dim)
    return np.tanh(z) @ params.v


def content_energies_backward(
    params: EnergyParams, query: np.ndarray, keys: np.ndarray, upstream_grad: np.ndarray
) -> EnergyGrads:
    """Analytic gradients of sum(upstream_grad * e) w.r.t. W, V, v, b."""
    query = np.asarray(query, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    de = np.asarray(upstream_grad, dtype=np.float64)
    if de.shape != (keys.shape[0],):
        raise ValueError("upstream gradient shape mismatch")
    z = params.W @ query + keys @ params.V.T + params.b
    a = np.tanh(z)
    dv = a.T @ de
    dz = np.outer(de, params.v) * (1.0 - a * a)  # (N, attn_dim)
    db = dz.sum(axis=0)
    dW = np.outer(dz.sum(axis=0), query)
    dV = dz.T @ keys
    return EnergyGrads(W=dW, V=dV, v=dv, b=db)


def normalize_energies(e: np.ndarray) -> np.ndarray:
    """Stable softmax (max-subtraction); sums to 1, all entries > 0."""
    e = np.asarray(e, dtype=np.float64)
    if not np.all(np.isfinite(e)):
        raise ValueError("non-finite energy")
    shifted = e - e.max()
    w = np.exp(shifted)
    return w / w.sum()


# ---------------------------------------------------------------------------
# Alignment containers


@dataclass(frozen=True)
class AlignmentDistribution:
    p: np.ndarray
    step: int = 0

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        object.__setattr__(self, "p", p)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("alignment must be a non-empty vector")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("alignment is not a probability distribution")


@dataclass
class AlignmentMatrix:
    """Rows are decoder steps, columns are phonemes."""

    probs: np.ndarray  # (T, N)
    cache: "LatticeCache | None" = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("alignment matrix must be 2-D")

    @property
    def n_steps(self) -> int:
        return self.probs.shape[0]

    @property
    def n_phonemes(self) -> int:
        return self.probs.shape[1]

    def argmax_path(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)


@dataclass(frozen=True)
class StepOptions:
    mechanism: str = "gdca"
    filter_enabled: bool = False
    window_width: int = 16
    window_shape: str = "rectangular"
    convention: str = "prose"

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism '{self.mechanism}'")
        if self.convention not in CONVENTIONS:
            raise ValueError(f"unknown convention '{self.convention}'")
        if self.window_shape not in WINDOW_SHAPES:
            raise ValueError(f"unknown window shape '{self.window_shape}'")
        if self.window_width < 2 or self.window_width % 2 != 0:
            raise ValueError("window width must be an even integer >= 2")


def init_alignment(n: int) -> AlignmentDistribution:
    """All mass on the first phoneme: p_0 = (1, 0, ..., 0)."""
    if n < 1:
        raise ValueError("need at least one phoneme")
    p = np.zeros(n)
    p[0] = 1.0
    return AlignmentDistribution(p=p, step=0)


# ---------------------------------------------------------------------------
# Step kernel


def _shift_weights(q: np.ndarray, convention: str) -> tuple[np.ndarray, np.ndarray]:
    """Per-position (move-in, stay) weights for the recursion.

    move[n] multiplies p_{t-1}(n-1) (move[0] is unused); stay[n]
    multiplies p_{t-1}(n).  The final stay weight absorbs the outgoing
    move weight so the step conserves mass.
    """
    n = q.size
    move = np.empty(n)
    stay = np.empty(n)
    if convention == "prose":
        move[1:] = q[:-1]
        stay[:] = 1.0 - q
    else:  # eq3-literal: coefficients exactly as printed
        move[1:] = 1.0 - q[:-1]
        stay[:] = q
    move[0] = 0.0
    stay[-1] = 1.0  # absorbing: stay + outgoing move
    return move, stay


def _recurse(p_prev: np.ndarray, move: np.ndarray, stay: np.ndarray) -> np.ndarray:
    a = stay * p_prev
    a[1:] += move[1:] * p_prev[:-1]
    return a


def _finish_step(a: np.ndarray, e_norm: np.ndarray, step: int) -> AlignmentDistribution:
    b = a * e_norm
    s = b.sum()
    if s < 1e-300:
        raise FloatingPointError("alignment normalizer underflowed; inconsistent filter/energy combination")
    return AlignmentDistribution(p=b / s, step=step)


def window_mask(n: int, center: int, width: int, shape: str = "rectangular") -> np.ndarray:
    """Multiplicative window of total width ``width`` centered at ``center``.

    Keeps indices in [center - width/2, center + width/2] (clipped);
    rectangular keeps them as-is, triangular applies a linear taper that
    peaks at the center and stays positive inside the window.
    """
    half = width // 2
    lo = max(0, center - half)
    hi = min(n - 1, center + half)
    mask = np.zeros(n)
    if shape == "rectangular":
        mask[lo : hi + 1] = 1.0
    else:
        idx = np.arange(lo, hi + 1)
        mask[idx] = 1.0 - np.abs(idx - center) / (half + 1)
    return mask


def dynamic_filter(p_prev: AlignmentDistribution | np.ndarray, width: int = 16, shape: str = "rectangular") -> np.ndarray:
    """Zero the previous alignment outside a window around its argmax.

    Ties break toward the smallest index.  The result is intentionally
    not renormalized; normalization happens at the end of the step.
    """
    p = p_prev.p if isinstance(p_prev, AlignmentDistribution) else np.asarray(p_prev, dtype=np.float64)
    if width < 2 or width % 2 != 0:
        raise ValueError("window width must be an even integer >= 2")
    m = int(np.argmax(p))
    return p * window_mask(p.size, m, width, shape)


def gdca_step(
    p_prev: AlignmentDistribution,
    q: TransitionTokens,
    e_norm: np.ndarray,
    opts: StepOptions = StepOptions(),
) -> AlignmentDistribution:
    """One duration-controlled step: filter, recursion, content, normalize."""
    e_norm = np.asarray(e_norm, dtype=np.float64)
    if p_prev.p.size != q.q.size or p_prev.p.size != e_norm.size:
        raise ValueError("length mismatch between alignment, tokens, and energies")
    p = p_prev.p
    if opts.filter_enabled:
        p = dynamic_filter(p, opts.window_width, opts.window_shape)
    move, stay = _shift_weights(q.q, opts.convention)
    a = _recurse(p, move, stay)
    return _finish_step(a, e_norm, p_prev.step + 1)


def fa_step(
    p_prev: AlignmentDistribution,
    e_norm: np.ndarray,
    opts: StepOptions = StepOptions(mechanism="fa"),
) -> AlignmentDistribution:
    """Token-free forward step: p(n-1) + p(n), content multiply, normalize."""
    e_norm = np.asarray(e_norm, dtype=np.float64)
    if p_prev.p.size != e_norm.size:
        raise ValueError("length mismatch between alignment and energies")
    p = p_prev.p
    if opts.filter_enabled:
        p = dynamic_filter(p, opts.window_width, opts.window_shape)
    n = p.size
    move = np.ones(n)
    move[0] = 0.0
    stay = np.ones(n)
    stay[-1] = 2.0  # absorbing: stay + outgoing move
    a = _recurse(p, move, stay)
    return _finish_step(a, e_norm, p_prev.step + 1)


def la_step(
    e_norm: np.ndarray,
    p_prev: AlignmentDistribution | None = None,
    opts: StepOptions = StepOptions(mechanism="la"),
) -> AlignmentDistribution:
    """Content-only step; with the filter enabled, a window centered at
    the previous argmax masks the energies before renormalizing."""
    e = np.asarray(e_norm, dtype=np.float64)
    step = p_prev.step + 1 if p_prev is not None else 0
    if opts.filter_enabled and p_prev is not None:
        m = int(np.argmax(p_prev.p))
        masked = e * window_mask(e.size, m, opts.window_width, opts.window_shape)
        s = masked.sum()
        if s < 1e-300:
            raise FloatingPointError("windowed energies underflowed")
        return AlignmentDistribution(p=masked / s, step=step)
    return AlignmentDistribution(p=e / e.sum(), step=step)


def context_vector(p: AlignmentDistribution | np.ndarray, keys: np.ndarray) -> np.ndarray:
    """Alignment-weighted sum of key rows."""
    pv = p.p if isinstance(p, AlignmentDistribution) else np.asarray(p, dtype=np.float64)
    keys = np.asarray(keys, dtype=np.float64)
    if keys.shape[0] != pv.size:
        raise ValueError("alignment/key length mismatch")
    return pv @ keys


# ---------------------------------------------------------------------------
# Full lattice


@dataclass
class LatticeCache:
    """Intermediates from a gdca forward pass, for reverse mode."""

    q: np.ndarray
    energies: np.ndarray  # (T, N), normalized
    p_rows: np.ndarray  # (T+1, N)
    a_rows: np.ndarray  # (T, N) pre-content vectors
    sums: np.ndarray  # (T,) normalizers
    convention: str


def lattice_forward(
    q: TransitionTokens | None,
    energies: np.ndarray,
    opts: StepOptions = StepOptions(),
    normalize: bool = False,
    keep_cache: bool = False,
) -> AlignmentMatrix:
    """Run T steps of the selected mechanism over a T x N energy matrix.

    Row 0 of the result is the initial delta distribution; rows 1..T are
    the stepped alignments.  ``normalize=True`` applies the stable
    softmax to each energy row first.  A cache for the backward pass is
    recorded only for the unfiltered gdca mechanism.
    """
    energies = np.asarray(energies, dtype=np.float64)
    if energies.ndim != 2:
        raise ValueError("energies must be a (T, N) matrix")
    t_steps, n = energies.shape
    if normalize:
        energies = np.vstack([normalize_energies(row) for row in energies])
    if opts.mechanism == "gdca":
        if q is None or q.q.size != n:
            raise ValueError("gdca needs tokens matching the phoneme count")

    rows = np.empty((t_steps + 1, n))
    rows[0] = init_alignment(n).p
    cache = None
    if keep_cache:
        if opts.mechanism != "gdca" or opts.filter_enabled:
            raise ValueError("backward cache requires unfiltered gdca")
        cache = LatticeCache(
            q=q.q.copy(),
            energies=energies.copy(),
            p_rows=rows,
            a_rows=np.empty((t_steps, n)),
            sums=np.empty(t_steps),
            convention=opts.convention,
        )

    dist = AlignmentDistribution(p=rows[0], step=0)
    for t in range(t_steps):
        e = energies[t]
        if opts.mechanism == "gdca":
            if cache is not None:
                move, stay = _shift_weights(q.q, opts.convention)
                a = _recurse(dist.p, move, stay)
                b = a * e
                s = b.sum()
                if s < 1e-300:
                    raise FloatingPointError("alignment normalizer underflowed")
                cache.a_rows[t] = a
                cache.sums[t] = s
                dist = AlignmentDistribution(p=b / s, step=t + 1)
            else:
                dist = gdca_step(dist, q, e, opts)
        elif opts.mechanism == "fa":
            dist = fa_step(dist, e, opts)
        else:
            dist = la_step(e, dist, opts)
        rows[t + 1] = dist.p
    return AlignmentMatrix(probs=rows, cache=cache)


def lattice_backward(alignment: AlignmentMatrix, d_probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reverse-mode gradients (dLoss/dq, dLoss/dE) through a gdca run.

    ``d_probs`` holds dLoss/dp for every row of the alignment matrix
    (row 0's entry is ignored: the initial distribution is constant).
    """
    cache = alignment.cache
    if cache is None:
        raise ValueError("alignment has no backward cache; rerun with keep_cache=True")
    d_probs = np.asarray(d_probs, dtype=np.float64)
    if d_probs.shape != alignment.probs.shape:
        raise ValueError("upstream gradient shape mismatch")
    t_steps, n = cache.energies.shape
    move, stay = _shift_weights(cache.q, cache.convention)
    dq = np.zeros(n)
    d_energies = np.zeros((t_steps, n))

    carry = np.zeros(n)
    for t in range(t_steps - 1, -1, -1):
        g = carry + d_probs[t + 1]
        p_t = cache.p_rows[t + 1]
        p_prev = cache.p_rows[t]
        s = cache.sums[t]
        a = cache.a_rows[t]
        e = cache.energies[t]
        db = (g - np.dot(g, p_t)) / s
        d_energies[t] = db * a
        da = db * e
        # a[n] = stay[n] * p_prev[n] + move[n] * p_prev[n-1]
        dstay = da * p_prev
        dmove = np.zeros(n)
        dmove[1:] = da[1:] * p_prev[:-1]
        if cache.convention == "prose":
            dq[:-1] += dmove[1:]  # move[n] = q[n-1]
            dq[:-1] -= dstay[:-1]  # stay[n] = 1 - q[n], final stay fixed at 1
        else:
            dq[:-1] -= dmove[1:]  # move[n] = 1 - q[n-1]
            dq[:-1] += dstay[:-1]  # stay[n] = q[n], final stay fixed at 1
        carry = da * stay
        carry[:-1] += da[1:] * move[1:]
    return dq, d_energies


def pure_lattice_occupancy(q: TransitionTokens | np.ndarray, horizon: int) -> np.ndarray:
    """Expected per-phoneme occupancy of the bare move/stay chain.

    Runs the recursion with no content term and with mass exiting past
    the final phoneme, summing the per-step probabilities.  Occupancy of
    phoneme n converges to the geometric dwell 1/q_n as the horizon
    passes the point of numerical absorption.
    """
    qv = q.q if isinstance(q, TransitionTokens) else np.asarray(q, dtype=np.float64)
    n = qv.size
    p = np.zeros(n)
    p[0] = 1.0
    occupancy = np.zeros(n)
    for _ in range(horizon):
        occupancy += p
        nxt = (1.0 - qv) * p
        nxt[1:] += qv[:-1] * p[:-1]
        p = nxt
    return occupancy


# ---------------------------------------------------------------------------
# Exports


def alignment_to_csv(alignment: AlignmentMatrix) -> str:
    """CSV export: one ``t,n,p`` line per lattice cell."""
    lines = ["t,n,p"]
    for t, row in enumerate(alignment.probs):
        for n, p in enumerate(row):
            lines.append(f"{t},{n},{float(p)!r}")
    return "\n".join(lines) + "\n"


def alignment_to_pgm(alignment: AlignmentMatrix) -> bytes:
    """Binary PGM (P5): one image row per decoder step, one column per
    phoneme, pixel value round(255 * p)."""
    t, n = alignment.probs.shape
    pixels = np.clip(np.rint(alignment.probs * 255.0), 0, 255).astype(np.uint8)
    header = f"P5\n{n} {t}\n255\n".encode("ascii")
    return header + pixels.tobytes()
