"""Run-length constrained coding: input Markov chain, hidden Markov channel,
mixed-state entropy-rate estimation and the achievable rates R_c and R_u.

HMM states are triples (k, x, y): the run-length k of the current input
nucleotide counted so far (1..m), the input nucleotide x and the observed
output nucleotide y.  This carries exactly the information the transition
rules need, giving 16*m states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict
from functools import reduce
from typing import Optional

import numba
import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .channels import (
    GrowthModel,
    quaternary_entropy,
    run_length_pmf,
    run_length_pmf_constrained,
    run_length_tail,
    substitution_rate,
    truncation_point,
)

ALPHABET = "ACGT"
PRNG_NAME = "numpy.PCG64"


class StructuralError(ValueError):
    """A matrix is not a valid (row-stochastic, ergodic) transition matrix."""


# -- input chain --------------------------------------------------------------

@dataclass(frozen=True)
class InputMarkovModel:
    """Markov chain generating m-constrained codewords.

    ``transition`` acts on states (k, x), index (k-1)*4 + x.  From k < m every
    nucleotide has probability 1/4; from k = m the repeat is forbidden and the
    three other nucleotides get 1/3 each.
    """

    m: int
    transition: np.ndarray = field(repr=False)

    @property
    def n_states(self) -> int:
        return 4 * self.m

    @staticmethod
    def state(k: int, x: int) -> int:
        return (k - 1) * 4 + x

    def next_symbol_probs(self, history: str) -> dict[str, float]:
        """Distribution of the next nucleotide given the preceding symbols."""
        history = history.upper()
        if history and any(c not in ALPHABET for c in history):
            raise ValueError(f"history must be over ACGT, got {history!r}")
        tail = history[-self.m:]
        if len(history) >= self.m and len(set(tail)) == 1:
            last = tail[-1]
            return {c: (0.0 if c == last else 1 / 3) for c in ALPHABET}
        return {c: 0.25 for c in ALPHABET}

    def nucleotide_matrix(self) -> np.ndarray:
        """4x4 nucleotide-to-nucleotide matrix (only defined for m = 1)."""
        if self.m != 1:
            raise ValueError("the nucleotide-level chain is first order only for m = 1")
        return self.transition.copy()


def build_input_chain(m: int) -> InputMarkovModel:
    if m < 1:
        raise ValueError(f"maximum run-length m must be >= 1, got {m}")
    S = 4 * m
    T = np.zeros((S, S))
    for k in range(1, m + 1):
        for x in range(4):
            i = InputMarkovModel.state(k, x)
            if k == m:
                for x2 in range(4):
                    if x2 != x:
                        T[i, InputMarkovModel.state(1, x2)] = 1 / 3
            else:
                T[i, InputMarkovModel.state(k + 1, x)] = 0.25
                for x2 in range(4):
                    if x2 != x:
                        T[i, InputMarkovModel.state(1, x2)] = 0.25
    return InputMarkovModel(m=m, transition=T)


# -- hidden Markov channel ------------------------------------------------------

def effective_substitution(k: int, m: int, model: GrowthModel) -> float:
    """Substitution probability of a symbol whose run has reached length k,
    averaged over how the run continues under the constrained input law."""
    if not 1 <= k <= m:
        raise ValueError(f"run-length counter k={k} outside 1..{m}")
    if k == m:
        return substitution_rate(model, m)
    total = 0.0
    for j in range(k, m):
        total += 0.25 ** (j - k) * 0.75 * substitution_rate(model, j)
    total += 0.25 ** (m - k) * substitution_rate(model, m)
    return total


@dataclass(frozen=True)
class HiddenMarkovChannel:
    m: int
    model: GrowthModel
    B: np.ndarray = field(repr=False)
    By: np.ndarray = field(repr=False)  # shape (4, S, S)
    p_eff: np.ndarray = field(repr=False)  # index k-1

    @property
    def n_states(self) -> int:
        return 16 * self.m

    @staticmethod
    def state(k: int, x: int, y: int) -> int:
        return ((k - 1) * 4 + x) * 4 + y

    @property
    def output_label(self) -> np.ndarray:
        return np.tile(np.arange(4), 4 * self.m)

    def decode_state(self, i: int) -> tuple[int, int, int]:
        y = i % 4
        x = (i // 4) % 4
        k = i // 16 + 1
        return k, x, y


def build_hmm(m: int, model: GrowthModel) -> HiddenMarkovChannel:
    """Hidden Markov model of an m-constrained input sent through a
    run-length varying channel.  The output of the next position is emitted
    on entering the next state, with the effective substitution probability
    of that state's run-length counter."""
    if not model.is_run_model:
        raise ValueError(f"homopolymer channel requires a run-length model, got {model.kind}")
    chain = build_input_chain(m)
    p_eff = np.array([effective_substitution(k, m, model) for k in range(1, m + 1)])
    S = 16 * m
    B = np.zeros((S, S))
    By = np.zeros((4, S, S))
    for i_in in range(4 * m):
        k, x = divmod(i_in, 4)
        k += 1
        row = chain.transition[i_in]
        for j_in in np.flatnonzero(row):
            k2, x2 = divmod(int(j_in), 4)
            k2 += 1
            pe = p_eff[k2 - 1]
            for y2 in range(4):
                emit = 1.0 - pe if y2 == x2 else pe / 3.0
                if emit == 0.0:
                    continue
                j = HiddenMarkovChannel.state(k2, x2, y2)
                for y in range(4):
                    i = HiddenMarkovChannel.state(k, x, y)
                    B[i, j] = row[j_in] * emit
                    By[y2, i, j] = row[j_in] * emit
    return HiddenMarkovChannel(m=m, model=model, B=B, By=By, p_eff=p_eff)


# -- structure of transition matrices ---------------------------------------

@dataclass(frozen=True)
class ErgodicityReport:
    nonnegative: bool
    irreducible: bool
    aperiodic: bool
    # number of strongly connected classes with no exit; 1 means a unique stationary law
    closed_classes: int
    period: int

    @property
    def ergodic(self) -> bool:
        return self.nonnegative and self.irreducible and self.aperiodic


def _check_stochastic(B: np.ndarray, tol: float = 1e-12):
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise StructuralError(f"transition matrix must be square, got shape {B.shape}")
    sums = B.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise StructuralError(f"rows {bad[:10].tolist()} do not sum to 1 (e.g. {sums[bad[0]]!r})")
    return B


def _period(adj: sparse.csr_matrix, nodes: np.ndarray) -> int:
    """Period of the strongly connected subgraph on ``nodes`` via BFS levels."""
    inside = np.zeros(adj.shape[0], dtype=bool)
    inside[nodes] = True
    level = np.full(adj.shape[0], -1)
    start = int(nodes[0])
    level[start] = 0
    frontier = [start]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in adj.indices[adj.indptr[u]:adj.indptr[u + 1]]:
                if not inside[v]:
                    continue
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(v)
                else:
                    g = math.gcd(g, level[u] + 1 - level[v])
        frontier = nxt
    return g if g > 0 else 0


def check_ergodic(B) -> ErgodicityReport:
    """Nonnegativity, irreducibility (strong connectivity of the positive-entry
    digraph) and aperiodicity (gcd of cycle lengths) of a stochastic matrix."""
    B = _check_stochastic(B)
    nonneg = bool((B >= 0).all())
    adj = sparse.csr_matrix(B > 0)
    ncomp, labels = connected_components(adj, directed=True, connection="strong")
    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        targets = adj[members].indices
        if np.all(labels[targets] == c):
            closed.append(members)
    irreducible = ncomp == 1
    if len(closed) == 1:
        period = _period(adj, closed[0])
    else:
        period = reduce(math.gcd, (_period(adj, c) for c in closed), 0)
    return ErgodicityReport(
        nonnegative=nonneg,
        irreducible=irreducible,
        aperiodic=period == 1,
        closed_classes=len(closed),
        period=period,
    )


def _require_unique_stationary(B) -> ErgodicityReport:
    rep = check_ergodic(B)
    if not rep.nonnegative:
        raise StructuralError("transition matrix has negative entries")
    if rep.closed_classes != 1 or not rep.aperiodic:
        raise StructuralError(
            f"chain is not ergodic (closed classes={rep.closed_classes}, period={rep.period})"
        )
    return rep


def stationary_distribution(B, tol: float = 1e-12, max_iter: int = 10 ** 6) -> np.ndarray:
    """Stationary law by power iteration, to residual infinity-norm ``tol``.

    Chains with transient states are accepted as long as a single aperiodic
    closed class exists; the transient states get probability 0.
    """
    B = np.asarray(B, dtype=float)
    _require_unique_stationary(B)
    Bs = sparse.csr_matrix(B)
    BT = Bs.T.tocsr()
    pi = np.full(B.shape[0], 1.0 / B.shape[0])
    for _ in range(max_iter):
        nxt = BT @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            pi = nxt
            break
        pi = nxt
    else:
        raise StructuralError(f"power iteration did not reach residual {tol} in {max_iter} iterations")
    # the last step may leave float dust on states that can never be visited
    pi[pi < 1e-300] = 0.0
    return pi / pi.sum()


def _matrix_of(chain) -> np.ndarray:
    if isinstance(chain, InputMarkovModel):
        return chain.transition
    if isinstance(chain, HiddenMarkovChannel):
        return chain.B
    return np.asarray(chain, dtype=float)


def closed_form_entropy_rate(chain) -> float:
    """-sum_ij pi_i B_ij log2 B_ij, valid when the next state is determined
    by the current state and the emitted symbol."""
    B = _matrix_of(chain)
    pi = stationary_distribution(B)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(B > 0, np.log2(np.where(B > 0, B, 1.0)), 0.0)
    return float(-(pi[:, None] * B * logs).sum())


# -- mixed-state estimator --------------------------------------------------

@dataclass(frozen=True)
class EstimatorConfig:
    conv_thresh: float = 1e-9
    stab_req: int = 1000
    max_steps: int = 10 ** 8
    # the stopping rule is only consulted once this many steps have been taken
    min_steps: int = 0
    batches: int = 100

    def __post_init__(self):
        if not self.conv_thresh > 0 or self.stab_req < 1 or self.max_steps < 1:
            raise ValueError("convThresh, stabReq and max_steps must be positive")
        if self.min_steps < 0 or self.min_steps > self.max_steps:
            raise ValueError("min_steps must lie in [0, max_steps]")
        if self.batches < 2:
            raise ValueError("at least two batches are needed for a standard error")

    @classmethod
    def fixed(cls, steps: int, **kw) -> "EstimatorConfig":
        """Run exactly ``steps`` steps."""
        return cls(max_steps=steps, min_steps=steps, **kw)


@dataclass
class EntropyEstimate:
    value: float
    stderr: float
    steps: int
    achieved: bool
    seed: int
    conv_thresh: float
    stab_req: int
    max_steps: int
    m: int
    model: dict
    underflow_events: int = 0
    prng: str = PRNG_NAME

    def to_dict(self) -> dict:
        d = asdict(self)
        d["convThresh"] = d.pop("conv_thresh")
        d["stabReq"] = d.pop("stab_req")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EntropyEstimate":
        d = dict(d)
        d["conv_thresh"] = d.pop("convThresh")
        d["stab_req"] = d.pop("stabReq")
        return cls(**d)


@numba.njit(cache=True)
def _mixed_state_chunk(indptr, indices, data, out_label, eta, uniforms, state, block_sums,
                       block, conv_thresh, stab_req, min_steps, max_steps):
    """Advance the mixed-state recursion over one chunk of uniforms.

    ``state`` = [steps, running_sum, prev_mean, stab_count, underflows, achieved].
    """
    S = eta.shape[0]
    v = np.zeros(S)
    probs = np.zeros(4)
    steps = int(state[0])
    total = state[1]
    prev_mean = state[2]
    stab = int(state[3])
    underflows = int(state[4])
    achieved = False
    for t in range(uniforms.shape[0]):
        if steps >= max_steps:
            break
        v[:] = 0.0
        for i in range(S):
            ei = eta[i]
            if ei == 0.0:
                continue
            for q in range(indptr[i], indptr[i + 1]):
                v[indices[q]] += ei * data[q]
        probs[:] = 0.0
        for j in range(S):
            probs[out_label[j]] += v[j]
        h = 0.0
        for y in range(4):
            p = probs[y]
            if p > 0.0:
                h -= p * np.log2(p)
        # inverse-cdf sampling of the observed symbol
        u = uniforms[t] * (probs[0] + probs[1] + probs[2] + probs[3])
        y = 3
        acc = 0.0
        for c in range(4):
            acc += probs[c]
            if u < acc:
                y = c
                break
        while probs[y] == 0.0:
            y -= 1
        norm = probs[y]
        if norm < 1e-300:
            underflows += 1
            mx = 0.0
            for j in range(S):
                if out_label[j] == y and v[j] > mx:
                    mx = v[j]
            norm = 0.0
            for j in range(S):
                if out_label[j] == y:
                    v[j] /= mx
                    norm += v[j]
        for j in range(S):
            eta[j] = v[j] / norm if out_label[j] == y else 0.0
        steps += 1
        total += h
        block_sums[(steps - 1) // block] += h
        mean = total / steps
        if steps > 1 and abs(mean - prev_mean) < conv_thresh:
            stab += 1
        else:
            stab = 0
        prev_mean = mean
        if stab >= stab_req and steps >= min_steps:
            achieved = True
            break
    state[0] = steps
    state[1] = total
    state[2] = prev_mean
    state[3] = stab
    state[4] = underflows
    state[5] = 1.0 if achieved else 0.0


def _batch_stderr(block_sums: np.ndarray, block: int, steps: int, batches: int) -> float:
    full = steps // block
    sums = block_sums[:full]
    if full < 2:
        return float("nan")
    groups = np.array_split(np.arange(full), min(batches, full))
    means = np.array([sums[g].sum() / (len(g) * block) for g in groups])
    return float(means.std(ddof=1) / math.sqrt(len(means)))


def estimate_output_entropy(hmm: HiddenMarkovChannel, config: Optional[EstimatorConfig] = None,
                            seed: int = 0, chunk: int = 1 << 18) -> EntropyEstimate:
    """Entropy rate of the channel output by following one mixed-state trajectory.

    The belief starts at the stationary law; every step adds the entropy of
    the next-symbol distribution, samples a symbol from it and conditions
    the belief on that symbol.  The estimate is the running mean.
    """
    config = config or EstimatorConfig()
    B = hmm.B
    pi = stationary_distribution(B)
    csr = sparse.csr_matrix(B)
    indptr = csr.indptr.astype(np.int64)
    indices = csr.indices.astype(np.int64)
    data = csr.data.astype(np.float64)
    out_label = hmm.output_label.astype(np.int64)
    eta = pi.copy()
    rng = np.random.Generator(np.random.PCG64(seed))
    block = max(1, config.max_steps // 100_000)
    block_sums = np.zeros(config.max_steps // block + 1)
    state = np.zeros(6)
    while state[0] < config.max_steps and state[5] == 0.0:
        n = int(min(chunk, config.max_steps - state[0]))
        u = rng.random(n)
        _mixed_state_chunk(indptr, indices, data, out_label, eta, u, state, block_sums, block,
                           config.conv_thresh, config.stab_req, config.min_steps, config.max_steps)
    steps = int(state[0])
    value = state[1] / steps
    return EntropyEstimate(
        value=float(value),
        stderr=_batch_stderr(block_sums, block, steps, config.batches),
        steps=steps,
        achieved=bool(state[5]),
        seed=int(seed),
        conv_thresh=config.conv_thresh,
        stab_req=config.stab_req,
        max_steps=config.max_steps,
        m=hmm.m,
        model=hmm.model.to_dict(),
        underflow_events=int(state[4]),
    )


def average_estimates(estimates: list[EntropyEstimate]) -> EntropyEstimate:
    """Combine independent replicates (different seeds) into one estimate."""
    if not estimates:
        raise ValueError("nothing to average")
    first = estimates[0]
    for e in estimates[1:]:
        if e.m != first.m or e.model != first.model:
            raise ValueError("replicates must share m and channel model")
    k = len(estimates)
    value = sum(e.value for e in estimates) / k
    stderr = math.sqrt(sum(e.stderr ** 2 for e in estimates)) / k
    return EntropyEstimate(
        value=value,
        stderr=stderr,
        steps=sum(e.steps for e in estimates),
        achieved=all(e.achieved for e in estimates),
        seed=first.seed,
        conv_thresh=first.conv_thresh,
        stab_req=first.stab_req,
        max_steps=first.max_steps,
        m=first.m,
        model=first.model,
        underflow_events=sum(e.underflow_events for e in estimates),
    )


# -- achievable rates --------------------------------------------------------

UNCONSTRAINED_OUTPUT_ENTROPY = 2.0


@dataclass(frozen=True)
class RateEstimate:
    value: float
    # Monte Carlo standard error (constrained) or truncation bound (unconstrained)
    uncertainty: float = 0.0


def unconstrained_subtrahend(model: GrowthModel, tol: float = 1e-12) -> tuple[float, float]:
    """sum_r q(r) H(p_r) over all r >= 1 and a bound on the neglected tail."""
    R = truncation_point(tol)
    total = 0.0
    for r in range(1, R + 1):
        p = substitution_rate(model, r)
        if p == 0.75:
            # saturated from here on: each remaining position costs exactly 2 bits
            return total + 2.0 * run_length_tail(r - 1), 0.0
        total += run_length_pmf(r) * quaternary_entropy(p)
    tail = run_length_tail(R)
    if model.alpha == 0:
        return total + tail * quaternary_entropy(model.base_p), 0.0
    lo = quaternary_entropy(substitution_rate(model, R))
    return total + tail * lo, tail * (2.0 - lo)


def achievable_rate_unconstrained(model: GrowthModel) -> float:
    if not model.is_run_model:
        raise ValueError(f"run-length model required, got {model.kind}")
    sub, _ = unconstrained_subtrahend(model)
    return UNCONSTRAINED_OUTPUT_ENTROPY - sub


def constrained_subtrahend(m: int, model: GrowthModel) -> float:
    return sum(run_length_pmf_constrained(m, r) * quaternary_entropy(substitution_rate(model, r))
               for r in range(1, m + 1))


def achievable_rate_constrained(m: int, model: GrowthModel, entropy: EntropyEstimate) -> RateEstimate:
    if entropy.m != m or entropy.model != model.to_dict():
        raise ValueError(
            f"entropy estimate was produced for m={entropy.m}, model={entropy.model}; "
            f"requested m={m}, model={model.to_dict()}"
        )
    value = entropy.value - constrained_subtrahend(m, model)
    return RateEstimate(value=value, uncertainty=0.0 if math.isnan(entropy.stderr) else entropy.stderr)
