"""Quantum matching primitives: SWAP tests, sampling costs, amplitude estimation.

All sampled operations are simulated at the outcome-distribution level: the
ancilla measurement probability of a (multi-qubit) SWAP test between density
matrices rho_A and rho_B is p0 = (1 + Tr[rho_A rho_B]) / 2, and shots are
Bernoulli draws from it. Every sampled operation takes an explicit seed or
generator, and parallel consumers derive child seeds deterministically.

Cost accounting counts one joint state preparation per declared sample. The
generalized test extracts ``ANCILLA_READS_PER_SAMPLE`` ancilla bits from each
preparation, which gives the overlap estimator a per-sample variance of
exactly (1 - S^2)/8 and keeps it calibrated against ``nsamp_swap``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qubits import QubitRDM, pauli_basis, pauli_string_matrix, rdm_pauli_expansion

ANCILLA_READS_PER_SAMPLE = 8

# Amplitude-estimation schedule constants, calibrated in the test suite
# against the nsamp_swap_ae cost law (stay within 2x at eps = 1e-2 .. 1e-4).
_AE_DEPTH_FACTOR = 0.65
_AE_REPS_SLOPE = 3.4
_AE_REPS_OFFSET = 6.0


def as_generator(rng) -> np.random.Generator:
    """Accept an integer seed, a SeedSequence, or a ready Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng))
    if isinstance(rng, (int, np.integer)):
        return np.random.Generator(np.random.PCG64(int(rng)))
    raise TypeError("rng must be an int seed, SeedSequence, or numpy Generator")


def child_seeds(seed: int, n: int) -> list:
    """Deterministic independent seed sequences for parallel estimation."""
    return np.random.SeedSequence(seed).spawn(n)


@dataclass
class OverlapEstimate:
    """Result of one overlap (or purity) estimation run."""

    value: float
    shots_used: int
    eigensolver_calls: int
    std_error: float

    def validate(self) -> None:
        if self.shots_used < 0 or self.eigensolver_calls < 0:
            raise ValueError("negative sample accounting")
        if self.std_error < 0:
            raise ValueError("negative standard error")


@dataclass
class PairMismatch:
    """One overlapping pair's quadratic constraint value with sample accounting."""

    q_quad: float
    shots_used: int
    eigensolver_calls: int
    std_error: float


@dataclass
class MismatchReport:
    """Quadratic mismatch per overlapping pair plus the aggregate Delta-rho."""

    pairs: dict  # (fragment_a, fragment_b, site) -> PairMismatch
    delta_rho: float

    @property
    def total_eigensolver_calls(self) -> int:
        return sum(p.eigensolver_calls for p in self.pairs.values())

    @property
    def total_shots(self) -> int:
        return sum(p.shots_used for p in self.pairs.values())


def swap_probability(rho_a: QubitRDM, rho_b: QubitRDM) -> float:
    """Ancilla P[M = 0] of the SWAP test: (1 + Tr[rho_A rho_B]) / 2."""
    if rho_a.matrix.shape != rho_b.matrix.shape:
        raise ValueError("RDM dimension mismatch")
    overlap = float(np.trace(rho_a.matrix @ rho_b.matrix).real)
    return 0.5 * (1.0 + overlap)


def sample_overlap_swap(rho_a: QubitRDM, rho_b: QubitRDM, shots: int, rng) -> OverlapEstimate:
    """Estimate Tr[rho_A rho_B] from simulated SWAP-test ancilla statistics.

    Each counted shot is one joint preparation of both states; the estimator
    pools ``ANCILLA_READS_PER_SAMPLE`` Bernoulli(p0) ancilla reads per shot
    and returns value = 2 * (fraction of zeros) - 1. Estimates of overlaps
    near zero can fluctuate slightly below zero; they are not clipped, so the
    estimator stays unbiased.
    """
    if shots < 1:
        raise ValueError("shots must be positive")
    gen = as_generator(rng)
    p0 = swap_probability(rho_a, rho_b)
    draws = shots * ANCILLA_READS_PER_SAMPLE
    zeros = int(gen.binomial(draws, p0))
    frac = zeros / draws
    value = 2.0 * frac - 1.0
    std_error = 2.0 * math.sqrt(max(frac * (1.0 - frac), 0.0) / draws)
    return OverlapEstimate(
        value=value, shots_used=shots, eigensolver_calls=shots, std_error=std_error
    )


def quad_constraint_exact(rho_a: QubitRDM, rho_b: QubitRDM) -> float:
    """Tr[(rho_A - rho_B)^2], the quadratic matching condition, analytically."""
    diff = rho_a.matrix - rho_b.matrix
    return float(np.trace(diff @ diff).real)


def quad_constraint_sampled(
    rho_a: QubitRDM, rho_b: QubitRDM, shots_each, rng
) -> PairMismatch:
    """Quadratic constraint from three SWAP-test estimators.

    Q = Tr[rho_A^2] + Tr[rho_B^2] - 2 Tr[rho_A rho_B], each trace estimated
    independently with ``shots_each`` samples. Passing ``shots_each=None``
    (the infinite-shot flag) returns the analytic value.
    """
    if shots_each is None:
        return PairMismatch(
            q_quad=quad_constraint_exact(rho_a, rho_b),
            shots_used=0,
            eigensolver_calls=0,
            std_error=0.0,
        )
    gen = as_generator(rng)
    pur_a = sample_overlap_swap(rho_a, rho_a, shots_each, gen)
    pur_b = sample_overlap_swap(rho_b, rho_b, shots_each, gen)
    cross = sample_overlap_swap(rho_a, rho_b, shots_each, gen)
    q = pur_a.value + pur_b.value - 2.0 * cross.value
    err = math.sqrt(pur_a.std_error**2 + pur_b.std_error**2 + 4.0 * cross.std_error**2)
    return PairMismatch(
        q_quad=q,
        shots_used=3 * shots_each,
        eigensolver_calls=3 * shots_each,
        std_error=err,
    )


def linear_constraints(rho_a: QubitRDM, rho_b: QubitRDM) -> np.ndarray:
    """Constraint vector <S_a>_A - <S_a>_B over the nontrivial Pauli basis.

    With the Tr[S_a S_b] = 2^m delta_ab normalization, the quadratic
    constraint is recovered as Q = 2^(-m) * sum_a d_a^2.
    """
    if rho_a.matrix.shape != rho_b.matrix.shape:
        raise ValueError("RDM dimension mismatch")
    return rdm_pauli_expansion(rho_a) - rdm_pauli_expansion(rho_b)


# ---------------------------------------------------------------------------
# Sampling-complexity calculators
# ---------------------------------------------------------------------------


def nsamp_tomography(s: float, epsilon: float, m: int, d: float = 1.0) -> int:
    """Samples for naive density-matrix tomography of an m-qubit region.

    Instantiated as ceil(D * (4^m - 1) / eps^2): one 1/eps^2 estimation per
    nontrivial Pauli term. D is a system-dependent constant (default 1); the
    overlap argument ``s`` is accepted for interface symmetry with
    ``nsamp_swap`` but does not enter this instantiation.
    """
    _require_epsilon(epsilon)
    if m < 1:
        raise ValueError("region must contain at least one qubit")
    return math.ceil(d * (4**m - 1) / epsilon**2)


def nsamp_swap(s: float, epsilon: float) -> int:
    """SWAP-test samples to reach precision eps on an overlap of size s.

    ceil(((1 - s^2)/8) / eps^2); independent of the region size, and zero in
    the zero-variance limit s = 1.
    """
    _require_epsilon(epsilon)
    if not -1e-9 <= s <= 1.0 + 1e-9:
        raise ValueError("overlap must lie in [0, 1]")
    s = min(max(s, 0.0), 1.0)
    return math.ceil((1.0 - s * s) / 8.0 / epsilon**2)


def nsamp_swap_ae(epsilon: float) -> int:
    """State preparations for amplitude-amplified overlap estimation.

    ceil( sqrt(2)/(2 ln 2 eps) * ln^2(1/eps) ); independent of the overlap.
    """
    _require_epsilon(epsilon)
    log_term = math.log(1.0 / epsilon)
    return math.ceil(math.sqrt(2.0) / (2.0 * math.log(2.0) * epsilon) * log_term**2)


def _require_epsilon(epsilon: float) -> None:
    if not 0.0 < epsilon < 1.0:
        raise ValueError("target precision must lie in (0, 1)")


def adaptive_shots(prev_s, target_eps: float, method: str) -> int:
    """Shot budget for the next iteration from the previously estimated overlap.

    ``method`` is ``"swap"`` (incoherent, Eq.-style (1-S^2)/8/eps^2 budget,
    worst case S = 0 when no previous estimate exists) or ``"swap_ae"``
    (coherent, overlap-independent).
    """
    if method == "swap":
        s = 0.0 if prev_s is None else min(max(float(prev_s), 0.0), 1.0)
        return nsamp_swap(s, target_eps)
    if method == "swap_ae":
        return nsamp_swap_ae(target_eps)
    raise ValueError(f"unknown sampling method {method!r}")


# ---------------------------------------------------------------------------
# Amplitude amplification + maximum-likelihood binary refinement
# ---------------------------------------------------------------------------


def _ae_depth_schedule(epsilon: float) -> list:
    """Grover depths (odd K = 2k + 1) doubling up to ~0.65/eps."""
    k_target = max(1.0, _AE_DEPTH_FACTOR / epsilon)
    depths = [1]
    j = 1
    while 2**j + 1 < k_target:
        depths.append(2**j + 1)
        j += 1
    final = int(round(k_target))
    final += 1 - (final % 2)  # make odd
    if final > depths[-1]:
        depths.append(final)
    return depths


def _ae_repetitions(epsilon: float, delta: float) -> int:
    reps = _AE_REPS_SLOPE * math.log(1.0 / epsilon) + _AE_REPS_OFFSET
    if delta < 0.05:
        reps += 2.0 * math.log(0.05 / delta)
    return max(7, int(round(reps)))


def amplitude_estimate_bs(p0: float, epsilon: float, delta: float, rng) -> OverlapEstimate:
    """Estimate 2*p0 - 1 through amplified SWAP-test statistics.

    After k Grover reflections the ancilla success probability is
    sin^2((2k+1) theta) with sin(theta) = sqrt(p0). A fixed geometric depth
    schedule is measured a fixed number of times per depth, and the overlap
    is read off a maximum-likelihood grid over theta; successive depths
    resolve successive bits of the amplitude. Every state preparation,
    including those inside reflections, is counted: one shot at depth k costs
    2k + 1 preparations.

    The returned estimate satisfies |value - (2 p0 - 1)| <= epsilon with
    probability at least 1 - delta. The schedule depends only on (epsilon,
    delta), so the cost is independent of the overlap being estimated.
    """
    if epsilon >= 1.0:
        raise ValueError("target precision must be below 1")
    _require_epsilon(epsilon)
    if not 0.0 < delta < 1.0:
        raise ValueError("failure probability must lie in (0, 1)")
    if not 0.5 - 1e-12 <= p0 <= 1.0 + 1e-12:
        raise ValueError("SWAP-test ancilla probability must lie in [1/2, 1]")
    p0 = min(max(p0, 0.5), 1.0)
    gen = as_generator(rng)

    theta = math.asin(math.sqrt(p0))
    depths = _ae_depth_schedule(epsilon)
    reps = _ae_repetitions(epsilon, delta)

    hits = []
    for k_odd in depths:
        prob = math.sin(k_odd * theta) ** 2
        hits.append(int(gen.binomial(reps, prob)))

    grid = np.linspace(np.pi / 4, np.pi / 2, int(np.ceil((np.pi / 4) / (epsilon / 10.0))) + 1)
    loglik = np.zeros_like(grid)
    for k_odd, h in zip(depths, hits):
        p = np.clip(np.sin(k_odd * grid) ** 2, 1e-15, 1.0 - 1e-15)
        loglik += h * np.log(p) + (reps - h) * np.log1p(-p)
    theta_hat = float(grid[np.argmax(loglik)])

    calls = reps * sum(depths)
    fisher = 4.0 * reps * sum(k * k for k in depths)
    sigma_theta = 1.0 / math.sqrt(fisher)
    value = -math.cos(2.0 * theta_hat)
    std_error = abs(2.0 * math.sin(2.0 * theta_hat)) * sigma_theta
    return OverlapEstimate(
        value=value,
        shots_used=reps * len(depths),
        eigensolver_calls=calls,
        std_error=std_error,
    )


def ae_eigensolver_calls(epsilon: float, delta: float = 0.05) -> int:
    """Deterministic preparation count of ``amplitude_estimate_bs`` at (eps, delta)."""
    return _ae_repetitions(epsilon, delta) * sum(_ae_depth_schedule(epsilon))
