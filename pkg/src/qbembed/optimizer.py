"""The bootstrap-embedding outer loop: local potentials, penalty schedule, energy.

The quadratic variant minimizes, per fragment A and fixed penalty weight lam,

    L_A(v) = <H_A>_psi(v) + lam * sum_B Tr[(rho_edge(psi(v)) - rho_center_B)^2]

over the coefficients v of a local edge potential V(v) = sum_a v_a S_a, where
psi(v) is the sector ground state of H_A + V(v). The penalty weight grows
geometrically (lam <- gamma * lam) until the root-mean-square mismatch over
all overlapping site pairs drops below threshold. The linear variant instead
performs dual ascent on Lagrange multipliers attached to the componentwise
Pauli-expectation constraints.

Fragment minimizations within one outer iteration match against neighbor
density matrices frozen at iteration start (Jacobi-style update), so they are
independent and their order does not matter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize
import scipy.sparse.linalg

from .errors import DegenerateGapError, ResourceLimitError
from .fragment import EmbeddingHamiltonian, Fragment
from .matching import (
    OverlapEstimate,
    PairMismatch,
    MismatchReport,
    adaptive_shots,
    amplitude_estimate_bs,
    as_generator,
    child_seeds,
    quad_constraint_exact,
    quad_constraint_sampled,
    swap_probability,
)
from .qubits import (
    PauliOperator,
    QubitRDM,
    SectorSpace,
    Statevector,
    fermionic_1rdm,
    fermionic_2rdm_chemist,
    jordan_wigner,
    number_expectations,
    pauli_basis,
    qubit_rdm,
)

SHOT_POLICIES = ("exact", "swap", "swap_ae", "tomography")


@dataclass
class VbePotential:
    """Local bootstrap potential: real coefficients on Hermitian edge generators."""

    fragment_id: int
    generators: tuple
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (len(self.generators),):
            raise ValueError("one coefficient per generator required")

    @property
    def m(self) -> int:
        return len(self.generators)

    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def edge_generator_strings(frag: Fragment, n_emb: int) -> tuple:
    """Default Hermitian generator set on the edge-site qubits.

    Single-qubit X, Y, Z on both spin qubits of every edge site plus the
    same-site ZZ pair. Only a handful of generators act within a fixed
    particle-number sector, but the full set keeps the potential expressive
    enough for occupation and spin-resolved shifts.
    """
    n_q = 2 * n_emb
    strings = []
    for site in frag.edge:
        i = frag.position(site)
        for q in (2 * i, 2 * i + 1):
            for ch in "XYZ":
                s = ["I"] * n_q
                s[q] = ch
                strings.append("".join(s))
        s = ["I"] * n_q
        s[2 * i] = "Z"
        s[2 * i + 1] = "Z"
        strings.append("".join(s))
    return tuple(strings)


def apply_vbe(op: PauliOperator, v: VbePotential) -> PauliOperator:
    """H + V_BE(v) as a canonicalized Pauli operator."""
    out = op.copy()
    for coef, string in zip(v.coeffs, v.generators):
        if coef != 0.0:
            out = out + PauliOperator(op.n_qubits, {string: coef})
    return out


# ---------------------------------------------------------------------------
# Per-fragment solver cache
# ---------------------------------------------------------------------------

_DENSE_SOLVE_LIMIT = 128


class FragmentProblem:
    """Precomputed sector-space data for one fragment.

    The embedding is frozen after construction, so the bare Hamiltonian and
    all generator matrices are built once; each cost evaluation only forms
    H0 + sum_a v_a G_a and re-solves for the lowest eigenpair.
    """

    def __init__(
        self,
        frag: Fragment,
        emb: EmbeddingHamiltonian,
        sz: float = 0.0,
        n_elec_total: int = None,
    ):
        self.fragment = frag
        self.emb = emb
        self.n_elec_total = emb.n_elec if n_elec_total is None else n_elec_total
        self.n_qubits = 2 * emb.n_emb
        self.op = jordan_wigner(emb)
        self.space = SectorSpace(self.n_qubits, emb.n_elec, sz)
        h0 = self.space.matrix(self.op)
        if np.abs(h0.imag).max() > 1e-12:
            raise ArithmeticError("fragment Hamiltonian is not real in the sector basis")
        self.h0 = np.ascontiguousarray(h0.real)
        self.generators = edge_generator_strings(frag, emb.n_emb)
        self.gen_mats = []
        for s in self.generators:
            g = self.space.matrix(PauliOperator(self.n_qubits, {s: 1.0}))
            if np.abs(g.imag).max() > 1e-12:
                raise ArithmeticError("generator is not real in the sector basis")
            self.gen_mats.append(np.ascontiguousarray(g.real))
        self.live_generators = np.array(
            [np.abs(g).max() > 1e-14 for g in self.gen_mats], dtype=bool
        )
        self._warm = None
        self.solve_count = 0

    def site_region(self, site: int) -> tuple:
        i = self.fragment.position(site)
        return (2 * i, 2 * i + 1)

    def dressed_matrix(self, coeffs) -> np.ndarray:
        h = self.h0
        if coeffs is not None and len(coeffs):
            h = h.copy()
            for c, g in zip(coeffs, self.gen_mats):
                if c != 0.0:
                    h += c * g
        return h

    def solve(self, coeffs=None):
        """Ground sector eigenpair of H0 + V(coeffs); returns (energy, sector vector)."""
        h = self.dressed_matrix(coeffs)
        dim = h.shape[0]
        self.solve_count += 1
        if dim <= _DENSE_SOLVE_LIMIT or self._warm is None:
            evals, evecs = np.linalg.eigh(h)
            vec = evecs[:, 0]
            energy = float(evals[0])
        else:
            try:
                evals, evecs = scipy.sparse.linalg.eigsh(
                    h, k=1, which="SA", v0=self._warm, tol=1e-11, maxiter=2000
                )
                energy, vec = float(evals[0]), evecs[:, 0]
            except scipy.sparse.linalg.ArpackError:
                evals, evecs = np.linalg.eigh(h)
                energy, vec = float(evals[0]), evecs[:, 0]
        if vec[np.argmax(np.abs(vec))] < 0:
            vec = -vec
        self._warm = vec
        return energy, vec

    def statevector(self, vec) -> Statevector:
        return Statevector(self.space.embed(vec))

    def bare_expectation(self, vec) -> float:
        """<H_A> without the added potential."""
        return float(np.real(np.conj(vec) @ (self.h0 @ vec)))

    def site_rdms(self, psi: Statevector) -> dict:
        return {site: qubit_rdm(psi, self.site_region(site)) for site in self.fragment.orbitals}

    def center_occupation(self, psi: Statevector) -> float:
        occ = number_expectations(psi)
        total = 0.0
        for site in self.fragment.center:
            i = self.fragment.position(site)
            total += occ[2 * i] + occ[2 * i + 1]
        return float(total)


def build_fragment_problems(
    fragments, embeddings, n_elec_total: int = None, sz: float = 0.0
) -> list:
    return [
        FragmentProblem(f, e, sz, n_elec_total=n_elec_total)
        for f, e in zip(fragments, embeddings)
    ]


# ---------------------------------------------------------------------------
# Cost function and inner minimization
# ---------------------------------------------------------------------------


@dataclass
class ShotPolicy:
    """How the quadratic penalty terms are estimated during optimization.

    ``mode`` is one of exact | swap | swap_ae. In sampled modes ``target_eps``
    sets the per-overlap precision, ``prev_overlaps`` carries the previous
    iteration's overlap estimates for the adaptive schedule, and ``delta`` is
    the amplitude-estimation failure budget.
    """

    mode: str = "exact"
    target_eps: float = 1e-3
    delta: float = 0.05
    prev_overlaps: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in SHOT_POLICIES:
            raise ValueError(f"shot policy must be one of {SHOT_POLICIES}")


def _estimate_pair(rho_a, rho_b, policy: ShotPolicy, pair_key, rng) -> PairMismatch:
    """One overlapping pair's Q_quad under the given shot policy."""
    if policy.mode == "exact":
        return PairMismatch(
            q_quad=quad_constraint_exact(rho_a, rho_b),
            shots_used=0,
            eigensolver_calls=0,
            std_error=0.0,
        )
    if policy.mode == "swap":
        prev = policy.prev_overlaps.get(pair_key)
        shots = max(1, adaptive_shots(prev, policy.target_eps, "swap"))
        return quad_constraint_sampled(rho_a, rho_b, shots, rng)
    if policy.mode == "tomography":
        return _estimate_pair_tomography(rho_a, rho_b, policy, rng)
    # swap_ae: three amplitude-estimation runs (two purities, one cross term)
    gen = as_generator(rng)
    estimates = []
    calls = 0
    shots = 0
    for x, y in ((rho_a, rho_a), (rho_b, rho_b), (rho_a, rho_b)):
        est = amplitude_estimate_bs(
            swap_probability(x, y), policy.target_eps, policy.delta, gen
        )
        estimates.append(est)
        calls += est.eigensolver_calls
        shots += est.shots_used
    q = estimates[0].value + estimates[1].value - 2.0 * estimates[2].value
    err = math.sqrt(
        estimates[0].std_error**2 + estimates[1].std_error**2 + 4.0 * estimates[2].std_error**2
    )
    return PairMismatch(q_quad=q, shots_used=shots, eigensolver_calls=calls, std_error=err)


def _estimate_pair_tomography(rho_a, rho_b, policy: ShotPolicy, rng) -> PairMismatch:
    """Q_quad from per-Pauli tomography of both RDMs (the naive baseline).

    Every nontrivial Pauli expectation of each state is estimated separately
    from binomial outcome counts; the squared constraint components are
    debiased by their sampling variance so the estimator stays centered. The
    total preparation count realizes the D * (4^m - 1) / eps^2 cost law.
    """
    from .matching import as_generator as _as_gen
    from .qubits import rdm_pauli_expansion

    gen = _as_gen(rng)
    m = rho_a.m
    n_terms = 4**m - 1
    per_term = max(1, math.ceil(0.5 / policy.target_eps**2))
    exp_a = rdm_pauli_expansion(rho_a)
    exp_b = rdm_pauli_expansion(rho_b)
    q = 0.0
    for ea, eb in zip(exp_a, exp_b):
        est = []
        var = 0.0
        for exact in (ea, eb):
            p_plus = min(max(0.5 * (1.0 + exact), 0.0), 1.0)
            hits = int(gen.binomial(per_term, p_plus))
            phat = hits / per_term
            est.append(2.0 * phat - 1.0)
            var += 4.0 * phat * (1.0 - phat) / per_term
        d = est[0] - est[1]
        q += (d * d - var) / (1 << m)
    calls = 2 * n_terms * per_term
    return PairMismatch(
        q_quad=q,
        shots_used=calls,
        eigensolver_calls=calls,
        std_error=float("nan"),
    )


@dataclass
class CostBreakdown:
    total: float
    fragment_energy: float
    penalty: float
    number_term: float
    eigensolver_calls: int
    shots: int


def cost_function(
    problem: FragmentProblem,
    coeffs,
    lam: float,
    neighbor_rdms: dict,
    policy: ShotPolicy = None,
    rng=None,
    number_penalty_target=None,
) -> CostBreakdown:
    """Penalty cost for one fragment at fixed neighbor density matrices.

    ``neighbor_rdms`` maps edge site -> the neighbor's center RDM for that
    site. ``number_penalty_target`` (when not None) is N_e minus the frozen
    center occupations of all other fragments; it switches on the quadratic
    electron-count term lam * (n_center - target)^2.
    """
    policy = policy or ShotPolicy()
    _, vec = problem.solve(coeffs)
    psi = problem.statevector(vec)
    e_frag = problem.bare_expectation(vec)

    penalty = 0.0
    calls = 1  # the ground-state preparation behind <H_A>
    shots = 0
    for site, rho_b in neighbor_rdms.items():
        rho_a = qubit_rdm(psi, problem.site_region(site))
        pair = _estimate_pair(rho_a, rho_b, policy, (problem.fragment.id, site), rng)
        penalty += pair.q_quad
        calls += pair.eigensolver_calls
        shots += pair.shots_used

    number_term = 0.0
    if number_penalty_target is not None:
        n_center = problem.center_occupation(psi)
        number_term = (n_center - number_penalty_target) ** 2
    total = e_frag + lam * penalty + lam * number_term
    return CostBreakdown(
        total=total,
        fragment_energy=e_frag,
        penalty=penalty,
        number_term=number_term,
        eigensolver_calls=calls,
        shots=shots,
    )


@dataclass
class MinimizeOptions:
    tol: float = 1e-9
    max_inner: int = 120
    fd_step: float = 1e-6


def minimize_fragment(
    problem: FragmentProblem,
    lam: float,
    neighbor_rdms: dict,
    opts: MinimizeOptions = None,
    policy: ShotPolicy = None,
    rng=None,
    start: VbePotential = None,
    number_penalty_target=None,
):
    """Inner unconstrained minimization of the fragment cost over v.

    Exact shot policy: L-BFGS-B with central finite differences restricted to
    generators that act within the particle-number sector (the others have
    exactly zero gradient and stay at their starting value). Sampled shot
    policies: Nelder-Mead on a fixed-seed objective, so each evaluation sees
    the same noise realization and the optimization remains deterministic.

    Returns (VbePotential, info dict with cost/calls/shots accounting).
    """
    policy = policy or ShotPolicy()
    opts = opts or MinimizeOptions()
    x0 = np.zeros(len(problem.generators)) if start is None else start.coeffs.copy()
    live = problem.live_generators
    accounting = {"eigensolver_calls": 0, "shots": 0, "evaluations": 0}

    if not live.any():
        breakdown = cost_function(
            problem, x0, lam, neighbor_rdms, policy, rng,
            number_penalty_target=number_penalty_target,
        )
        accounting["eigensolver_calls"] += breakdown.eigensolver_calls
        accounting["shots"] += breakdown.shots
        accounting["evaluations"] += 1
        accounting["cost"] = breakdown.total
        return VbePotential(problem.fragment.id, problem.generators, x0), accounting

    seed_pool = as_generator(rng).integers(0, 2**63 - 1) if rng is not None else 0

    def objective(x_live):
        x = x0.copy()
        x[live] = x_live
        eval_rng = np.random.default_rng(seed_pool) if policy.mode != "exact" else None
        breakdown = cost_function(
            problem, x, lam, neighbor_rdms, policy, eval_rng,
            number_penalty_target=number_penalty_target,
        )
        accounting["eigensolver_calls"] += breakdown.eigensolver_calls
        accounting["shots"] += breakdown.shots
        accounting["evaluations"] += 1
        return breakdown.total

    if policy.mode == "exact":
        def gradient(x_live):
            g = np.zeros_like(x_live)
            h = opts.fd_step
            for i in range(len(x_live)):
                xp = x_live.copy(); xp[i] += h
                xm = x_live.copy(); xm[i] -= h
                g[i] = (objective(xp) - objective(xm)) / (2 * h)
            return g

        result = scipy.optimize.minimize(
            objective,
            x0[live],
            jac=gradient,
            method="L-BFGS-B",
            options={"maxiter": opts.max_inner, "ftol": 1e-13, "gtol": opts.tol},
        )
    else:
        result = scipy.optimize.minimize(
            objective,
            x0[live],
            method="Nelder-Mead",
            options={
                "maxiter": opts.max_inner * max(1, int(live.sum())),
                "xatol": 1e-4,
                "fatol": 1e-8,
            },
        )

    x = x0.copy()
    x[live] = result.x
    accounting["cost"] = float(result.fun)
    accounting["converged"] = bool(result.success)
    return VbePotential(problem.fragment.id, problem.generators, x), accounting


# ---------------------------------------------------------------------------
# Mismatch aggregation
# ---------------------------------------------------------------------------


def matching_pairs(fragments) -> list:
    """All (fragment A, edge site, fragment B) triples with the site in B's center."""
    triples = []
    for frag in fragments:
        for neighbor_id, pairs in sorted(frag.overlaps.items()):
            for edge_site, center_site in pairs:
                triples.append((frag.id, edge_site, neighbor_id))
    return triples


def delta_rho(site_rdms: dict, fragments) -> float:
    """Root-mean-square mismatch over all overlapping site pairs.

    sqrt( (1/N_sites) sum_pairs Tr[(rho_B - rho_A)^2] ) where the sum runs
    over every edge site of every fragment paired with the owning neighbor's
    center RDM; N_sites counts those pairs.
    """
    triples = matching_pairs(fragments)
    if not triples:
        return 0.0
    total = 0.0
    for a_id, site, b_id in triples:
        total += quad_constraint_exact(site_rdms[a_id][site], site_rdms[b_id][site])
    return math.sqrt(total / len(triples))


def mismatch_report(site_rdms: dict, fragments, policy: ShotPolicy, rng=None) -> MismatchReport:
    """Per-pair Q_quad estimates plus the aggregate Delta-rho under a shot policy.

    Sampled Q values can fluctuate slightly below zero; they are clipped at
    zero only inside the aggregate so Delta-rho stays real.
    """
    triples = matching_pairs(fragments)
    pairs = {}
    gen = as_generator(rng) if rng is not None else None
    total = 0.0
    for a_id, site, b_id in triples:
        entry = _estimate_pair(
            site_rdms[a_id][site], site_rdms[b_id][site], policy, (a_id, site), gen
        )
        pairs[(a_id, b_id, site)] = entry
        total += max(entry.q_quad, 0.0)
    dr = math.sqrt(total / len(triples)) if triples else 0.0
    return MismatchReport(pairs=pairs, delta_rho=dr)


# ---------------------------------------------------------------------------
# Energy assembly (democratic center-site partition)
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    total: float
    per_fragment: list
    e_core_terms: list
    e_nuc: float


def total_energy(problems, states) -> EnergyReport:
    """Democratic center-site partition of the total energy.

    Each fragment contributes its one- and two-body terms weighted by the
    fraction of indices that lie on its center sites (1, 1/2 or 0 for
    one-body; quarters for two-body). The one-body matrix used here is the
    bare projected core Hamiltonian plus HALF the frozen-environment mean
    field: fragment-environment interaction energy is split evenly between
    the fragment's centers and the fragments owning the environment sites.
    Nuclear repulsion is added once, globally.

    With a single whole-molecule fragment every weight is 1, the environment
    is empty, and the assembled energy is exactly the fragment eigenenergy.
    """
    per_fragment = []
    e_core_terms = []
    e_nuc = problems[0].emb.e_nuc if problems else 0.0
    for problem, psi in zip(problems, states):
        frag, emb = problem.fragment, problem.emb
        central = np.zeros(emb.n_emb)
        for k in range(emb.n_frag_orbitals):
            if frag.orbitals[k] in frag.center:
                central[k] = 1.0
        w1 = 0.5 * (central[:, None] + central[None, :])
        w2 = 0.25 * (
            central[:, None, None, None]
            + central[None, :, None, None]
            + central[None, None, :, None]
            + central[None, None, None, :]
        )
        p_so = fermionic_1rdm(psi).p
        n = emb.n_emb
        p_spatial = p_so[0::2, 0::2] + p_so[1::2, 1::2]
        gamma = fermionic_2rdm_chemist(psi, n)
        h_energy = emb.h_bare + 0.5 * emb.f_env
        e1 = float(np.sum(w1 * h_energy * p_spatial))
        e2 = 0.5 * float(np.sum(w2 * emb.v * gamma))
        per_fragment.append(e1 + e2)
        e_core_terms.append(emb.e_core)
    return EnergyReport(
        total=sum(per_fragment) + e_nuc,
        per_fragment=per_fragment,
        e_core_terms=e_core_terms,
        e_nuc=e_nuc,
    )


# ---------------------------------------------------------------------------
# Exact gradient of the penalty cost (validation only)
# ---------------------------------------------------------------------------


def exact_penalty_gradient(
    problem: FragmentProblem, coeffs, lam: float, neighbor_rdms: dict
) -> np.ndarray:
    """Analytic gradient of the quadratic-penalty cost via all excited states.

    dL/dv_a = 2 sum_{n>0} Re[ <0|G_a|n> <n| (H_A + 2 lam sum_B O_B) |0> ] / (E0 - En)

    with O_B = (rho_edge - rho_center_B) acting on the overlap region. Needs
    the full eigendecomposition, so it is restricted to <= 8 qubits and used
    to validate the optimizer, not to drive it.
    """
    if problem.n_qubits > 8:
        raise ResourceLimitError("exact gradient restricted to <= 8 qubit fragments")
    h = problem.dressed_matrix(np.asarray(coeffs, dtype=float))
    evals, evecs = np.linalg.eigh(h)
    gaps = evals[1:] - evals[0]
    if gaps.size and gaps.min() < 1e-10:
        raise DegenerateGapError(
            f"ground state degenerate within 1e-10 (gap {gaps.min():.2e})"
        )
    ground = evecs[:, 0]
    excited = evecs[:, 1:]
    psi = problem.statevector(ground)

    m_op = problem.h0.astype(complex).copy()
    for site, rho_b in neighbor_rdms.items():
        rho_a = qubit_rdm(psi, problem.site_region(site))
        diff = rho_a.matrix - rho_b.matrix
        pauli_op = PauliOperator(problem.n_qubits)
        region = problem.site_region(site)
        mm = len(region)
        for s in pauli_basis(mm):
            coef = np.trace(diff @ _region_matrix(s)).real / (1 << mm)
            if abs(coef) > 1e-14:
                full = ["I"] * problem.n_qubits
                for t, q in enumerate(region):
                    full[q] = s[t]
                pauli_op = pauli_op + PauliOperator(problem.n_qubits, {"".join(full): coef})
        if pauli_op.n_terms:
            m_op += 2.0 * lam * problem.space.matrix(pauli_op)

    rhs = excited.conj().T @ (m_op @ ground)
    grad = np.zeros(len(problem.generators))
    for a, g in enumerate(problem.gen_mats):
        couplings = ground @ (g @ excited)
        grad[a] = 2.0 * float(np.sum((couplings * rhs).real / (evals[0] - evals[1:])))
    return grad


def _region_matrix(string: str) -> np.ndarray:
    from .qubits import pauli_string_matrix

    return pauli_string_matrix(string)


# ---------------------------------------------------------------------------
# Outer loops
# ---------------------------------------------------------------------------


@dataclass
class BEIteration:
    iteration: int
    lam: float
    delta_rho: float
    energy: float
    per_fragment_energy: list
    eigensolver_calls_cum: int
    shots_cum: int
    inner_evaluations: int


@dataclass
class BEState:
    """Loop state and per-iteration history of one bootstrap-embedding run."""

    lam: float
    gamma: float
    threshold: float
    potentials: list
    energies: list
    statevectors: list
    records: list = field(default_factory=list)
    converged: bool = False
    eigensolver_calls: int = 0
    shots: int = 0

    @property
    def delta_rho_history(self) -> list:
        return [r.delta_rho for r in self.records]

    @property
    def final_energy(self) -> float:
        return self.records[-1].energy if self.records else math.nan


def _snapshot(problems, potentials):
    """Solve every fragment with its current potential; RDMs for all sites."""
    states, rdms, energies = [], {}, []
    for problem, pot in zip(problems, potentials):
        energy, vec = problem.solve(pot.coeffs if pot is not None else None)
        psi = problem.statevector(vec)
        states.append(psi)
        rdms[problem.fragment.id] = problem.site_rdms(psi)
        energies.append(problem.bare_expectation(vec))
    return states, rdms, energies


def _pair_overlaps(site_rdms, fragments):
    """Exact Tr[rho_A rho_B] per overlap pair, for the adaptive shot schedule."""
    overlaps = {}
    for a_id, site, b_id in matching_pairs(fragments):
        ra = site_rdms[a_id][site].matrix
        rb = site_rdms[b_id][site].matrix
        overlaps[(a_id, site)] = float(np.trace(ra @ rb).real)
    return overlaps


def qbe_quadratic(
    problems,
    lam0: float = 1.0,
    gamma: float = 2.0,
    threshold: float = 1e-5,
    max_outer: int = 30,
    shot_policy: str = "exact",
    target_eps: float = 1e-3,
    seed: int = 0,
    number_penalty: bool = False,
    opts: MinimizeOptions = None,
    damping: float = 1.0,
) -> BEState:
    """Quadratic-penalty bootstrap embedding (the main outer loop).

    Per outer iteration: every fragment independently minimizes its penalty
    cost against neighbor RDMs frozen at iteration start, the penalty weight
    is multiplied by gamma, and the mismatch Delta-rho is re-estimated under
    the configured shot policy. Terminates when Delta-rho <= threshold or
    the iteration cap is reached (the returned state is then flagged
    non-converged).

    ``damping`` mixes the minimizer's potential with the previous iterate,
    v <- v_old + damping * (v_min - v_old); values below 1 keep the
    per-iteration potential step small so simultaneously updating fragments
    do not chase each other's moving center densities.
    """
    if lam0 <= 0 or gamma <= 1.0:
        raise ValueError("penalty schedule requires lam0 > 0 and gamma > 1")
    fragments = [p.fragment for p in problems]
    state = BEState(
        lam=lam0,
        gamma=gamma,
        threshold=threshold,
        potentials=[VbePotential(p.fragment.id, p.generators, np.zeros(len(p.generators))) for p in problems],
        energies=[math.nan] * len(problems),
        statevectors=[None] * len(problems),
    )
    seeds = child_seeds(seed, max_outer + 1)
    policy = ShotPolicy(mode=shot_policy, target_eps=target_eps)

    states, rdms, energies = _snapshot(problems, state.potentials)
    state.eigensolver_calls += len(problems)
    n_e_molecule = _molecule_electron_count(problems)

    for it in range(1, max_outer + 1):
        iter_rng = as_generator(seeds[it - 1])
        center_occs = [p.center_occupation(psi) for p, psi in zip(problems, states)]

        new_potentials = []
        inner_evals = 0
        for idx, problem in enumerate(problems):
            neighbor = {
                site: rdms[b_id][site]
                for b_id, pairs in sorted(problem.fragment.overlaps.items())
                for site, _ in pairs
            }
            target = None
            if number_penalty and len(problems) > 1:
                rest = sum(center_occs) - center_occs[idx]
                target = n_e_molecule - rest
            pot, info = minimize_fragment(
                problem,
                state.lam,
                neighbor,
                opts=opts,
                policy=policy,
                rng=iter_rng if shot_policy != "exact" else None,
                start=state.potentials[idx],
                number_penalty_target=target,
            )
            if damping != 1.0:
                mixed = state.potentials[idx].coeffs + damping * (
                    pot.coeffs - state.potentials[idx].coeffs
                )
                pot = VbePotential(pot.fragment_id, pot.generators, mixed)
            new_potentials.append(pot)
            state.eigensolver_calls += info["eigensolver_calls"]
            state.shots += info["shots"]
            inner_evals += info["evaluations"]
        state.potentials = new_potentials

        states, rdms, energies = _snapshot(problems, state.potentials)
        state.eigensolver_calls += len(problems)
        policy.prev_overlaps = _pair_overlaps(rdms, fragments)

        if shot_policy == "exact":
            dr = delta_rho(rdms, fragments)
        else:
            report = mismatch_report(rdms, fragments, policy, iter_rng)
            state.eigensolver_calls += report.total_eigensolver_calls
            state.shots += report.total_shots
            dr = report.delta_rho

        energy = total_energy(problems, states).total
        state.records.append(
            BEIteration(
                iteration=it,
                lam=state.lam,
                delta_rho=dr,
                energy=energy,
                per_fragment_energy=list(energies),
                eigensolver_calls_cum=state.eigensolver_calls,
                shots_cum=state.shots,
                inner_evaluations=inner_evals,
            )
        )
        state.energies = energies
        state.statevectors = states
        if dr <= threshold:
            state.converged = True
            break
        state.lam *= gamma
    return state


def _molecule_electron_count(problems) -> int:
    return problems[0].n_elec_total if problems else 0


def qbe_linear(
    problems,
    learning_rate: float = 1.0,
    threshold: float = 1e-5,
    max_outer: int = 60,
    seed: int = 0,
    number_penalty: bool = False,
    target_mixing: float = 0.5,
) -> BEState:
    """Naive linear RDM matching: dual ascent on componentwise multipliers.

    Each overlap pair carries one Lagrange multiplier per nontrivial Pauli
    string on the shared region; the fragment eigenproblem is re-solved with
    V_BE = sum multipliers * generators and the multipliers move along the
    constraint vector <S_a>_A - <S_a>_B.

    ``target_mixing`` low-pass filters the center densities the constraints
    are evaluated against (new = (1 - beta) * old + beta * current). The
    simultaneous fragment updates couple through those targets, and the
    filter damps the chain-wide oscillation mode that plain dual ascent
    excites; the stationary point is unchanged.
    """
    from .matching import linear_constraints

    fragments = [p.fragment for p in problems]
    n_e_molecule = _molecule_electron_count(problems)
    triples = matching_pairs(fragments)
    multipliers = {
        (a_id, site): np.zeros(len(pauli_basis(2))) for a_id, site, _ in triples
    }
    mu = 0.0  # global electron-number multiplier

    def potential_for(problem):
        strings = {}
        for (a_id, site), lam_vec in multipliers.items():
            if a_id != problem.fragment.id:
                continue
            region = problem.site_region(site)
            for s, c in zip(pauli_basis(2), lam_vec):
                if abs(c) < 1e-15:
                    continue
                full = ["I"] * problem.n_qubits
                for t, q in enumerate(region):
                    full[q] = s[t]
                key = "".join(full)
                strings[key] = strings.get(key, 0.0) + c
        if number_penalty:
            for site in problem.fragment.center:
                i = problem.fragment.position(site)
                for q in (2 * i, 2 * i + 1):
                    # mu * n_q = mu (I - Z_q) / 2
                    full = ["I"] * problem.n_qubits
                    full[q] = "Z"
                    key = "".join(full)
                    strings[key] = strings.get(key, 0.0) - 0.5 * mu
                    ident = "I" * problem.n_qubits
                    strings[ident] = strings.get(ident, 0.0) + 0.5 * mu
        return strings

    state = BEState(
        lam=learning_rate,
        gamma=1.0 + 1e-9,
        threshold=threshold,
        potentials=[None] * len(problems),
        energies=[math.nan] * len(problems),
        statevectors=[None] * len(problems),
    )

    averaged_targets = {}
    eta = learning_rate
    best_dr = math.inf
    best_multipliers = None
    for it in range(1, max_outer + 1):
        states, rdms, energies = [], {}, []
        for problem in problems:
            strings = potential_for(problem)
            op = problem.op
            if strings:
                op = op + PauliOperator(problem.n_qubits, strings)
            h = problem.space.matrix(op)
            h = 0.5 * (h + h.conj().T)
            if np.abs(h.imag).max() < 1e-12:
                h = h.real
            evals, evecs = np.linalg.eigh(h)
            vec = evecs[:, 0]
            psi = problem.statevector(vec)
            states.append(psi)
            rdms[problem.fragment.id] = problem.site_rdms(psi)
            energies.append(problem.bare_expectation(vec))
            state.eigensolver_calls += 1

        dr = delta_rho(rdms, fragments)
        if dr < best_dr:
            best_dr = dr
            best_multipliers = {k: v.copy() for k, v in multipliers.items()}
        elif dr > 10.0 * best_dr and best_multipliers is not None:
            # a late oscillation mode is growing; back off and retry gently
            multipliers = {k: v.copy() for k, v in best_multipliers.items()}
            eta *= 0.5
            if eta < 1e-3 * learning_rate:
                break
        energy = total_energy(problems, states).total
        state.records.append(
            BEIteration(
                iteration=it,
                lam=learning_rate,
                delta_rho=dr,
                energy=energy,
                per_fragment_energy=list(energies),
                eigensolver_calls_cum=state.eigensolver_calls,
                shots_cum=0,
                inner_evaluations=len(problems),
            )
        )
        state.statevectors = states
        state.energies = energies
        if dr <= threshold:
            state.converged = True
            break

        beta = target_mixing
        for a_id, site, b_id in triples:
            current = rdms[b_id][site]
            key = (b_id, site)
            if key in averaged_targets:
                mixed = (1.0 - beta) * averaged_targets[key].matrix + beta * current.matrix
            else:
                mixed = current.matrix
            averaged_targets[key] = QubitRDM(m=current.m, matrix=mixed)
            d = linear_constraints(rdms[a_id][site], averaged_targets[key])
            multipliers[(a_id, site)] += eta * d
        if number_penalty:
            total_center = sum(
                p.center_occupation(psi) for p, psi in zip(problems, states)
            )
            mu += eta * (total_center - n_e_molecule)
    return state
