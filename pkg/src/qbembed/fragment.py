"""Chain fragmentation, Schmidt bath construction, and embedding Hamiltonians.

A fragment is a contiguous window of local orbitals split into edge and center
sites. The Schmidt decomposition of the Hartree-Fock determinant against the
fragment/environment bipartition yields at most N_A entangled bath orbitals;
fragment plus bath span the embedding space, and the frozen environment
determinant is folded into the one-body term as the usual Coulomb/exchange
mean-field potential.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .integrals import IntegralSet
from .scf import MeanFieldSolution

BATH_OCCUPATION_CUT = 1e-10  # entanglement window; guards against noise-level baths


@dataclass(frozen=True)
class Fragment:
    """A window of local orbitals with its edge/center partition.

    ``overlaps`` maps a neighbor fragment id to the (edge site, center site)
    pairs shared with it; for chain windows both members of a pair are the
    same molecular site index.
    """

    id: int
    orbitals: tuple
    edge: tuple
    center: tuple
    overlaps: dict = field(default_factory=dict)

    def __post_init__(self):
        if set(self.edge) | set(self.center) != set(self.orbitals):
            raise ValueError("edge and center sets must partition the fragment orbitals")
        if set(self.edge) & set(self.center):
            raise ValueError("edge and center sets must be disjoint")

    @property
    def n_orbitals(self) -> int:
        return len(self.orbitals)

    def position(self, site: int) -> int:
        """Index of a molecular site within this fragment's orbital list."""
        return self.orbitals.index(site)


def fragment_chain(n_atoms: int, window: int) -> list:
    """Slide an odd-sized window along the chain, one fragment per position.

    The window center is the fragment's center site and the remaining sites
    are edges, except that the first and last fragments absorb the chain-end
    sites into their centers so that every site is claimed by exactly one
    fragment's center (no electron double counting).
    """
    if window % 2 == 0:
        raise ValueError("window must be odd")
    if window > n_atoms:
        raise ValueError("window larger than the chain")
    n_frag = n_atoms - window + 1
    half = window // 2

    specs = []
    for pos in range(n_frag):
        orbitals = tuple(range(pos, pos + window))
        mid = pos + half
        center = {mid}
        if pos == 0:
            center.update(range(pos, mid))
        if pos == n_frag - 1:
            center.update(range(mid + 1, pos + window))
        edge = tuple(sorted(set(orbitals) - center))
        specs.append((orbitals, edge, tuple(sorted(center))))

    owner = {}
    for fid, (_, _, center) in enumerate(specs):
        for site in center:
            owner[site] = fid

    fragments = []
    for fid, (orbitals, edge, center) in enumerate(specs):
        overlaps = {}
        for site in edge:
            neighbor = owner[site]
            overlaps.setdefault(neighbor, []).append((site, site))
        overlaps = {k: tuple(v) for k, v in overlaps.items()}
        fragments.append(
            Fragment(id=fid, orbitals=orbitals, edge=edge, center=center, overlaps=overlaps)
        )
    return fragments


@dataclass
class EmbeddingBasis:
    """Fragment + Schmidt-bath orbitals, plus the frozen environment block.

    ``basis`` is N x n_emb; the first N_A columns are unit vectors on the
    fragment orbitals, the rest are bath orbitals living on the environment.
    ``entangled_occupations`` are the eigenvalues of the environment block of
    the per-spin HF projector that fall strictly between 0 and 1.
    """

    basis: np.ndarray
    n_elec: int
    env_occ: np.ndarray
    entangled_occupations: np.ndarray
    n_frag_orbitals: int

    @property
    def n_emb(self) -> int:
        return self.basis.shape[1]

    def schmidt_coefficients(self) -> np.ndarray:
        """Schmidt coefficients of the HF determinant across the fragment cut.

        Each entangled spatial orbital contributes the pair
        (sqrt(1 - n), sqrt(n)) per spin channel; the determinant's Schmidt
        coefficients are all products of one choice per channel, so their
        squares sum to exactly 1.
        """
        per_channel = []
        for occ in self.entangled_occupations:
            per_channel.append((np.sqrt(1.0 - occ), np.sqrt(occ)))
        per_channel = per_channel * 2  # restricted: alpha and beta channels
        if not per_channel:
            return np.array([1.0])
        coeffs = [np.prod(choice) for choice in itertools.product(*per_channel)]
        return np.array(sorted(coeffs, reverse=True))


def schmidt_bath(mf: MeanFieldSolution, frag: Fragment) -> EmbeddingBasis:
    """Bath orbitals from the HF determinant for one fragment.

    Diagonalizes the environment block of the idempotent per-spin projector
    D = C_occ C_occ^T. Eigenvalues inside (cut, 1 - cut) are entangled bath
    orbitals, eigenvalues at 1 are the frozen occupied environment, and
    eigenvalues at 0 are discarded virtuals.
    """
    n = mf.c_occ.shape[0]
    frag_idx = list(frag.orbitals)
    env_idx = [i for i in range(n) if i not in set(frag_idx)]

    d = mf.c_occ @ mf.c_occ.T
    basis_cols = [np.eye(n)[:, i] for i in frag_idx]

    if env_idx:
        d_env = d[np.ix_(env_idx, env_idx)]
        w, u = np.linalg.eigh(d_env)
        entangled = (w > BATH_OCCUPATION_CUT) & (w < 1.0 - BATH_OCCUPATION_CUT)
        occupied = w >= 1.0 - BATH_OCCUPATION_CUT
        bath = np.zeros((n, int(entangled.sum())))
        bath[env_idx, :] = u[:, entangled]
        env_occ = np.zeros((n, int(occupied.sum())))
        env_occ[env_idx, :] = u[:, occupied]
        occupations = w[entangled]
    else:
        bath = np.zeros((n, 0))
        env_occ = np.zeros((n, 0))
        occupations = np.array([])

    basis = np.column_stack(basis_cols + [bath]) if bath.size else np.array(basis_cols).T
    n_elec_emb = 2 * mf.n_occ - 2 * env_occ.shape[1]
    return EmbeddingBasis(
        basis=basis,
        n_elec=n_elec_emb,
        env_occ=env_occ,
        entangled_occupations=occupations,
        n_frag_orbitals=len(frag_idx),
    )


@dataclass
class EmbeddingHamiltonian:
    """Projected fragment Hamiltonian over n_emb = 2 N_A (or fewer) orbitals.

    ``h`` carries the frozen-environment mean field folded into the one-body
    term; ``h_bare`` and ``f_env`` keep the bare projection and the folded
    potential separately for energy assembly. ``e_core`` is the energy of the
    frozen environment determinant plus nuclear repulsion, chosen so that the
    HF determinant evaluated inside the embedding space reproduces E_HF.
    """

    n_emb: int
    h: np.ndarray
    h_bare: np.ndarray
    f_env: np.ndarray
    v: np.ndarray
    e_core: float
    e_nuc: float
    basis: np.ndarray
    n_elec: int
    n_frag_orbitals: int


def project_embedding_hamiltonian(
    ints: IntegralSet, emb: EmbeddingBasis
) -> EmbeddingHamiltonian:
    """Rotate the molecular Hamiltonian into fragment + bath orbitals.

    The two-electron tensor is rotated on all four indices; the frozen
    environment density P_env = 2 C_env C_env^T contributes the mean-field
    potential J(P_env) - K(P_env)/2 to the one-body term and its own energy
    to ``e_core``.
    """
    t = emb.basis
    gram = t.T @ t
    if not np.allclose(gram, np.eye(t.shape[1]), atol=1e-10):
        raise ValueError("embedding basis columns are not orthonormal")

    p_env = 2.0 * emb.env_occ @ emb.env_occ.T
    j_env = np.einsum("pqrs,rs->pq", ints.v, p_env)
    k_env = np.einsum("prqs,rs->pq", ints.v, p_env)
    f_env = j_env - 0.5 * k_env

    h_bare = t.T @ ints.h @ t
    f_env_emb = t.T @ f_env @ t
    v_emb = np.einsum("pi,pqrs->iqrs", t, ints.v)
    v_emb = np.einsum("qj,iqrs->ijrs", t, v_emb)
    v_emb = np.einsum("rk,ijrs->ijks", t, v_emb)
    v_emb = np.einsum("sl,ijks->ijkl", t, v_emb)

    e_core = float(np.sum(p_env * ints.h) + 0.5 * np.sum(p_env * f_env) + ints.e_nuc)
    return EmbeddingHamiltonian(
        n_emb=t.shape[1],
        h=h_bare + f_env_emb,
        h_bare=h_bare,
        f_env=f_env_emb,
        v=v_emb,
        e_core=e_core,
        e_nuc=ints.e_nuc,
        basis=t,
        n_elec=emb.n_elec,
        n_frag_orbitals=emb.n_frag_orbitals,
    )


def embedding_from_integrals(ints: IntegralSet, n_elec: int) -> EmbeddingHamiltonian:
    """Wrap a whole molecule as a trivial embedding (identity basis, no bath)."""
    n = ints.n
    return EmbeddingHamiltonian(
        n_emb=n,
        h=ints.h.copy(),
        h_bare=ints.h.copy(),
        f_env=np.zeros((n, n)),
        v=ints.v.copy(),
        e_core=ints.e_nuc,
        e_nuc=ints.e_nuc,
        basis=np.eye(n),
        n_elec=n_elec,
        n_frag_orbitals=n,
    )
