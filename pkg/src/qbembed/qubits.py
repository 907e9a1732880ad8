"""Jordan-Wigner qubit representation, exact ground states, and reduced density matrices.

Conventions used throughout:

* spin-orbital index = 2 * (spatial index) + spin, with spin 0 = alpha;
* qubit q holds the occupation of spin-orbital q, basis state index
  b = sum_q n_q 2^q (qubit 0 is the least significant bit);
* Jordan-Wigner ladder operator a_q = Z_0 ... Z_{q-1} (X_q + i Y_q)/2, which
  reproduces the fermionic sign (-1)^(number of occupied modes below q);
* Pauli strings are written with character t acting on qubit t, and the
  nontrivial strings are normalized so Tr[S_a S_b] = 2^m delta_ab.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .errors import ResourceLimitError
from .fragment import EmbeddingHamiltonian

MAX_JW_QUBITS = 16
_TOL = 1e-12

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}

# single-qubit products (a, b) -> (phase, a*b)
_PRODUCT = {
    ("I", "I"): (1, "I"), ("I", "X"): (1, "X"), ("I", "Y"): (1, "Y"), ("I", "Z"): (1, "Z"),
    ("X", "I"): (1, "X"), ("Y", "I"): (1, "Y"), ("Z", "I"): (1, "Z"),
    ("X", "X"): (1, "I"), ("Y", "Y"): (1, "I"), ("Z", "Z"): (1, "I"),
    ("X", "Y"): (1j, "Z"), ("Y", "X"): (-1j, "Z"),
    ("Y", "Z"): (1j, "X"), ("Z", "Y"): (-1j, "X"),
    ("Z", "X"): (1j, "Y"), ("X", "Z"): (-1j, "Y"),
}


class PauliOperator:
    """A linear combination of Pauli strings on a fixed qubit register."""

    def __init__(self, n_qubits: int, terms=None, tol: float = _TOL):
        self.n_qubits = n_qubits
        self.tol = tol
        self.terms = {}
        if terms:
            for string, coef in terms.items():
                if len(string) != n_qubits:
                    raise ValueError("pauli string length does not match register")
                if abs(coef) > tol:
                    self.terms[string] = self.terms.get(string, 0.0) + coef
            self._prune()

    def _prune(self):
        self.terms = {s: c for s, c in self.terms.items() if abs(c) > self.tol}

    @classmethod
    def identity(cls, n_qubits: int, coef=1.0) -> "PauliOperator":
        return cls(n_qubits, {"I" * n_qubits: coef})

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def copy(self) -> "PauliOperator":
        out = PauliOperator(self.n_qubits)
        out.terms = dict(self.terms)
        return out

    def __add__(self, other: "PauliOperator") -> "PauliOperator":
        if self.n_qubits != other.n_qubits:
            raise ValueError("register size mismatch")
        out = self.copy()
        for s, c in other.terms.items():
            out.terms[s] = out.terms.get(s, 0.0) + c
        out._prune()
        return out

    def __sub__(self, other: "PauliOperator") -> "PauliOperator":
        return self + (-1.0) * other

    def __rmul__(self, scalar) -> "PauliOperator":
        out = PauliOperator(self.n_qubits)
        out.terms = {s: scalar * c for s, c in self.terms.items()}
        out._prune()
        return out

    def __mul__(self, other):
        if not isinstance(other, PauliOperator):
            return self.__rmul__(other)
        if self.n_qubits != other.n_qubits:
            raise ValueError("register size mismatch")
        out = PauliOperator(self.n_qubits)
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                phase = 1.0 + 0.0j
                chars = []
                for a, b in zip(s1, s2):
                    ph, ch = _PRODUCT[(a, b)]
                    phase *= ph
                    chars.append(ch)
                key = "".join(chars)
                out.terms[key] = out.terms.get(key, 0.0) + phase * c1 * c2
        out._prune()
        return out

    def adjoint(self) -> "PauliOperator":
        out = PauliOperator(self.n_qubits)
        out.terms = {s: np.conj(c) for s, c in self.terms.items()}
        return out

    def is_hermitian(self, tol: float = 1e-10) -> bool:
        return all(abs(c.imag if isinstance(c, complex) else 0.0) < tol for c in self.terms.values())

    def _term_action(self, string: str):
        """Masks and phase data for applying one string to basis states.

        P |b> = i^(#Y) * (-1)^popcount(b & zy_mask) |b XOR x_mask>.
        """
        x_mask = 0
        zy_mask = 0
        n_y = 0
        for q, ch in enumerate(string):
            bit = 1 << q
            if ch in ("X", "Y"):
                x_mask |= bit
            if ch in ("Z", "Y"):
                zy_mask |= bit
            if ch == "Y":
                n_y += 1
        return x_mask, zy_mask, (1j) ** n_y

    def apply(self, amps: np.ndarray) -> np.ndarray:
        """Matrix-vector product without building the dense matrix."""
        dim = 1 << self.n_qubits
        if amps.shape[0] != dim:
            raise ValueError("state dimension mismatch")
        idx = np.arange(dim, dtype=np.uint64)
        out = np.zeros(dim, dtype=complex)
        for string, coef in self.terms.items():
            x_mask, zy_mask, y_phase = self._term_action(string)
            signs = 1.0 - 2.0 * (
                np.bitwise_count(idx & np.uint64(zy_mask)).astype(np.int64) & 1
            )
            out[idx ^ np.uint64(x_mask)] += coef * y_phase * signs * amps
        return out

    def expectation(self, amps: np.ndarray) -> complex:
        return complex(np.vdot(amps, self.apply(amps)))

    def to_matrix(self) -> np.ndarray:
        """Dense matrix; guarded to small registers."""
        if self.n_qubits > 12:
            raise ResourceLimitError("dense matrix only built for <= 12 qubits")
        dim = 1 << self.n_qubits
        mat = np.zeros((dim, dim), dtype=complex)
        for col in range(dim):
            e = np.zeros(dim, dtype=complex)
            e[col] = 1.0
            mat[:, col] = self.apply(e)
        return mat


@dataclass
class Statevector:
    """Complex amplitudes over the full qubit register, Jordan-Wigner ordered."""

    amps: np.ndarray

    def __post_init__(self):
        self.amps = np.asarray(self.amps, dtype=complex)
        dim = self.amps.shape[0]
        if dim & (dim - 1):
            raise ValueError("amplitude length must be a power of two")

    @property
    def n_qubits(self) -> int:
        return int(self.amps.shape[0]).bit_length() - 1

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


@dataclass
class QubitRDM:
    """Reduced density matrix over a subset of qubits."""

    m: int
    matrix: np.ndarray

    def validate(self, tol: float = 1e-10) -> None:
        if not np.allclose(self.matrix, self.matrix.conj().T, atol=1e-12):
            raise ValueError("RDM is not Hermitian")
        if abs(np.trace(self.matrix).real - 1.0) > 1e-12:
            raise ValueError("RDM trace differs from 1")
        if np.linalg.eigvalsh(self.matrix).min() < -tol:
            raise ValueError("RDM has a significantly negative eigenvalue")

    def purity(self) -> float:
        return float(np.trace(self.matrix @ self.matrix).real)


@dataclass
class OneRDM:
    """Spin-orbital one-electron reduced density matrix <a^dag_p a_q>."""

    p: np.ndarray

    def trace(self) -> float:
        return float(np.trace(self.p))


# ---------------------------------------------------------------------------
# Jordan-Wigner mapping
# ---------------------------------------------------------------------------


def _lowering(n_qubits: int, q: int) -> PauliOperator:
    """a_q = Z_0 ... Z_{q-1} (X_q + i Y_q)/2 as a two-term Pauli operator."""
    prefix = "Z" * q
    suffix = "I" * (n_qubits - q - 1)
    return PauliOperator(
        n_qubits,
        {prefix + "X" + suffix: 0.5, prefix + "Y" + suffix: 0.5j},
    )


def jordan_wigner(emb: EmbeddingHamiltonian) -> PauliOperator:
    """Map a projected fragment Hamiltonian to a qubit operator.

    The second-quantized form uses the env-folded one-body term ``emb.h`` and
    chemist-notation two-body tensor ``emb.v``:

        H = sum_pq h_pq a+_{p s} a_{q s}
          + 1/2 sum_pqrs (pq|rs) a+_{p s} a+_{r t} a_{s t} a_{q s'}

    summed over spins. ``e_core`` is intentionally not included.
    """
    n_so = 2 * emb.n_emb
    if n_so > MAX_JW_QUBITS:
        raise ResourceLimitError(
            f"{n_so} qubits exceeds the desk-scale limit of {MAX_JW_QUBITS}"
        )
    lower = [_lowering(n_so, q) for q in range(n_so)]
    raise_ = [op.adjoint() for op in lower]

    total = PauliOperator(n_so)
    h, v = emb.h, emb.v
    n = emb.n_emb
    for p in range(n):
        for q in range(n):
            if abs(h[p, q]) < 1e-14:
                continue
            for spin in (0, 1):
                total = total + h[p, q] * (raise_[2 * p + spin] * lower[2 * q + spin])
    for p in range(n):
        for q in range(n):
            for r in range(n):
                for s in range(n):
                    coef = 0.5 * v[p, q, r, s]
                    if abs(coef) < 1e-14:
                        continue
                    for s1 in (0, 1):
                        for s2 in (0, 1):
                            pp, qq = 2 * p + s1, 2 * q + s1
                            rr, ss = 2 * r + s2, 2 * s + s2
                            if pp == rr or qq == ss:
                                continue  # a+a+ or aa on the same mode vanishes
                            term = raise_[pp] * raise_[rr] * (lower[ss] * lower[qq])
                            total = total + coef * term
    total._prune()
    return total


# ---------------------------------------------------------------------------
# Particle-number / S_z sector machinery
# ---------------------------------------------------------------------------


class SectorSpace:
    """Occupation-number basis restricted to fixed (N, S_z).

    Spatial orbital p maps to qubits 2p (alpha) and 2p+1 (beta); S_z is given
    in units of hbar, so n_alpha - n_beta = 2 S_z.
    """

    def __init__(self, n_qubits: int, n_elec: int, sz: float = 0.0):
        if n_qubits % 2 != 0:
            raise ValueError("spin-orbital register must have even size")
        n_spatial = n_qubits // 2
        twice_sz = round(2 * sz)
        if (n_elec + twice_sz) % 2 != 0:
            raise ValueError(f"empty sector: N={n_elec}, Sz={sz}")
        n_alpha = (n_elec + twice_sz) // 2
        n_beta = n_elec - n_alpha
        if not (0 <= n_alpha <= n_spatial and 0 <= n_beta <= n_spatial):
            raise ValueError(f"empty sector: N={n_elec}, Sz={sz}")
        self.n_qubits = n_qubits
        self.n_elec = n_elec
        self.sz = sz

        alpha_states = [
            sum(1 << (2 * p) for p in occ)
            for occ in itertools.combinations(range(n_spatial), n_alpha)
        ]
        beta_states = [
            sum(1 << (2 * p + 1) for p in occ)
            for occ in itertools.combinations(range(n_spatial), n_beta)
        ]
        states = sorted(a | b for a in alpha_states for b in beta_states)
        self.states = np.array(states, dtype=np.uint64)

    @property
    def dim(self) -> int:
        return len(self.states)

    def matrix(self, op: PauliOperator, sparse: bool = False):
        """Project a Pauli operator into the sector: P_sector H P_sector.

        Strings that map sector states outside the sector contribute nothing.
        """
        dim = self.dim
        rows, cols, vals = [], [], []
        col_idx = np.arange(dim)
        for string, coef in op.terms.items():
            x_mask, zy_mask, y_phase = op._term_action(string)
            signs = 1.0 - 2.0 * (
                np.bitwise_count(self.states & np.uint64(zy_mask)).astype(np.int64) & 1
            )
            images = self.states ^ np.uint64(x_mask)
            pos = np.searchsorted(self.states, images)
            pos_c = np.clip(pos, 0, dim - 1)
            inside = self.states[pos_c] == images
            if not inside.any():
                continue
            rows.append(pos_c[inside])
            cols.append(col_idx[inside])
            vals.append(coef * y_phase * signs[inside])
        if not rows:
            shape = (dim, dim)
            return scipy.sparse.csr_matrix(shape, dtype=complex) if sparse else np.zeros(shape, dtype=complex)
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        mat = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(dim, dim), dtype=complex)
        return mat.tocsr() if sparse else mat.toarray()

    def embed(self, vec: np.ndarray) -> np.ndarray:
        """Lift a sector vector into the full 2^n amplitude array."""
        amps = np.zeros(1 << self.n_qubits, dtype=complex)
        amps[self.states.astype(np.int64)] = vec
        return amps


def _fix_phase(amps: np.ndarray) -> np.ndarray:
    """Make the first non-negligible amplitude real positive (deterministic gauge)."""
    for a in amps:
        if abs(a) > 1e-12:
            return amps * (np.conj(a) / abs(a))
    return amps


DENSE_SECTOR_LIMIT = 4096


def ground_state(op, n_elec: int, sz: float = 0.0, residual_tol: float = 1e-9):
    """Lowest eigenpair of a Hamiltonian within a particle-number / S_z sector.

    Accepts either an ``EmbeddingHamiltonian`` (mapped through Jordan-Wigner;
    ``e_core`` is not added) or a ``PauliOperator``. Dense diagonalization is
    used up to sector dimension 4096, a Lanczos solver above.

    Returns ``(energy, Statevector)`` with the state embedded in the full
    2^n register.
    """
    if isinstance(op, EmbeddingHamiltonian):
        op = jordan_wigner(op)
    space = SectorSpace(op.n_qubits, n_elec, sz)
    if space.dim == 0:
        raise ValueError("requested sector is empty")

    if space.dim <= DENSE_SECTOR_LIMIT:
        h = space.matrix(op)
        h = 0.5 * (h + h.conj().T)
        evals, evecs = np.linalg.eigh(h)
        energy, vec = float(evals[0]), evecs[:, 0]
    else:
        h = space.matrix(op, sparse=True)
        h = 0.5 * (h + h.conj().T)
        evals, evecs = scipy.sparse.linalg.eigsh(h, k=1, which="SA", tol=1e-12)
        energy, vec = float(evals[0]), evecs[:, 0]

    residual = np.linalg.norm(h @ vec - energy * vec)
    if residual > residual_tol:
        raise ArithmeticError(f"eigenpair residual {residual:.2e} above {residual_tol}")
    amps = _fix_phase(space.embed(vec))
    return energy, Statevector(amps)


# ---------------------------------------------------------------------------
# Reduced density matrices
# ---------------------------------------------------------------------------


def qubit_rdm(psi: Statevector, region) -> QubitRDM:
    """Partial trace onto ``region``; bit t of the RDM index is qubit region[t]."""
    region = list(region)
    n = psi.n_qubits
    if len(set(region)) != len(region):
        raise ValueError("region indices must be distinct")
    if any(q < 0 or q >= n for q in region):
        raise ValueError("region index out of range")
    m = len(region)
    tensor = psi.amps.reshape([2] * n)  # axis a holds qubit n-1-a
    src = [n - 1 - q for q in reversed(region)]
    tensor = np.moveaxis(tensor, src, range(m))
    mat = tensor.reshape(1 << m, -1)
    rho = mat @ mat.conj().T
    return QubitRDM(m=m, matrix=rho)


def pauli_basis(m: int) -> list:
    """All 4^m - 1 nontrivial Pauli strings on m qubits, identity excluded.

    Together with the identity these satisfy Tr[S_a S_b] = 2^m delta_ab.
    Character t of each string acts on region bit t.
    """
    strings = ["".join(chars) for chars in itertools.product("IXYZ", repeat=m)]
    return [s for s in strings if s != "I" * m]


def pauli_string_matrix(string: str) -> np.ndarray:
    """Dense matrix of a Pauli string, bit t of the index = character t."""
    mat = np.array([[1.0 + 0.0j]])
    for ch in string:
        mat = np.kron(PAULI_MATRICES[ch], mat)
    return mat


def rdm_pauli_expansion(rho: QubitRDM) -> np.ndarray:
    """Expectation values <S_a> ordered as ``pauli_basis(m)``."""
    return np.array(
        [np.trace(rho.matrix @ pauli_string_matrix(s)).real for s in pauli_basis(rho.m)]
    )


# ---------------------------------------------------------------------------
# Fermionic reduced density matrices
# ---------------------------------------------------------------------------


def _apply_annihilation(amps: np.ndarray, q: int) -> np.ndarray:
    """a_q acting on an amplitude array, with the Jordan-Wigner parity sign."""
    dim = amps.shape[0]
    idx = np.arange(dim, dtype=np.uint64)
    occupied = (idx >> np.uint64(q)) & np.uint64(1) == 1
    src = idx[occupied]
    dst = src ^ np.uint64(1 << q)
    parity = np.bitwise_count(src & np.uint64((1 << q) - 1)).astype(np.int64) & 1
    out = np.zeros(dim, dtype=complex)
    out[dst] = (1.0 - 2.0 * parity) * amps[src]
    return out


def fermionic_1rdm(psi: Statevector) -> OneRDM:
    """P_pq = <a^dag_p a_q> over all spin orbitals, computed as a Gram matrix."""
    n_so = psi.n_qubits
    lowered = np.array([_apply_annihilation(psi.amps, q) for q in range(n_so)])
    p = lowered.conj() @ lowered.T
    if np.abs(p.imag).max() > 1e-10:
        raise ArithmeticError("1-RDM has unexpected imaginary part")
    return OneRDM(p=p.real.copy())


def fermionic_2rdm_chemist(psi: Statevector, n_spatial: int) -> np.ndarray:
    """Spatial 2-RDM in chemist index order.

    Gamma_pqrs = sum_{s,t} <a+_{p s} a+_{r t} a_{s t} a_{q s}> pairs with the
    chemist ERI so that E_2 = 1/2 sum_pqrs (pq|rs) Gamma_pqrs.
    """
    n_so = psi.n_qubits
    if n_so != 2 * n_spatial:
        raise ValueError("spatial orbital count does not match register")
    singles = [_apply_annihilation(psi.amps, q) for q in range(n_so)]
    pairs = np.array([[_apply_annihilation(singles[y], x) for y in range(n_so)] for x in range(n_so)])
    flat = pairs.reshape(n_so * n_so, -1)
    gram = flat.conj() @ flat.T  # gram[(x,y),(u,w)] = <a_x a_y psi | a_u a_w psi>
    gram = gram.reshape(n_so, n_so, n_so, n_so)

    gamma = np.zeros((n_spatial,) * 4)
    for p in range(n_spatial):
        for q in range(n_spatial):
            for r in range(n_spatial):
                for s in range(n_spatial):
                    total = 0.0
                    for s1 in (0, 1):
                        for s2 in (0, 1):
                            # <a+_P a+_R a_S a_Q> = gram[(R,P),(S,Q)]
                            total += gram[
                                2 * r + s2, 2 * p + s1, 2 * s + s2, 2 * q + s1
                            ].real
                    gamma[p, q, r, s] = total
    return gamma


def number_expectations(psi: Statevector) -> np.ndarray:
    """<n_q> for every qubit (spin orbital)."""
    probs = np.abs(psi.amps) ** 2
    idx = np.arange(probs.shape[0], dtype=np.uint64)
    return np.array(
        [probs[((idx >> np.uint64(q)) & np.uint64(1)) == 1].sum() for q in range(psi.n_qubits)]
    )
