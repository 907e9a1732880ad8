"""Hydrogen-chain molecular integrals from closed-form s-Gaussian formulas.

Everything here works in Hartree atomic units (lengths in Bohr, energies in
Hartree). Each hydrogen atom carries a single contracted STO-3G 1s function,
so only s-type Gaussian integrals are needed and all of them have closed
forms in terms of the Boys function

    F0(t) = (sqrt(pi)/2) erf(sqrt(t)) / sqrt(t),   F0(0) = 1.

Two-electron integrals are stored in chemist notation, (mu nu | lambda sigma),
as dense N^4 arrays; the chains considered here never exceed N = 16 orbitals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .errors import FcidumpParseError, LinearDependenceError, UnsupportedElementError

# Published STO-3G contraction for hydrogen (1s, zeta = 1.24).
STO3G_H_EXPONENTS = np.array([3.42525091, 0.62391373, 0.16885540])
STO3G_H_COEFFS = np.array([0.15432897, 0.53532814, 0.44463454])

_SYMMETRY_TOL = 1e-12


@dataclass(frozen=True)
class Molecule:
    """A molecular geometry: element tags plus positions in Bohr."""

    atoms: tuple  # ((element, np.ndarray(3)), ...)
    charge: int = 0
    multiplicity: int = 1

    @property
    def n_atoms(self) -> int:
        return len(self.atoms)

    @property
    def positions(self) -> np.ndarray:
        return np.array([pos for _, pos in self.atoms], dtype=float)

    def translated(self, shift) -> "Molecule":
        shift = np.asarray(shift, dtype=float)
        moved = tuple((el, pos + shift) for el, pos in self.atoms)
        return Molecule(moved, self.charge, self.multiplicity)


@dataclass
class AOIntegrals:
    """Raw atomic-orbital integrals: overlap, kinetic, nuclear attraction, ERI."""

    s: np.ndarray
    t: np.ndarray
    vne: np.ndarray
    eri: np.ndarray
    e_nuc: float

    @property
    def n(self) -> int:
        return self.s.shape[0]


@dataclass
class IntegralSet:
    """One- and two-electron integrals in an orthonormal local-orbital basis.

    ``h`` is the core Hamiltonian (kinetic + nuclear attraction), ``v`` the
    chemist-notation ERI tensor, both symmetric to 1e-12.
    """

    n: int
    h: np.ndarray
    v: np.ndarray
    e_nuc: float

    def validate(self) -> None:
        if not np.allclose(self.h, self.h.T, atol=_SYMMETRY_TOL):
            raise ValueError("one-electron matrix is not symmetric")
        check_eri_symmetry(self.v, _SYMMETRY_TOL)


def check_eri_symmetry(v: np.ndarray, tol: float = _SYMMETRY_TOL) -> None:
    """Verify the 8-fold permutational symmetry of a chemist-notation ERI tensor."""
    for perm in ((1, 0, 2, 3), (0, 1, 3, 2), (2, 3, 0, 1)):
        if not np.allclose(v, v.transpose(perm), atol=tol):
            raise ValueError(f"ERI tensor violates permutation symmetry {perm}")


def build_h_chain(n: int, spacing: float) -> Molecule:
    """Place ``n`` hydrogen atoms on the x-axis at 0, spacing, 2*spacing, ...

    ``spacing`` is the adjacent-atom distance in Bohr.
    """
    if n < 1:
        raise ValueError("chain needs at least one atom")
    if spacing <= 0:
        raise ValueError("spacing must be positive")
    atoms = tuple(("H", np.array([i * spacing, 0.0, 0.0])) for i in range(n))
    return Molecule(atoms)


def boys_f0(t):
    """Boys function F0(t), elementwise, with a Taylor branch for small t.

    F0(t) = (sqrt(pi)/2) erf(sqrt(t)) / sqrt(t); for t < 1e-8 the two-term
    Taylor expansion 1 - t/3 is exact to ~1e-17.
    """
    t = np.asarray(t, dtype=float)
    small = t < 1e-8
    safe_t = np.where(small, 1.0, t)
    root = np.sqrt(safe_t)
    with np.errstate(invalid="ignore"):
        value = 0.5 * np.sqrt(np.pi) * erf(root) / root
    return np.where(small, 1.0 - t / 3.0, value)


def nuclear_repulsion(mol: Molecule) -> float:
    """Sum of Z_i Z_j / r_ij over atom pairs (all Z = 1 for hydrogen)."""
    pos = mol.positions
    e = 0.0
    for i in range(len(pos)):
        for j in range(i + 1, len(pos)):
            e += 1.0 / np.linalg.norm(pos[i] - pos[j])
    return e


class _ContractedS:
    """A normalized contracted s-function: exponents plus effective coefficients.

    The effective coefficient of primitive i is c_i * (2 a_i / pi)^(3/4) * n_c,
    where n_c renormalizes the contraction so <chi|chi> = 1.
    """

    def __init__(self, exponents, coeffs, center):
        self.alpha = np.asarray(exponents, dtype=float)
        self.center = np.asarray(center, dtype=float)
        prim_norm = (2.0 * self.alpha / np.pi) ** 0.75
        d = np.asarray(coeffs, dtype=float) * prim_norm
        # self-overlap of the raw contraction
        a = self.alpha[:, None]
        b = self.alpha[None, :]
        s_prim = (np.pi / (a + b)) ** 1.5
        norm2 = d @ s_prim @ d
        self.d = d / np.sqrt(norm2)


def _pair_tables(bra: _ContractedS, ket: _ContractedS):
    """Gaussian product quantities for every primitive pair of two shells."""
    a = bra.alpha[:, None]
    b = ket.alpha[None, :]
    p = a + b
    mu = a * b / p
    rab2 = float(np.dot(bra.center - ket.center, bra.center - ket.center))
    kab = np.exp(-mu * rab2)
    # product center, shape (na, nb, 3)
    centers = (a[..., None] * bra.center + b[..., None] * ket.center) / p[..., None]
    dd = bra.d[:, None] * ket.d[None, :]
    return p, mu, rab2, kab, centers, dd


def sto3g_integrals(mol: Molecule) -> AOIntegrals:
    """STO-3G overlap, kinetic, nuclear-attraction and ERI tensors for an H-only molecule."""
    for el, _ in mol.atoms:
        if el.upper() != "H":
            raise UnsupportedElementError(f"only hydrogen is supported, got {el!r}")

    shells = [
        _ContractedS(STO3G_H_EXPONENTS, STO3G_H_COEFFS, pos) for _, pos in mol.atoms
    ]
    n = len(shells)
    s = np.zeros((n, n))
    t = np.zeros((n, n))
    vne = np.zeros((n, n))
    charges = [(1.0, pos) for _, pos in mol.atoms]

    pair_cache = {}
    for i in range(n):
        for j in range(i, n):
            p, mu, rab2, kab, centers, dd = _pair_tables(shells[i], shells[j])
            pair_cache[(i, j)] = (p, kab, centers, dd)
            gauss = (np.pi / p) ** 1.5 * kab
            s[i, j] = s[j, i] = np.sum(dd * gauss)
            t[i, j] = t[j, i] = np.sum(dd * mu * (3.0 - 2.0 * mu * rab2) * gauss)
            v = 0.0
            for z, rc in charges:
                pc2 = np.sum((centers - rc) ** 2, axis=-1)
                v -= z * np.sum(dd * (2.0 * np.pi / p) * kab * boys_f0(p * pc2))
            vne[i, j] = vne[j, i] = v

    eri = np.zeros((n, n, n, n))
    pair_keys = [(i, j) for i in range(n) for j in range(i, n)]
    for idx, (i, j) in enumerate(pair_keys):
        p, kab, pc, dab = pair_cache[(i, j)]
        for k, l in pair_keys[idx:]:
            q, kcd, qc, dcd = pair_cache[(k, l)]
            pp = p[:, :, None, None]
            qq = q[None, None, :, :]
            diff = pc[:, :, None, None, :] - qc[None, None, :, :, :]
            pq2 = np.sum(diff**2, axis=-1)
            pref = 2.0 * np.pi**2.5 / (pp * qq * np.sqrt(pp + qq))
            kk = kab[:, :, None, None] * kcd[None, None, :, :]
            weights = dab[:, :, None, None] * dcd[None, None, :, :]
            val = np.sum(weights * pref * kk * boys_f0(pp * qq / (pp + qq) * pq2))
            for a, b in ((i, j), (j, i)):
                for c, d in ((k, l), (l, k)):
                    eri[a, b, c, d] = eri[c, d, a, b] = val

    return AOIntegrals(s=s, t=t, vne=vne, eri=eri, e_nuc=nuclear_repulsion(mol))


def lowdin_orthogonalize(ao: AOIntegrals) -> IntegralSet:
    """Transform AO integrals to Lowdin-orthogonalized local orbitals.

    Uses the symmetric inverse square root X = S^(-1/2); the transformed
    overlap X S X is the identity. Raises ``LinearDependenceError`` when the
    smallest eigenvalue of S drops below 1e-10.
    """
    w, u = np.linalg.eigh(ao.s)
    if w.min() < 1e-10:
        raise LinearDependenceError(
            f"overlap matrix nearly singular: min eigenvalue {w.min():.3e}"
        )
    x = (u / np.sqrt(w)) @ u.T
    h = x @ (ao.t + ao.vne) @ x
    v = np.einsum("pi,pqrs->iqrs", x, ao.eri)
    v = np.einsum("qj,iqrs->ijrs", x, v)
    v = np.einsum("rk,ijrs->ijks", x, v)
    v = np.einsum("sl,ijks->ijkl", x, v)
    h = 0.5 * (h + h.T)
    return IntegralSet(n=ao.n, h=h, v=v, e_nuc=ao.e_nuc)


# ---------------------------------------------------------------------------
# FCIDUMP interchange format
# ---------------------------------------------------------------------------


def fcidump_write(ints: IntegralSet, n_elec: int, ms2: int, path) -> None:
    """Write an IntegralSet in the standard FCIDUMP text format.

    Conventions: 1-based orbital indices, chemist-notation values reduced to
    the 8-fold-unique list, one-electron block tagged ``i j 0 0``, core energy
    tagged ``0 0 0 0``. Values carry 17 significant digits so float64 content
    round-trips exactly.
    """
    n = ints.n
    lines = [f"&FCI NORB={n},NELEC={n_elec},MS2={ms2},"]
    lines.append(" ORBSYM=" + "1," * n)
    lines.append(" ISYM=1,")
    lines.append("&END")

    def fmt(value, i, j, k, l):
        return f"{value: .16E} {i:4d} {j:4d} {k:4d} {l:4d}"

    pairs = [(i, j) for i in range(n) for j in range(i + 1)]
    for a, (i, j) in enumerate(pairs):
        for k, l in pairs[: a + 1]:
            val = ints.v[i, j, k, l]
            if val != 0.0:
                lines.append(fmt(val, i + 1, j + 1, k + 1, l + 1))
    for i in range(n):
        for j in range(i + 1):
            if ints.h[i, j] != 0.0:
                lines.append(fmt(ints.h[i, j], i + 1, j + 1, 0, 0))
    lines.append(fmt(ints.e_nuc, 0, 0, 0, 0))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_header(lines):
    """Extract NORB/NELEC/MS2 from the namelist header; returns (values, body_start)."""
    header = []
    end = None
    for ln, raw in enumerate(lines):
        header.append(raw)
        stripped = raw.strip().upper()
        if stripped.endswith("&END") or stripped.endswith("/"):
            end = ln
            break
    if end is None:
        raise FcidumpParseError("header terminator (&END or /) not found", line_number=len(lines))
    blob = " ".join(header)
    blob = blob.replace("&FCI", " ").replace("&END", " ").replace("/", " ")
    values = {}
    for item in blob.replace(",", " ").split():
        if "=" in item:
            key, _, val = item.partition("=")
            key = key.strip().upper()
            if key in ("NORB", "NELEC", "MS2"):
                try:
                    values[key] = int(val)
                except ValueError as exc:
                    raise FcidumpParseError(f"bad header value {item!r}", line_number=1) from exc
    for key in ("NORB", "NELEC", "MS2"):
        if key not in values:
            raise FcidumpParseError(f"header is missing {key}", line_number=1)
    return values, end + 1


def fcidump_read(path):
    """Read an FCIDUMP file; returns (IntegralSet, n_elec, ms2).

    Raises ``FcidumpParseError`` (with the 1-based line number) on malformed
    headers, out-of-range indices, or non-numeric tokens.
    """
    with open(path) as fh:
        lines = fh.read().splitlines()
    header, body_start = _parse_header(lines)
    n = header["NORB"]
    if n < 1:
        raise FcidumpParseError("NORB must be positive", line_number=1)
    h = np.zeros((n, n))
    v = np.zeros((n, n, n, n))
    e_nuc = 0.0
    for ln in range(body_start, len(lines)):
        raw = lines[ln].strip()
        if not raw:
            continue
        tokens = raw.split()
        if len(tokens) != 5:
            raise FcidumpParseError(
                f"expected 'value i j k l', got {len(tokens)} tokens", line_number=ln + 1
            )
        try:
            val = float(tokens[0].replace("D", "E").replace("d", "e"))
            i, j, k, l = (int(t) for t in tokens[1:])
        except ValueError as exc:
            raise FcidumpParseError(f"non-numeric token in {raw!r}", line_number=ln + 1) from exc
        if not all(0 <= idx <= n for idx in (i, j, k, l)):
            raise FcidumpParseError(
                f"orbital index out of range 1..{n} in {raw!r}", line_number=ln + 1
            )
        if i == j == k == l == 0:
            e_nuc = val
        elif k == 0 and l == 0:
            if i == 0 or j == 0:
                raise FcidumpParseError(f"bad one-electron indices in {raw!r}", line_number=ln + 1)
            h[i - 1, j - 1] = h[j - 1, i - 1] = val
        elif 0 in (i, j, k, l):
            raise FcidumpParseError(f"bad two-electron indices in {raw!r}", line_number=ln + 1)
        else:
            a, b, c, d = i - 1, j - 1, k - 1, l - 1
            for p, q in ((a, b), (b, a)):
                for r, s in ((c, d), (d, c)):
                    v[p, q, r, s] = v[r, s, p, q] = val
    return IntegralSet(n=n, h=h, v=v, e_nuc=e_nuc), header["NELEC"], header["MS2"]
