"""Restricted Hartree-Fock in an orthonormal local-orbital basis.

Because the basis is already orthonormal (Lowdin-transformed), the Roothaan
equations reduce to plain eigenproblems of the Fock matrix

    F = h + J(P) - K(P)/2,   J_pq = sum_rs (pq|rs) P_rs,   K_pq = sum_rs (pr|qs) P_rs

with the spin-summed density P = 2 C_occ C_occ^T and total energy
E = Tr[P (h + F)] / 2 + E_nuc. Convergence is accelerated with light damping
plus DIIS extrapolation over at most 8 stored commutator residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .integrals import IntegralSet

_MAX_DIIS = 8


@dataclass
class MeanFieldSolution:
    """Converged RHF result: occupied coefficients, orbital energies, energy, density."""

    c_occ: np.ndarray
    mo_energy: np.ndarray
    e_hf: float
    p: np.ndarray

    @property
    def n_occ(self) -> int:
        return self.c_occ.shape[1]


def _fock(ints: IntegralSet, p: np.ndarray) -> np.ndarray:
    j = np.einsum("pqrs,rs->pq", ints.v, p)
    k = np.einsum("prqs,rs->pq", ints.v, p)
    return ints.h + j - 0.5 * k


def _energy(ints: IntegralSet, p: np.ndarray, f: np.ndarray) -> float:
    return 0.5 * float(np.sum(p * (ints.h + f))) + ints.e_nuc


def restricted_hartree_fock(
    ints: IntegralSet,
    n_elec: int,
    max_cycles: int = 200,
    e_tol: float = 1e-10,
    p_tol: float = 1e-8,
) -> MeanFieldSolution:
    """Solve the closed-shell SCF problem for ``n_elec`` electrons (must be even).

    Raises ``ConvergenceError`` (carrying the last energy change) if the cycle
    cap is hit before both the energy change drops below ``e_tol`` and the
    density change below ``p_tol``.
    """
    if n_elec % 2 != 0:
        raise ValueError("restricted SCF needs an even electron count")
    if n_elec > 2 * ints.n:
        raise ValueError("more electrons than 2 * orbitals")
    n_occ = n_elec // 2

    # core guess
    mo_e, c = np.linalg.eigh(ints.h)
    p = 2.0 * c[:, :n_occ] @ c[:, :n_occ].T

    e_last = 0.0
    diis_f, diis_r = [], []
    for cycle in range(max_cycles):
        f = _fock(ints, p)
        e_tot = _energy(ints, p, f)

        residual = f @ p - p @ f
        diis_f.append(f)
        diis_r.append(residual)
        if len(diis_f) > _MAX_DIIS:
            diis_f.pop(0)
            diis_r.pop(0)
        if len(diis_f) > 1:
            f = _diis_extrapolate(diis_f, diis_r)

        mo_e, c = np.linalg.eigh(f)
        p_new = 2.0 * c[:, :n_occ] @ c[:, :n_occ].T
        if cycle < 2:
            p_new = 0.7 * p_new + 0.3 * p  # damp the first steps

        de = abs(e_tot - e_last)
        dp = np.linalg.norm(p_new - p)
        p, e_last = p_new, e_tot
        if cycle > 0 and de < e_tol and dp < p_tol:
            f = _fock(ints, p)
            mo_e, c = np.linalg.eigh(f)
            c_occ = c[:, :n_occ]
            p = 2.0 * c_occ @ c_occ.T
            return MeanFieldSolution(
                c_occ=c_occ, mo_energy=mo_e, e_hf=_energy(ints, p, f), p=p
            )

    raise ConvergenceError(
        f"SCF not converged after {max_cycles} cycles (last dE = {de:.3e})",
        residual=de,
    )


def _diis_extrapolate(focks, residuals):
    """Pulay mixing: minimize the residual norm over stored Fock matrices."""
    k = len(focks)
    b = -np.ones((k + 1, k + 1))
    b[k, k] = 0.0
    for i in range(k):
        for j in range(k):
            b[i, j] = np.sum(residuals[i] * residuals[j])
    rhs = np.zeros(k + 1)
    rhs[k] = -1.0
    try:
        coeffs = np.linalg.solve(b, rhs)[:k]
    except np.linalg.LinAlgError:
        return focks[-1]
    return sum(c * f for c, f in zip(coeffs, focks))
