"""Exact ground-state solutions wrapped as sampling oracles with call accounting.

The quantum eigensolver is modeled as an ideal post-selected ground-state
preparation: every logical preparation returns the exact sector ground state
and increments a ledger. Cached states are returned without re-solving, but a
declared preparation always counts, since on hardware the state would have to
be prepared fresh each time. One SWAP shot between two fragments counts as a
single joint preparation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .matching import as_generator
from .qubits import PauliOperator, Statevector, ground_state


@dataclass
class OracleLedger:
    """Preparation counts, broken down by purpose."""

    by_purpose: dict = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.by_purpose.values())

    def add(self, purpose: str, count: int = 1) -> None:
        if count < 0:
            raise ValueError("ledger counts never decrease")
        self.by_purpose[purpose] = self.by_purpose.get(purpose, 0) + count

    def snapshot(self) -> dict:
        return dict(self.by_purpose)


class EigensolverOracle:
    """Ground-state preparations plus energy estimation with shot models."""

    def __init__(self):
        self.ledger = OracleLedger()
        self._cache = {}

    def prepare_ground(
        self, op: PauliOperator, n_elec: int, sz: float = 0.0, purpose: str = "energy"
    ):
        """Return (energy, Statevector) for the sector ground state.

        The solve is cached per (operator, sector), but each call is one
        logical preparation and is charged to the ledger under ``purpose``.
        """
        key = (id(op), n_elec, sz) if op.n_terms > 64 else (
            tuple(sorted((s, complex(c)) for s, c in op.terms.items())), n_elec, sz
        )
        if key not in self._cache:
            self._cache[key] = ground_state(op, n_elec, sz)
        self.ledger.add(purpose, 1)
        return self._cache[key]

    def energy_expectation(
        self, op: PauliOperator, psi: Statevector, shots=None, rng=None
    ):
        """<psi|H|psi>, exact or with per-Pauli binomial sampling noise.

        Exact mode (``shots=None``) returns the expectation directly with
        zero reported variance. Sampled mode estimates each Pauli term's
        expectation from ``shots`` simulated single-term measurements and
        propagates the binomial variances.
        """
        if shots is None:
            return float(op.expectation(psi.amps).real), 0.0
        if shots < 1:
            raise ValueError("shots must be positive")
        gen = as_generator(rng)
        total = 0.0
        variance = 0.0
        for string, coef in op.terms.items():
            c = coef.real if isinstance(coef, complex) else float(coef)
            single = PauliOperator(op.n_qubits, {string: 1.0})
            exact = float(single.expectation(psi.amps).real)
            if string == "I" * op.n_qubits:
                total += c
                continue
            p_plus = min(max(0.5 * (1.0 + exact), 0.0), 1.0)
            hits = gen.binomial(shots, p_plus)
            est = 2.0 * hits / shots - 1.0
            total += c * est
            phat = hits / shots
            variance += (c * 2.0) ** 2 * phat * (1.0 - phat) / shots
        return total, float(np.sqrt(variance))
