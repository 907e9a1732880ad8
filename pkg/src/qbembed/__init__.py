"""Desk-scale quantum bootstrap embedding for hydrogen-chain electronic structure."""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    DegenerateGapError,
    FcidumpParseError,
    LinearDependenceError,
    QbembedError,
    ResourceLimitError,
    UnsupportedElementError,
)
from .integrals import (
    AOIntegrals,
    IntegralSet,
    Molecule,
    build_h_chain,
    fcidump_read,
    fcidump_write,
    lowdin_orthogonalize,
    sto3g_integrals,
)
from .scf import MeanFieldSolution, restricted_hartree_fock
from .fragment import (
    EmbeddingBasis,
    EmbeddingHamiltonian,
    Fragment,
    embedding_from_integrals,
    fragment_chain,
    project_embedding_hamiltonian,
    schmidt_bath,
)
from .qubits import (
    OneRDM,
    PauliOperator,
    QubitRDM,
    SectorSpace,
    Statevector,
    fermionic_1rdm,
    ground_state,
    jordan_wigner,
    pauli_basis,
    qubit_rdm,
)
from .matching import (
    OverlapEstimate,
    adaptive_shots,
    amplitude_estimate_bs,
    linear_constraints,
    nsamp_swap,
    nsamp_swap_ae,
    nsamp_tomography,
    quad_constraint_exact,
    quad_constraint_sampled,
    sample_overlap_swap,
    swap_probability,
)
from .optimizer import (
    BEState,
    EnergyReport,
    FragmentProblem,
    MinimizeOptions,
    ShotPolicy,
    VbePotential,
    apply_vbe,
    build_fragment_problems,
    cost_function,
    delta_rho,
    exact_penalty_gradient,
    minimize_fragment,
    qbe_linear,
    qbe_quadratic,
    total_energy,
)
