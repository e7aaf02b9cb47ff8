"""Robust stability certification for networks of LTI agents with uncertain links.

The package builds the exact link-structure matrices of a network, models the
agents as stable state-space systems, and checks a family of per-link
frequency-domain conditions whose joint feasibility certifies stability of
the network for every admissible link perturbation.  Independent oracles (a
direct frequency-domain check and a time-domain destabilization search)
validate the certificates.
"""

__version__ = "0.1.0"

from .errors import (
    AlgebraicLoopError,
    GraphError,
    ModelError,
    NetIqcError,
    NumericalError,
    SimulationError,
    SpecError,
)
from .graph import (
    NetworkGraph,
    StructureMatrices,
    build_graph,
    build_structure,
    link_coordinates,
    link_support,
    routing_entry,
)
from .lti import (
    AgentModel,
    FrequencyGrid,
    FrequencyResponse,
    NominalLoop,
    NominalResult,
    agent_response,
    assemble_block_diagonal,
    build_nominal_loop,
    coprime_factors,
    coprime_min_singular,
    freq_response_agent,
    nominal_stability_check,
    t_matrix,
)
from .multipliers import (
    CertificateForm,
    DiagonalSplit,
    MultiplierBlocks,
    assemble_certificate_form,
    diagonal_split,
    gain_bounded_deviation,
    global_multiplier,
    user_table,
)
from .certify import (
    CertificateReport,
    GlobalCertificate,
    LinkBlocks,
    LinkCondition,
    build_link_blocks,
    certify_network,
    global_certificate,
    link_feasibility_margin,
    margins_on_grid,
    reduced_link_check,
)
from .netspec import (
    NetworkSpec,
    Problem,
    Tolerances,
    build_problem,
    load_network_spec,
    parse_network_spec,
    write_network_spec,
)
from .oracle import (
    DirectCheckResult,
    MultiplierValidation,
    SearchResult,
    destabilization_search,
    direct_iqc_check,
    validate_multiplier,
)
from .sim import (
    ConstantLink,
    FirstOrderLink,
    SectorLink,
    SimTrace,
    UncertaintySample,
    closed_loop_matrix,
    estimate_gain,
    ideal_sample,
    simulate,
    simulate_network,
    write_trace,
)
