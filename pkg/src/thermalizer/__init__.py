"""Single-ancilla repeated-interaction thermal state preparation toolkit."""

from .channel import (
    ChannelParams,
    EigdiffGamma,
    FixedGamma,
    GaussianGamma,
    MinLResult,
    Trajectory,
    TrajectoryBatch,
    UniformWindowGamma,
    apply_channel,
    apply_fixed_interaction,
    gamma_policy_from_dict,
    iterate_channel,
    min_interactions,
    perfect_knowledge_gamma,
)
from .hamiltonians import (
    EnvQubit,
    Hamiltonian,
    SpectralProfile,
    env_qubit,
    fermi,
    gibbs_probabilities,
    gibbs_state,
    load_hamiltonian,
    make_harmonic,
    make_qubit,
    spectral_profile,
)
from .linalg import (
    RandomInteraction,
    check_density,
    dagger,
    evolve,
    partial_trace_env,
    sample_haar_unitary,
    sample_interaction,
    tensor,
    trace_distance,
)
from .planner import (
    InvalidWindowError,
    Plan,
    plan_harmonic,
    plan_perfect_knowledge,
    plan_single_qubit,
    plan_zero_knowledge,
)
from .weakcoupling import (
    ErrorBudget,
    GapResult,
    JerisonBound,
    NonErgodicError,
    ResonanceSplit,
    TransitionGenerator,
    build_T,
    build_expected_T,
    detailed_balance_residual,
    error_budget,
    fixed_point,
    i_sinc,
    jerison_steps,
    markov_evolve,
    sinc2,
    spectral_gap,
    split_resonance,
    transition_element,
)

__version__ = "0.1.0"
