"""Online learning against distribution families on finite atomic spaces."""

from .errors import (
    CapacityError,
    GensmoothError,
    InputError,
    InstanceError,
    MalformedInstanceError,
    MaskRangeError,
    NormalizationError,
)
from .measure import (
    Distribution,
    DistributionFamily,
    FiniteSpace,
    HypothesisFamily,
    build_uniform_cover,
    envelope_mass,
    littlestone_dimension,
    max_packing,
    threshold_family,
    vc_dimension,
)
from .smoothness import (
    ToleranceProfile,
    construct_certificate,
    construct_scaled_base,
    fragmentation_number,
    tolerance_profile,
    turan_refine,
    verify_certificate,
)
from .coupling import couple_step, couple_step_capped, extract_small_set
from .learners import ERMLearner, HedgeLearner, make_erm_learner, make_hedge_cover_learner
from .adversaries import (
    IIDAdversary,
    make_fragmentation_adversary,
    make_threshold_hiding_adversary,
    run_protocol,
)
from .privacy import (
    LabeledDataset,
    MechanismSpec,
    exp_mech_learn,
    exp_mech_output_law,
    reduce_to_threshold_learner,
    verify_dp,
)
from .harness import ExperimentConfig, RegretReport, load_instance, run_experiment

__version__ = "0.1.0"
