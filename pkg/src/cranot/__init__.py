"""Load-balancing device-to-station association for C-RAN cells.

Core pieces: an entropic-regularised transport solver (``ot_core``), an
exact transportation-LP oracle (``exact_oracle``), the radio and queueing
model (``cran_model``), association policies including the adaptive
marginal-learning loop (``policies``), seeded scenario generation and file
I/O (``scenario``), and a CLI (``cli``).
"""

from .cran_model import (
    Device,
    InfeasibleLoadError,
    LoadVector,
    RRH,
    RadioEnvironment,
    Scenario,
    avg_completion_time,
    avg_jobs,
    load,
    rate_matrix,
    sinr,
)
from .exact_oracle import ExactSolution, SizeCapError, build_flow_network, exact_ot
from .ot_core import (
    MassMismatchError,
    SinkhornConfig,
    SinkhornResult,
    SolveReport,
    entropy,
    gibbs_kernel,
    kl_divergence,
    marginal_residual,
    round_to_feasible,
    sinkhorn,
    transport_cost,
)
from .policies import (
    AdaptiveConfig,
    AdaptiveInfeasibleError,
    AdaptiveResult,
    CostMode,
    MarginalMode,
    adaptive_sinkhorn,
    max_sinr_association,
    ot_association,
    ot_cost_matrix,
    rrh_traffic,
)
from .scenario import (
    GeneratorSpec,
    HotspotSpec,
    ScenarioFormatError,
    ScenarioVersionError,
    generate,
    load_scenario,
    save_scenario,
    scenario_digest,
)

__version__ = "0.1.0"
