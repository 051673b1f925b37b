"""Certified reduced-basis toolkit for affinely parametrized coercive
elliptic problems: full-order truth models, POD and greedy compression,
truth-dimension-free online solves, and rigorous a-posteriori error
certification."""

from .assembly import (assemble_inner_product, assemble_thermal_block_operators,
                       build_dofmap, build_mesh)
from .certify import (Certificate, EffectivityReport, ResidualData,
                      StabilityBounds, certificate, effectivities,
                      residual_dual_norm, riesz_extend, riesz_offline,
                      stability_bounds)
from .errors import (ArchiveError, ConfigurationError, NumericalError,
                     RomkitError, ThetaEvalError, ThetaSyntaxError)
from .greedy import GreedyHistory, greedy_build, orthonormalize
from .persistence import load_model, read_payload, save_model, write_payload
from .pod import (PodSpectrum, ReducedBasis, SnapshotSet, collect_snapshots,
                  correlation_matrix, pod_basis, pod_spectrum,
                  project_onto_basis)
from .problem import (AffineProblem, ParameterDomain, eval_thetas,
                      load_external, make_thermal_block, sample_parameters)
from .reduced import (RBSolution, ReducedModel, extend_projection, lift,
                      project, rb_solve)
from .thetas import ThetaExpression, parse_theta
from .truth import (StabilityConstants, TruthSolution, assemble_at, mu_norm,
                    solve_fom, stability_constants, v_norm)

__version__ = "0.1.0"
