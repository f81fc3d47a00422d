"""Interactive index-tuning workbench.

Pipeline: parse catalog and workload, generate candidate indexes, freeze
per-statement template-plan caches, build a binary integer program, solve it
with an anytime exact solver, and explore soft-constraint trade-offs.
"""

from .catalog import Catalog, IndexCandidate, load_catalog, make_candidate
from .queryparse import Workload, parse_workload
from .candgen import CandidateSet, generate_candidates
from .advisor import Session, create_session, recommend, apply_delta, whatif_report
from .solver import SolverOptions, Solution, SolveStatus, solve, check_feasibility
from .errors import AdvisorError, InfeasibleProblem

__all__ = [
    "Catalog",
    "IndexCandidate",
    "load_catalog",
    "make_candidate",
    "Workload",
    "parse_workload",
    "CandidateSet",
    "generate_candidates",
    "Session",
    "create_session",
    "recommend",
    "apply_delta",
    "whatif_report",
    "SolverOptions",
    "Solution",
    "SolveStatus",
    "solve",
    "check_feasibility",
    "AdvisorError",
    "InfeasibleProblem",
]

__version__ = "0.1.0"
