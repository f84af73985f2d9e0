"""Self-contained conic solvers: dense QCQP and SDP interior point methods, CCCP."""

from .cccp import CccpError, CccpResult, DcProgram, cccp_solve
from .qcqp import QcqpProblem, QcqpSolution, solve_qcqp
from .randomize import MulticastConstraints, randomize_and_scale
from .sdp import SdpProblem, SdpSolution, solve_sdp

__all__ = ["CccpError", "CccpResult", "DcProgram", "cccp_solve", "QcqpProblem", "QcqpSolution",
           "solve_qcqp", "MulticastConstraints", "randomize_and_scale", "SdpProblem",
           "SdpSolution", "solve_sdp"]
