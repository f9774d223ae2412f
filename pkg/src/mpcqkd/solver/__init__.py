from .milp import MilpSolution, MilpStatus, Mode, SolverConfig, solve_milp
from .model import BINARY, CONTINUOUS, EQ, GE, INTEGER, LE, Program, ProgramBuilder
from .simplex import LpSolution, LpStatus, solve_lp
from .verify import Violation, verify_solution

__all__ = [
    "BINARY", "CONTINUOUS", "EQ", "GE", "INTEGER", "LE",
    "LpSolution", "LpStatus", "MilpSolution", "MilpStatus", "Mode", "Program",
    "ProgramBuilder", "SolverConfig", "Violation", "solve_lp", "solve_milp",
    "verify_solution",
]
