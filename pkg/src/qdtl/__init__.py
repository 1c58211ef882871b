"""Quantified differential temporal dynamic logic: checker, prover and simulator."""
from qdtl.syntax import *  # noqa: F401,F403
from qdtl.parser import (  # noqa: F401
    ParseError, Theory, parse_formula, parse_program, parse_proof_script, parse_term,
    parse_theory, pretty,
)

__version__ = "0.1.0"
