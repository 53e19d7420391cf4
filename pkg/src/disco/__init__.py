"""Linear-region (facet) enumeration and exact facet-wise verification of small ReLU networks.

The trainer lives in ``disco.train`` and is not imported here, so the
analysis side works without loading torch.
"""

from .affine import AffineForm, LinearConstraint
from .facets import EnumConfig, Facet, FacetSet, count_facets, enumerate_facets, facet_of_point
from .lp import ConstraintSystem, feasible_strict, optimize
from .network import Architecture, Layer, Network, forward, make_architecture
from .verify import OutputConstraint, Verdict, VerificationTask, VerifyConfig, verify

__all__ = [
    "AffineForm",
    "Architecture",
    "ConstraintSystem",
    "EnumConfig",
    "Facet",
    "FacetSet",
    "Layer",
    "LinearConstraint",
    "Network",
    "OutputConstraint",
    "Verdict",
    "VerificationTask",
    "VerifyConfig",
    "count_facets",
    "enumerate_facets",
    "facet_of_point",
    "feasible_strict",
    "forward",
    "make_architecture",
    "optimize",
    "verify",
]
