"""Recovery and certification of inner-product preserving maps on
finite-dimensional matrix-algebra modules."""

from .certificates import Certificate
from .controls import ControlSpec, HurControl, custom_control, hur_control, power_product, power_sum
from .corrector import ApproxMap, CorrectionResult, decompose, extend, extrapolate_on_delta
from .domains import DomainSpec, ball_product, custom, exterior_product, exterior_union, full
from .fixtures import FixtureSpec, GroundTruth, generate
from .kernel import (
    AlgebraElement,
    ModuleVector,
    inner,
    module_abs,
    op_norm,
    pos_sqrt,
    re_part,
    vec_norm,
)

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement",
    "ApproxMap",
    "Certificate",
    "ControlSpec",
    "CorrectionResult",
    "DomainSpec",
    "FixtureSpec",
    "GroundTruth",
    "HurControl",
    "ball_product",
    "custom",
    "custom_control",
    "decompose",
    "exterior_product",
    "exterior_union",
    "extend",
    "extrapolate_on_delta",
    "full",
    "generate",
    "hur_control",
    "inner",
    "module_abs",
    "op_norm",
    "pos_sqrt",
    "power_product",
    "power_sum",
    "re_part",
    "vec_norm",
]
