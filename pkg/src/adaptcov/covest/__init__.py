from .bs import BerrySauer, bs_update
from .lagged import build_h_operators, propagate_phi, relax
from .mbl import ModifiedBelanger, mbl_update
from .obl import OriginalBelanger, obl_update
from .params import (
    CovParameterization,
    block_bases,
    circulant,
    diagonal_bases,
    stencil_bases,
    symmetric_bases,
)

ESTIMATORS = {"mbl": ModifiedBelanger, "obl": OriginalBelanger, "bs": BerrySauer}


def make_estimator(kind, param, Gamma, n, L=1, tau=1000.0, **kw):
    if kind not in ESTIMATORS:
        raise ValueError(f"unknown estimator {kind!r}")
    if kind == "obl":
        return OriginalBelanger(param, Gamma, n, L=L, **kw)
    return ESTIMATORS[kind](param, Gamma, n, L=L, tau=tau, **kw)
