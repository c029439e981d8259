"""Numerical laboratory for the conformal upper bound on lambda_2 Vol^{2/n}
of metrics conformal to the round sphere S^n."""

from .constants import BoundConstants, conjecture_bound, k_constant, sphere_volume, theorem_bound
from .metric import ConformalMetric
from .moebius import Cap, moebius
from .measure import DiscreteMeasure, hersch_renormalize
from .spectral import normalize, spectrum
from .bound import BoundCertificate, certify

__all__ = [
    "BoundCertificate",
    "BoundConstants",
    "Cap",
    "ConformalMetric",
    "DiscreteMeasure",
    "certify",
    "conjecture_bound",
    "hersch_renormalize",
    "k_constant",
    "moebius",
    "normalize",
    "sphere_volume",
    "spectrum",
    "theorem_bound",
]
