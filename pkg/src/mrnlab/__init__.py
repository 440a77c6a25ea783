"""mrnlab: reconstruction of undersampled MR flow images and statistical
characterization of the reconstruction noise."""

from . import analysis, ensemble, flow_model, gridio, kspace, masks, solvers, transforms

__all__ = [
    "analysis",
    "ensemble",
    "flow_model",
    "gridio",
    "kspace",
    "masks",
    "solvers",
    "transforms",
]

__version__ = "0.1.0"
