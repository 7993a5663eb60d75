"""Select the compiled kernels when available, else the pure-Python fallback."""
import os

if os.environ.get("PLGNET_PURE"):
    from plgnet import _fallback as impl

    BACKEND = "python"
else:
    try:
        from plgnet import _core as impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        from plgnet import _fallback as impl

        BACKEND = "python"

soft_threshold = impl.soft_threshold
cd_epoch_pairwise = impl.cd_epoch_pairwise
cd_epoch_dense = impl.cd_epoch_dense
gibbs_sweeps = impl.gibbs_sweeps

__all__ = [
    "BACKEND",
    "soft_threshold",
    "cd_epoch_pairwise",
    "cd_epoch_dense",
    "gibbs_sweeps",
]
