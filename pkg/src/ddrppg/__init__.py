"""Unsupervised de-interfered rPPG estimation with descriptive 3D convolutions."""

from .signals import (
    SignalTrace,
    Spectrum,
    CorrelationProfile,
    psd,
    estimate_hr,
    negative_pearson,
    normalized_correlation,
    running_correlation,
    decompose_correlation,
)
from .classical import classical_extract
from .clips import RegionLayout, ClipSet, locate_regions, sample_clips, augment_weak
from .ldc import conv3d_vanilla, ldc2d_forward, tdc_forward, ldc3d_forward, tdc_descriptor, LDC3d
from .network import BranchConfig, DDNet, ForwardBundle, deinterfere
from .losses import (
    LossWeights,
    LossReport,
    loss_nc,
    loss_kcn,
    loss_cr_hat,
    loss_dcr,
    cluster_interference,
    total_loss,
)
from .synth import PulseSpec, InterferenceSpec, SceneSpec, make_pulse, make_interference, render_video, make_protocol
from .harness import TrainConfig, EvalReport, train, evaluate, analyze

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
