"""Windowed power spectra and the multi-window feature stacks built from them."""

from .features import DEFAULT_WINDOWS, MultiWindowFeatures, multi_window_features, sliding_windows
from .psd import (
    DESCRIPTOR_NAMES,
    Psd,
    SpectralDescriptors,
    SpectralError,
    SpectralFeature,
    WindowSpec,
    build_feature,
    descriptors,
    dft_psd,
    normalize_acc_spectrum,
)
