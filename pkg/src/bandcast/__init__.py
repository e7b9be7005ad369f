"""Frequency-split time-series forecasting.

A patch spectral model forecasts the low band, a second model forecasts the
high-frequency residual, and an optional chat-completion endpoint calibrates
the combined forecast.
"""

from ._backend import BACKEND
from .calibrate import AuxiliaryContext, LlmEndpointConfig, build_prompt, calibrate, parse_forecast
from .errors import *  # noqa: F401,F403
from .loss import faloss
from .plfm import PLFM, PlfmConfig, train_plfm
from .residual import MLPBackbone, ResidualLearner, train_residual
from .spectral import dft, high_pass, idft, low_pass, patch, patch_spectra

__version__ = "0.1.0"
