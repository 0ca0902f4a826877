"""Numerical laboratory for the strong renewal theorem on the integer lattice."""
from .conditions import (RatioCurve, SplitSum, check_r1, check_rz, decade_grid, r3_asymptote, r3_companion,
                         r3_delta_curve, r3_sum, split_sum, spike_points, srt_ratio, trend_statistic)
from .convolution import (ConvTable, RenewalSequence, conv_table, renewal_fast, renewal_naive,
                          truncated_event_prob)
from .errors import (ConfigurationError, ConstructionError, DomainError, NumericalError, PreconditionError,
                     RangeError, ResourceError, SRTLabError)
from .green import WeightSpec, check_g2, check_g3, green_mass, green_ratio, omega_curve, regime_classifier
from .laws import LatticeLaw, NormingScale, TailSpec, build_law, build_norming, custom_law, potter_envelope
from .stable import (StableLaw, limit_constant_green, limit_constant_srt, sample_positive_stable,
                     stable_density)
from .tilting import (gnedenko_sanity, lld_scan, make_tilted, tilt_identity_check, tilted_moments,
                      truncated_lld_scan)

__version__ = "0.1.0"
