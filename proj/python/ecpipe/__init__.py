"""Erasure coding, repair plans, path selection and timeslot simulation."""

from ._ecpipe import (
    EcpipeError,
    HelperTimestamps,
    analytic_time,
    bench,
    cross_rack_links,
    decode,
    decoding_coefficients,
    encode,
    rack_aware_path,
    recovery_peak_load,
    schemes,
    simulate,
    sweep_csv,
    weighted_path,
)

__all__ = [
    "EcpipeError",
    "HelperTimestamps",
    "analytic_time",
    "bench",
    "cross_rack_links",
    "decode",
    "decoding_coefficients",
    "encode",
    "rack_aware_path",
    "recovery_peak_load",
    "schemes",
    "simulate",
    "sweep_csv",
    "weighted_path",
]
