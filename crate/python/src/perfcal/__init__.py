"""Physiological stress features and individual performance calibration."""

from perfcal._perfcal import (
    EdaDecomposition,
    StimulusPlan,
    TimeSeries,
    calibrate,
    decompose_eda,
    detect_bvp_peaks,
    detect_decrease_level,
    detect_emg_bursts,
    detect_r_peaks,
    emg_envelope,
    features,
    heart_rate,
    process,
    report,
    synth_ecg,
    synth_session,
    validate,
)

__all__ = [
    "EdaDecomposition",
    "StimulusPlan",
    "TimeSeries",
    "calibrate",
    "decompose_eda",
    "detect_bvp_peaks",
    "detect_decrease_level",
    "detect_emg_bursts",
    "detect_r_peaks",
    "emg_envelope",
    "features",
    "heart_rate",
    "process",
    "report",
    "synth_ecg",
    "synth_session",
    "validate",
]
