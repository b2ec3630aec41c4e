"""Simulated remote power side-channel attacks on multi-tenant FPGAs."""

from .aes import encrypt_with_trace, expand_key, inv_sbox, invert_key_schedule
from .calibration import calibrate_sigma
from .cpa import attack_byte, compute_mtd, pearson, recover_key, repeatability
from .scenarios import ScenarioSpec, load_scenario, make_scenario, preset
from .synth import synthesize_traces
from .traces import TraceSet

__all__ = [
    "ScenarioSpec",
    "TraceSet",
    "attack_byte",
    "calibrate_sigma",
    "compute_mtd",
    "encrypt_with_trace",
    "expand_key",
    "inv_sbox",
    "invert_key_schedule",
    "load_scenario",
    "make_scenario",
    "pearson",
    "preset",
    "recover_key",
    "repeatability",
    "synthesize_traces",
]
