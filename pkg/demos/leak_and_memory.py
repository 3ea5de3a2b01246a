"""Side inputs, biases and recurrent memory.

A per-layer leak alpha*eps diverts capacity away from the input; with eps
~ 1/L the input keeps exp(-alpha) of it. Applied to a recurrent net, half
of the side capacity sits in the last ~ln(2) N steps.
"""
import math

from capprop.config import ExperimentConfig
from capprop.experiments import run_leak_split, run_recurrent_memory

leak = run_leak_split(ExperimentConfig.from_dict({
    "schema_version": 1, "study": "leak_split", "sweep": {"depths": [33, 257], "leaks": [0.5, 1.0, 2.0]}}))
for rec in leak.records:
    k, m = rec["key"], rec["metrics"]
    print(f"L={k['L']:<4} alpha={k['alpha']}: input mass {m['mass_x']:.4f} vs exp(-alpha) {m['analytic_mass_x']:.4f};"
          f" leak held per layer: {m['control_mass_x']:.1e}")

mem = run_recurrent_memory(ExperimentConfig.from_dict({
    "schema_version": 1, "study": "recurrent_memory", "sweep": {"depths": [64, 256, 1024]}}))
for rec in mem.records:
    m = rec["metrics"]
    print(f"N={rec['key']['N']:<5} M/N = {m['memory_fraction']:.4f} (ln 2 = {math.log(2):.4f});"
          f" fixed-eps control M/N = {m['control_memory_fraction']:.4f}")
