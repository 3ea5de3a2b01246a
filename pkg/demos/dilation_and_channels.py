"""Dilated stacks and channel scaling.

Dilations growing by lambda per layer give a width that tracks lambda^L /
sqrt(L), almost the full receptive field. Channels need eps ~ 1/(C L): the
collapsed profile then matches the single-channel one, and dropping the 1/C
widens it by sqrt(C).
"""
from capprop.config import ExperimentConfig
from capprop.experiments import run_dilated_erf, run_multichannel_xavier

dil = run_dilated_erf(ExperimentConfig.from_dict({"schema_version": 1, "study": "dilated_erf"}))
for rec in dil.records:
    m = rec["metrics"]
    print(f"L={rec['key']['L']}: width {m['std_width']:.2f}, receptive field {m['receptive_field']:.0f},"
          f" lambda^L/sqrt(L) {m['erf_scale']:.2f}")
print("fit:", dil.fits["width_vs_erf_scale"])

mc = run_multichannel_xavier(ExperimentConfig.from_dict({"schema_version": 1, "study": "multichannel_xavier"}))
for rec in mc.records:
    m = rec["metrics"]
    print(f"C={rec['key']['C']}: deviation {m['deviation_l1']:.1e}, unscaled width ratio"
          f" {m['control_width_ratio']:.4f} (sqrt C = {m['sqrt_C']:.4f})")
