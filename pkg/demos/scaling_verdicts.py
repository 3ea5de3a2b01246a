"""How the capacity rate must scale with depth.

eps = c * (L - 1)**(-p). Only p = 1 keeps the receptive-field width finite
as L grows; p < 1 blows it up and p > 1 shrinks it to a point.
"""
from capprop.config import ExperimentConfig
from capprop.experiments import run_scaling_sweep

cfg = ExperimentConfig.from_dict({
    "schema_version": 1, "study": "scaling_sweep", "grid": {"size": 2048},
    "sweep": {"depths": [17, 65, 257, 1025], "exponents": [0.5, 0.75, 1.0, 1.5, 2.0]},
})
report = run_scaling_sweep(cfg)
for c in report.classifications:
    print(f"p={c['p']:<5} width ~ L^{c['exponent']:+.3f} (predicted {c['predicted']:+.3f})  {c['verdict']}")
