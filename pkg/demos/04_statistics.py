"""
Evaluation statistics
=====================

MAE, Pearson and Spearman correlation with average ranks for ties, and
the three-by-three report used to compare an estimator against labels.
"""

import numpy as np

from squim.metrics import MetricTriple, evaluate, mae, pcc, rankdata, srcc

a = np.array([1.0, 2.0, 2.0, 3.0, 5.0])
b = np.array([2.0, 1.0, 4.0, 4.0, 9.0])
print("ranks with ties:", rankdata(a), rankdata(b))
print(f"MAE {mae(a, b):.3f}  PCC {pcc(a, b):.4f}  SRCC {srcc(a, b):.4f}")

# Spearman only sees order, so a monotone warp leaves it at 1
print("SRCC(a, exp(a)) =", srcc(a, np.exp(a)))

rng = np.random.default_rng(0)
truth = [MetricTriple(rng.uniform(0.5, 1), rng.uniform(1, 4.5), rng.uniform(-5, 25)) for _ in range(50)]
pred = [MetricTriple(min(1.0, t.stoi + rng.normal(0, 0.02)), min(4.64, max(1.0, t.pesq + rng.normal(0, 0.2))),
                     t.si_sdr + rng.normal(0, 1.0)) for t in truth]
report = evaluate(pred, truth)
for name in ("stoi", "pesq", "si_sdr"):
    s = report.get(name)
    unit = " (%)" if name == "stoi" else ""
    print(f"{name:7s} MAE{unit} {s.mae:6.3f}  PCC {s.pcc:.3f}  SRCC {s.srcc:.3f}")
