"""
The same data on the ratio scale
================================

On the log and logit scales the product term is essentially zero. The data are
consistent with multiplicative joint effects, even though they are far from
additive.
"""

import numpy as np

from biointeract import ModelSpec, fit, generate_hammond_dataset, multiplicativity_test
from biointeract.effects import relative_risks

table = generate_hammond_dataset()

for link in ("log", "logit"):
    test = multiplicativity_test(fit(table, ModelSpec(link)))
    w = test.wald
    print(f"{link:5s}  product term {w.estimate:+.4f}  ratio of ratios {test.ratio_of_ratios:.3f}  p = {w.p_two_sided:.4f}")

rr = relative_risks(table)
print("\nrelative risks vs unexposed:", {k: round(v, 2) for k, v in rr.items()})
print("product of single-exposure RRs:", round(rr[1, 0] * rr[0, 1], 2), "  joint RR:", round(rr[1, 1], 2))
print("log of joint / product:", np.log(rr[1, 1] / (rr[1, 0] * rr[0, 1])))
