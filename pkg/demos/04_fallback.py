"""
When the identity-link fit will not converge
============================================

If a cell's risk sits at 0 or 1, the identity-link binomial fit has its
optimum on the edge of the parameter space. With ``fallback=True`` the report
moves on to a Poisson identity-link fit and then to least squares. Both use
robust standard errors, and the report records which strategy produced the
numbers.
"""

from biointeract import ConvergenceFailure, ExposureTable, effect_report

table = ExposureTable.from_counts({(0, 0): (5, 50), (1, 0): (10, 50), (0, 1): (20, 50), (1, 1): (50, 50)})

try:
    effect_report(table, max_iterations=5)
except ConvergenceFailure as exc:
    print("binomial identity fit:", exc.reason)

report = effect_report(table, max_iterations=5, fallback=True, scale=1.0, log=print)
print("strategy:", report.strategy, "| covariance:", report.covariance)
print(f"IC {report.ic.estimate:.3f}  robust 95% CI ({report.ic.ci_low:.3f}, {report.ic.ci_high:.3f})")

# A zero-event cell is a separate problem: the log link cannot reach it at all.
zero = ExposureTable.from_counts({(0, 0): (0, 50), (1, 0): (10, 50), (0, 1): (20, 50), (1, 1): (30, 50)})
print("log-link failures:", effect_report(zero).failures)
