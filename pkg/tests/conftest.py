import os
import sys

import numpy as np
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def mean_within_3sigma(outputs, truth, atol: float = 1e-9) -> bool:
    """Whether the Monte-Carlo mean lies in the 3-sigma ball around ``truth``.

    The ball radius is 3 sqrt(sum_j Var(mean_j)); one vector test per dataset
    avoids the false alarms of many per-coordinate tests.  ``atol`` covers
    noiseless protocols, whose only error is floating-point rounding.
    """
    outputs = np.asarray(outputs, float)
    mean = outputs.mean(axis=0)
    se2 = outputs.var(axis=0, ddof=1) / outputs.shape[0]
    return float(np.linalg.norm(mean - np.asarray(truth))) <= 3.0 * float(np.sqrt(se2.sum())) + atol


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
