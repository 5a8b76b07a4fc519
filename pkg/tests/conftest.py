from __future__ import annotations

import pytest

from logmfg.mfg import PicardOptions, picard_solve
from logmfg.problems import constant_problem, smooth_problem


@pytest.fixture(scope="session")
def constant_case():
    problem = constant_problem()
    return problem, picard_solve(problem)


@pytest.fixture(scope="session")
def smooth_case():
    problem = smooth_problem(n=32, nt=128)
    return problem, picard_solve(problem, options=PicardOptions(tol=1e-11, max_iter=400))
