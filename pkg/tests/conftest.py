import numpy as np
import pytest

from pdmpval.loan import LoanParams, SmoothedLoanModel


@pytest.fixture(scope="session")
def loan_model():
    """The published parameter set, built once for the whole run."""
    return SmoothedLoanModel.build()


@pytest.fixture(scope="session")
def loan_params():
    return LoanParams()


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)
