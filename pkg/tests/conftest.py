"""Shared scenario builders for the test suite."""

import numpy as np
import pytest

from msvol import BivariateLaw, GeneratorMatrix, MsbnsSpec, MscogarchSpec, SwitchJumpLaw
from msvol.levy_drivers import JumpLaw, LevyDriverSpec

Q3 = [[-0.15, 0.10, 0.05], [0.10, -0.20, 0.10], [0.05, 0.15, -0.20]]


def figure1(**kw) -> MscogarchSpec:
    law = BivariateLaw(JumpLaw.exponential(5.0), JumpLaw.exponential(0.1))
    args = dict(
        beta=[0.7, 2.0, 1.0],
        lam=[0.042, 0.047, 0.044],
        delta=[0.9, 0.93, 0.92],
        driver=LevyDriverSpec(cp_intensity=1.0, jump_law=JumpLaw.normal(0.0, 1.0)),
        q=GeneratorMatrix(Q3),
        switch_jumps=SwitchJumpLaw.uniform(3, law),
    )
    return MscogarchSpec(**{**args, **kw})


def figure2(mu=(0.1, 0.0, 0.0), **kw) -> MsbnsSpec:
    subs = tuple(
        LevyDriverSpec(cp_intensity=c, jump_law=JumpLaw.exponential(rate), subordinator=True)
        for c, rate in ((2.0, 0.1), (2.0, 0.1), (5.0, 0.2))
    )
    law = BivariateLaw(JumpLaw.exponential(10.0), JumpLaw.exponential(0.1))
    args = dict(
        lam=[0.01, 0.02, 0.04], mu=list(mu), beta=[0.0] * 3, rho=[0.0] * 3,
        subordinators=subs, q=GeneratorMatrix(Q3), switch_jumps=SwitchJumpLaw.uniform(3, law),
    )
    return MsbnsSpec(**{**args, **kw})


def arbitration_scenario(**kw) -> MsbnsSpec:
    """Fast-mixing BNS spec where the two Levy-integral variants differ a lot."""
    subs = tuple(
        LevyDriverSpec(cp_intensity=c, jump_law=JumpLaw.exponential(rate), subordinator=True)
        for c, rate in ((2.0, 2.0), (2.0, 2.0), (5.0, 4.0))
    )
    law = BivariateLaw(JumpLaw.exponential(10.0), JumpLaw.exponential(2.0))
    args = dict(
        lam=[0.2, 0.4, 0.8], mu=[0.0] * 3, beta=[0.0] * 3, rho=[0.0] * 3,
        subordinators=subs, q=GeneratorMatrix(Q3), switch_jumps=SwitchJumpLaw.uniform(3, law),
    )
    return MsbnsSpec(**{**args, **kw})


def single_cogarch(beta=0.7, lam=0.042, delta=0.9, driver=None, **kw) -> MscogarchSpec:
    driver = driver or LevyDriverSpec(cp_intensity=1.0, jump_law=JumpLaw.normal(0.0, 1.0))
    return MscogarchSpec(beta=[beta], lam=[lam], delta=[delta], driver=driver, q=GeneratorMatrix([[0.0]]), **kw)


@pytest.fixture
def fig1():
    return figure1()


@pytest.fixture
def fig2():
    return figure2()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)
