import math

import numpy as np
import pytest
import scipy.stats

from msvol import msbns, mscogarch
from msvol.levy_drivers import JumpLaw
from msvol.map_engine import (
    DRIVER,
    SWITCH,
    BivariateLaw,
    InfiniteMomentError,
    SwitchJumpLaw,
    f_matrix,
    matrix_exponent,
    sample_map_path,
)
from msvol.markov_env import GeneratorMatrix
from msvol.streams import path_rng

from conftest import Q3, figure1, figure2

FIG_LAW = BivariateLaw(JumpLaw.exponential(5.0), JumpLaw.exponential(0.1))


def test_f_matrix_closed_form():
    laws = SwitchJumpLaw.uniform(3, FIG_LAW)
    for k, n in ((0, 0), (1, 1), (2, 1), (2, 2)):
        m = f_matrix(laws, k, n).matrix
        val = 5.0 / (5.0 + k) * math.factorial(n) / 0.1**n
        assert np.allclose(m[~np.eye(3, dtype=bool)], val, rtol=1e-14)
        assert np.all(np.diag(m) == 0)


def test_f_matrix_respects_zero_rates():
    q = GeneratorMatrix([[-1.0, 1.0, 0.0], [0.5, -1.0, 0.5], [0.0, 1.0, -1.0]])
    m = f_matrix(SwitchJumpLaw.uniform(3, FIG_LAW), 1, 1, q).matrix
    assert m[0, 2] == 0 and m[2, 0] == 0 and m[0, 1] > 0


def test_f_matrix_reports_infinite_moments():
    law = BivariateLaw(JumpLaw.normal(0.0, 1.0), JumpLaw.zero())
    laws = SwitchJumpLaw.uniform(2, BivariateLaw(JumpLaw.exponential(1.0), JumpLaw.zero()))
    assert np.isfinite(f_matrix(SwitchJumpLaw.uniform(2, law), 3, 0).matrix).all()
    with pytest.raises(InfiniteMomentError):
        f_matrix(laws, -2, 0)


def test_matrix_exponent_structure():
    q = GeneratorMatrix(Q3)
    laws = SwitchJumpLaw.uniform(3, FIG_LAW)
    psi = np.array([0.1, -0.2, 0.3])
    got = matrix_exponent(psi, q, laws, -2.0)
    expect = np.diag(psi) + q.q.T * np.where(np.eye(3, dtype=bool), 1.0, 5.0 / 7.0)
    assert np.allclose(got, expect, rtol=1e-15)
    assert np.array_equal(matrix_exponent(np.zeros(3), q, laws, 0.0), q.q.T)


def test_switch_table_validation():
    with pytest.raises(ValueError):
        SwitchJumpLaw(2, {(0, 0): FIG_LAW})
    with pytest.raises(ValueError):
        SwitchJumpLaw(2, {(0, 2): FIG_LAW})
    neg = SwitchJumpLaw.uniform(2, BivariateLaw(JumpLaw.zero(), JumpLaw.normal(0.0, 1.0)))
    with pytest.raises(ValueError, match="eta"):
        neg.check_support(xi_nonnegative=False)
    negx = SwitchJumpLaw.uniform(2, BivariateLaw(JumpLaw.point(-0.5), JumpLaw.zero()))
    negx.check_support(xi_nonnegative=False)
    with pytest.raises(ValueError, match="xi"):
        negx.check_support(xi_nonnegative=True)


def _explicit_mmgou(path, v0, times):
    """``V_t = exp(-xi_t) (V_0 + int_0^t exp(xi_{s-}) d eta_s)`` event by event."""
    out = []
    for t in times:
        xi, acc, s = 0.0, v0, 0.0
        state = path.regime.initial_state
        for e in range(path.time.size):
            te = path.time[e]
            if te > t:
                break
            a, b = path.xi_drift[state], path.eta_drift[state]
            acc += b * math.exp(xi) * (math.expm1(a * (te - s)) / a if a else te - s)
            xi += a * (te - s)
            acc += math.exp(xi) * path.deta[e]
            xi += path.dxi[e]
            s = te
            if path.kind[e] == SWITCH:
                state = path.state_to[e]
        a, b = path.xi_drift[state], path.eta_drift[state]
        acc += b * math.exp(xi) * (math.expm1(a * (t - s)) / a if a else t - s)
        xi += a * (t - s)
        out.append(math.exp(-xi) * acc)
    return np.array(out)


@pytest.mark.parametrize("model", ["mscogarch", "msbns"])
def test_volatility_matches_explicit_solution(model):
    spec, mod = (figure1(), mscogarch) if model == "mscogarch" else (figure2(), msbns)
    times = np.linspace(0.0, 150.0, 31)
    for i in range(5):
        rng = path_rng(11, i)
        path = sample_map_path(mod.levy_pieces(spec), spec.q, spec.switch_jumps, i % 3, 150.0, rng)
        bundle = mod.volatility_along(spec, path, 7.5, times, rng)
        ref = _explicit_mmgou(path, 7.5, times)
        assert np.allclose(bundle.v, ref, rtol=1e-9)


def test_map_path_accessors_are_consistent():
    spec = figure1()
    path = sample_map_path(mscogarch.levy_pieces(spec), spec.q, spec.switch_jumps, 0, 80.0, path_rng(12, 0))
    grid = np.linspace(0.0, 80.0, 17)
    assert np.allclose(path.xi_at(grid), path.xi1_at(grid) + path.xi2_at(grid))
    sw = path.kind == SWITCH
    assert np.allclose(path.xi2_at(80.0), path.dxi[sw].sum())
    # COGARCH eta is pure drift between switches
    drift = path._drift_integral(path.eta_drift, 80.0)
    assert path.eta_at(80.0) == pytest.approx(drift + path.deta[sw].sum())
    assert np.all(np.isnan(path.raw[sw])) and np.all(np.isfinite(path.raw[~sw]))
    a = spec.jump_mult[path.state_from[~sw]]
    assert np.allclose(path.dxi[~sw], -np.log1p(a * path.raw[~sw] ** 2))
    assert np.all(np.diff(path.time) >= 0)
    assert path.regime.events == [(float(t), int(a), int(b)) for t, a, b in
                                  zip(path.time[sw], path.state_from[sw], path.state_to[sw])]


def _naive_xi(spec, horizon, rng):
    """Independent reference sampler of ``xi_T`` for the COGARCH MAP."""
    q = spec.q.q
    state, t, xi = 0, 0.0, 0.0
    while True:
        hold = rng.exponential(1.0 / -q[state, state])
        seg = min(hold, horizon - t)
        n = rng.poisson(spec.driver.cp_intensity * seg)
        y = rng.normal(0.0, 1.0, n)
        xi += -math.log(spec.delta[state]) * seg - np.log1p(spec.jump_mult[state] * y * y).sum()
        t += seg
        if t >= horizon:
            return xi
        p = np.where(np.arange(3) == state, 0.0, q[state]) / -q[state, state]
        state = int(rng.choice(3, p=p))
        xi += rng.exponential(0.2)


def test_map_sampler_agrees_with_naive_sampler_in_law():
    spec = figure1()
    pieces = mscogarch.levy_pieces(spec)
    fast = [sample_map_path(pieces, spec.q, spec.switch_jumps, 0, 30.0, path_rng(13, i)).xi_at(30.0)[0] for i in range(1500)]
    rng = np.random.default_rng(99)
    slow = [_naive_xi(spec, 30.0, rng) for _ in range(1500)]
    assert scipy.stats.ks_2samp(fast, slow).pvalue > 1e-3


def test_switch_jump_draws_follow_their_laws():
    spec = figure1()
    pieces = mscogarch.levy_pieces(spec)
    dxi, deta, raw = [], [], []
    for i in range(60):
        p = sample_map_path(pieces, spec.q, spec.switch_jumps, 1, 300.0, path_rng(14, i))
        sw = p.kind == SWITCH
        dxi.extend(p.dxi[sw])
        deta.extend(p.deta[sw])
        raw.extend(p.raw[p.kind == DRIVER])
    assert scipy.stats.kstest(dxi, scipy.stats.expon(scale=0.2).cdf).pvalue > 1e-3
    assert scipy.stats.kstest(deta, scipy.stats.expon(scale=10.0).cdf).pvalue > 1e-3
    assert scipy.stats.kstest(raw, scipy.stats.norm().cdf).pvalue > 1e-3


def test_xi_grows_at_rate_kappa():
    spec = figure1()
    pieces = mscogarch.levy_pieces(spec)
    horizon = 2000.0
    vals = np.array([
        sample_map_path(pieces, spec.q, spec.switch_jumps, int(path_rng(15, i).choice(3, p=spec.pi)),
                        horizon, path_rng(16, i)).xi_at(horizon)[0] / horizon
        for i in range(200)
    ])
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - mscogarch.kappa_xi(spec)) < 3 * se


def test_sampler_rejects_mismatched_inputs():
    spec = figure1()
    with pytest.raises(ValueError):
        sample_map_path(mscogarch.levy_pieces(spec)[:2], spec.q, spec.switch_jumps, 0, 1.0, path_rng(0, 0))
    with pytest.raises(ValueError):
        sample_map_path(mscogarch.levy_pieces(spec), spec.q, spec.switch_jumps, 0, 0.0, path_rng(0, 0))
