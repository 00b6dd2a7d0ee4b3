import math

import numpy as np
import pytest
import scipy.stats

from msvol import msbns as mb
from msvol.levy_drivers import JumpLaw, LevyDriverSpec
from msvol.map_engine import BivariateLaw, SwitchJumpLaw
from msvol.markov_env import GeneratorMatrix
from msvol.streams import path_rng

from conftest import Q3, arbitration_scenario, figure2


def single_bns(lam=0.5, drift=0.0, c=3.0, rate=2.0, **kw):
    sub = LevyDriverSpec(drift=drift, cp_intensity=c, jump_law=JumpLaw.exponential(rate), subordinator=True)
    return mb.MsbnsSpec(lam=[lam], mu=[0.0], beta=[0.0], rho=[0.0], subordinators=(sub,), q=GeneratorMatrix([[0.0]]), **kw)


def test_spec_validation():
    with pytest.raises(ValueError, match="lambda"):
        single_bns(lam=0.0)
    with pytest.raises(ValueError, match="subordinator"):
        mb.MsbnsSpec(lam=[1.0], mu=[0.0], beta=[0.0], rho=[0.0],
                     subordinators=(LevyDriverSpec(cp_intensity=1.0, jump_law=JumpLaw.exponential(1.0)),),
                     q=GeneratorMatrix([[0.0]]))
    with pytest.raises(ValueError, match="xi jumps"):
        figure2(switch_jumps=SwitchJumpLaw.uniform(3, BivariateLaw(JumpLaw.normal(0.0, 1.0), JumpLaw.zero())))
    with pytest.raises(ValueError, match="need 3 subordinators"):
        figure2(subordinators=figure2().subordinators[:2])


@pytest.mark.parametrize("k", [1, 2, 3])
def test_single_regime_moments_match_gamma_law(k):
    # stationary V is Gamma(shape c, rate alpha) for exponential jumps
    spec = single_bns(lam=0.5, c=3.0, rate=2.0)
    ref = scipy.stats.gamma(a=3.0, scale=0.5).moment(k)
    assert mb.stationary_moment(spec, k)[0] == pytest.approx(ref, rel=1e-12)


def test_single_regime_mean_equals_driver_mean():
    for lam, drift, c, rate in ((0.5, 0.0, 3.0, 2.0), (2.0, 1.5, 0.7, 0.1), (0.01, 0.3, 5.0, 4.0)):
        spec = single_bns(lam=lam, drift=drift, c=c, rate=rate)
        assert mb.stationary_moment(spec, 1)[0] == pytest.approx(drift + c / rate, rel=1e-12)


def test_drift_shifts_the_gamma_law():
    # V = d + Gamma(c, alpha): second moment d^2 + 2 d c/alpha + c(c+1)/alpha^2
    spec = single_bns(lam=0.3, drift=1.5, c=3.0, rate=2.0)
    assert mb.stationary_moment(spec, 2)[0] == pytest.approx(1.5**2 + 2 * 1.5 * 1.5 + 3.0, rel=1e-12)


def test_lower_bound_variants_differ(fig2):
    full = mb.stationary_moment(fig2, 2, lower="0")[0]
    tail = mb.stationary_moment(fig2, 2, lower="1")[0]
    assert full == pytest.approx(3580.16, abs=0.01)
    assert tail == pytest.approx(3563.93, abs=0.01)
    with pytest.raises(ValueError):
        mb.stationary_moment(fig2, 1, lower="2")


def test_psi_matrix_closed_form(fig2):
    for k in (1, 2):
        off = 10.0 / (10.0 + k)
        expect = -k * np.diag(fig2.lam) + np.array(Q3).T * np.where(np.eye(3, dtype=bool), 1.0, off)
        assert np.allclose(mb.psi_matrix(fig2, k), expect, rtol=1e-15)
    assert np.array_equal(mb.psi_matrix(fig2, 0), fig2.q.q.T)


def test_psi_without_switch_xi_jumps():
    spec = figure2(switch_jumps=SwitchJumpLaw.uniform(3, BivariateLaw(JumpLaw.zero(), JumpLaw.exponential(0.1))))
    assert np.allclose(mb.psi_matrix(spec, 2), -2 * np.diag(spec.lam) + np.array(Q3).T, rtol=1e-15)


def test_compensator_rates(fig2):
    # lambda E L_1 + exit rate * E[deta] = (0.2, 0.4, 1.0) + (1.5, 2.0, 2.0)
    assert mb.compensator(fig2).rate_vector == pytest.approx([1.7, 2.4, 3.0], rel=1e-14)


def test_compensated_eta_is_a_martingale(fig2):
    chk = mb.compensator_martingale_check(fig2, 20.0, 400, 7, checkpoints=[1.0, 5.0, 20.0])
    assert chk.passed, chk.to_json()
    with pytest.raises(ValueError):
        mb.compensator_martingale_check(fig2, 20.0, 1, 7)


def test_degenerate_detection():
    subs = tuple(LevyDriverSpec(drift=c, subordinator=True) for c in (1.0, 2.0))
    # exp(-x)(y + c_i) = c_j: 1 -> 2 needs y = 2 e^x - 1, 2 -> 1 needs y = e^x - 2
    x = math.log(3.0)
    laws = SwitchJumpLaw(2, {(0, 1): BivariateLaw.point_mass(x, 5.0), (1, 0): BivariateLaw.point_mass(x, 1.0)})
    spec = mb.MsbnsSpec(lam=[1.0, 1.0], mu=[0, 0], beta=[0, 0], rho=[0, 0], subordinators=subs,
                        q=GeneratorMatrix([[-1.0, 1.0], [1.0, -1.0]]), switch_jumps=laws)
    res = mb.degenerate_check(spec)
    assert res.degenerate and res.c.tolist() == [1.0, 2.0]
    with pytest.raises(ValueError, match="deterministic"):
        mb.stationarity_check(spec)
    # the moment recursion agrees with the deterministic solution
    assert mb.stationary_moment(spec, 1)[0] == pytest.approx(1.5, rel=1e-12)
    assert mb.stationary_moment(spec, 2)[0] == pytest.approx(2.5, rel=1e-12)
    assert not mb.degenerate_check(figure2()).degenerate


def test_degenerate_path_stays_put():
    subs = (LevyDriverSpec(drift=2.0, subordinator=True),)
    spec = mb.MsbnsSpec(lam=[0.7], mu=[0.0], beta=[0.0], rho=[0.0], subordinators=subs, q=GeneratorMatrix([[0.0]]), v0=2.0, j0=0)
    bundle = mb.simulate(spec, 10.0, 1.0, path_rng(0, 0))
    assert np.allclose(bundle.v, 2.0, rtol=1e-14)


def test_stationarity_report(fig2):
    rep = mb.stationarity_check(fig2, 200, np.random.default_rng(1))
    assert rep.verdict == "stationary" and rep.kappa_positive
    assert rep.levy_log_moments[0]["value"] == pytest.approx(3.64584791683878, rel=1e-12)
    assert rep.switch_sup.finite
    assert rep.kappa == pytest.approx(float(np.dot(fig2.pi, fig2.lam + fig2.q.exit_rates * 0.1)), rel=1e-12)


def test_moment_conditions_report(fig2):
    rep = mb.moment_conditions(fig2, 2)
    assert rep.ok
    names = [c["name"] for c in rep.checks]
    assert any("contraction" in n for n in names) and any("spectral" in n for n in names)
    assert any(n.startswith("F_2,2") for n in names)
    assert all(c["value"] < 1 for c in rep.checks if "contraction" in c["name"])


def test_volatility_decays_without_jumps():
    subs = (LevyDriverSpec(subordinator=True),)
    spec = mb.MsbnsSpec(lam=[0.3], mu=[0.0], beta=[0.0], rho=[0.0], subordinators=subs, q=GeneratorMatrix([[0.0]]), v0=4.0, j0=0)
    bundle = mb.simulate(spec, 5.0, 0.5, path_rng(1, 0))
    assert np.allclose(bundle.v, 4.0 * np.exp(-0.3 * bundle.grid), rtol=1e-13)


def test_return_mean_formula():
    spec = arbitration_scenario(mu=[0.1, -0.2, 0.05], beta=[-0.5, 0.3, 0.2], rho=[0.0, -0.4, 0.1])
    vecs, _ = mb.stationary_moment_vectors(spec, 1)
    expect = 2.0 * (spec.mu @ spec.pi + spec.beta @ vecs[1])
    assert mb.return_mean(spec, 2.0) == pytest.approx(expect, rel=1e-13)
    lr = mb.logreturn_moments(spec, 2.0)
    assert lr.mean == pytest.approx(expect) and math.isnan(lr.second_moment) and lr.cov_squared is None
    r = 1.0
    vals = np.array([g for g in (mb.run_path(spec, path_rng(41, i), np.array([0.0, r])).g[1] for i in range(6000))])
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - mb.return_mean(spec, r)) < 3 * se


def test_martingale_price_moments():
    spec = figure2(mu=(0.0, 0.0, 0.0))
    ev = mb.stationary_moment(spec, 1)[0]
    lr = mb.logreturn_moments(spec, 1.5)
    assert lr.mean == 0.0 and lr.cov_disjoint == 0.0
    assert lr.second_moment == pytest.approx(1.5 * ev, rel=1e-14)
    with pytest.raises(ValueError, match="mu = beta = rho = 0"):
        mb.squared_return_coefficients(figure2(), 1.0, 2.0)
    a, b, const = mb.squared_return_coefficients(spec, 1.0, 2.0)
    assert const == pytest.approx(ev**2, rel=1e-14) and a.shape == (3,) and b.shape == (3,)


def test_simulated_paths(fig2):
    bundle = mb.simulate(fig2, 40.0, 0.5, path_rng(42, 0))
    assert np.all(bundle.v > 0) and bundle.eta_tilde[0] == 0.0 and bundle.g[0] == 0.0
    ev = bundle.events
    drv = ev.kind == 0
    # driver jumps raise V by the raw subordinator jump
    assert np.allclose(ev.dv[drv], ev.raw[drv], rtol=1e-9, atol=1e-12)
    sw = ~drv
    assert np.allclose(ev.v_post[sw], np.exp(-ev.dxi[sw]) * (ev.v_pre[sw] + ev.deta[sw]), rtol=1e-12)
