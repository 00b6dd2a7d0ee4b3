"""Acceptance checks 1 to 9; each prints a single ``criterion N: PASS|FAIL`` line."""

import contextlib
import json
import math

import mpmath
import numpy as np
import pytest

from msvol import cli, msbns, mscogarch
from msvol import montecarlo as M
from msvol.levy_drivers import JumpLaw, LevyDriverSpec
from msvol.map_engine import BivariateLaw, SwitchJumpLaw, sample_map_path
from msvol.markov_env import GeneratorMatrix
from msvol.numerics import spectral_abscissa
from msvol.streams import path_rng

from conftest import arbitration_scenario, figure1, figure2, single_cogarch

SEED = 20240607


@contextlib.contextmanager
def criterion(n, capsys):
    ok = False
    try:
        yield
        ok = True
    finally:
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'}")


def _z_ok(rows, label):
    rep = M.compare_report(rows)
    assert rep.all_passed, f"{label}: " + "; ".join(f"{r.quantity} z={r.z:.2f}" for r in rep.failures())


def _cogarch_integral(lam, delta, sd):
    mpmath.mp.dps = 25
    a = mpmath.mpf(lam) / mpmath.mpf(delta)
    f = lambda y: mpmath.log(1 + a * y * y) * mpmath.npdf(y, 0, sd)  # noqa: E731
    return float(mpmath.quad(f, [-mpmath.inf, 0, mpmath.inf]))


def test_criterion_1_reduction_identities(capsys):
    with criterion(1, capsys):
        # (a) verdict agrees with the single-regime integral condition
        for lam, delta, sd in ((0.042, 0.9, 1.0), (0.2, 0.9, 1.0), (0.05, 0.95, 1.5), (0.3, 0.5, 2.0), (0.01, 0.99, 0.5)):
            spec = single_cogarch(lam=lam, delta=delta,
                                  driver=LevyDriverSpec(cp_intensity=1.0, jump_law=JumpLaw.normal(0.0, sd)))
            rep = mscogarch.stationarity_check(spec, 0)
            integral = _cogarch_integral(lam, delta, sd)
            assert (rep.verdict == "stationary") == (integral < -math.log(delta))
            assert rep.kappa == pytest.approx(-math.log(delta) - integral, abs=1e-10)
        # (b) product formula for k <= 4
        for beta, lam, delta in ((0.7, 0.042, 0.9), (2.0, 0.01, 0.95), (1.0, 0.02, 0.8)):
            spec = single_cogarch(beta=beta, lam=lam, delta=delta)
            for k in range(1, 5):
                got = mscogarch.stationary_moment(spec, k)[0]
                psi = [mscogarch.psi_matrix(spec, n)[0, 0] for n in range(1, k + 1)]
                ref = math.factorial(k) * math.prod(-beta / p for p in psi)
                assert got == pytest.approx(ref, rel=1e-10)
        # (c) BNS mean equals the subordinator mean
        for lam, drift, c, rate in ((0.01, 0.0, 2.0, 0.1), (0.5, 1.0, 3.0, 2.0), (3.0, 0.2, 0.5, 7.0)):
            sub = LevyDriverSpec(drift=drift, cp_intensity=c, jump_law=JumpLaw.exponential(rate), subordinator=True)
            spec = msbns.MsbnsSpec(lam=[lam], mu=[0.0], beta=[0.0], rho=[0.0], subordinators=(sub,),
                                   q=GeneratorMatrix([[0.0]]))
            assert msbns.stationary_moment(spec, 1)[0] == pytest.approx(drift + c / rate, rel=1e-10)


def _random_generator(rng, n):
    while True:
        q = rng.uniform(0.01, 2.0, (n, n)) * (rng.random((n, n)) < 0.8)
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        try:
            return GeneratorMatrix(q)
        except ValueError:
            continue  # reducible draw


def _random_spec(rng):
    n = int(rng.integers(1, 6))
    law = BivariateLaw(JumpLaw.exponential(rng.uniform(0.5, 20.0)), JumpLaw.exponential(rng.uniform(0.05, 5.0)))
    sw = SwitchJumpLaw.uniform(n, law) if n > 1 and rng.random() < 0.7 else SwitchJumpLaw.zero(n)
    gen = _random_generator(rng, n)
    if rng.random() < 0.5:
        return mscogarch, mscogarch.MscogarchSpec(
            beta=rng.uniform(0.1, 3.0, n), lam=rng.uniform(0.0, 0.1, n), delta=rng.uniform(0.5, 0.99, n),
            driver=LevyDriverSpec(cp_intensity=rng.uniform(0.5, 2.0), jump_law=JumpLaw.normal(0.0, 1.0)),
            q=gen, switch_jumps=sw)
    subs = tuple(LevyDriverSpec(cp_intensity=rng.uniform(0.5, 5.0), jump_law=JumpLaw.exponential(rng.uniform(0.1, 3.0)),
                                subordinator=True) for _ in range(n))
    return msbns, msbns.MsbnsSpec(lam=rng.uniform(0.01, 1.0, n), mu=np.zeros(n), beta=np.zeros(n), rho=np.zeros(n),
                                  subordinators=subs, q=gen, switch_jumps=sw)


def test_criterion_2_matrix_exponent_at_zero(capsys):
    with criterion(2, capsys):
        rng = np.random.default_rng(SEED)
        for _ in range(50):
            model, spec = _random_spec(rng)
            psi0 = model.psi_matrix(spec, 0)
            assert np.array_equal(psi0, spec.q.q.T)
            assert abs(spectral_abscissa(spec.q.q.T)) < 1e-9


def test_criterion_3_uk_reconstruction(capsys):
    with criterion(3, capsys):
        spec = figure1()
        pieces = mscogarch.levy_pieces(spec)
        for i in range(100):
            rng = path_rng(SEED, i)
            path = sample_map_path(pieces, spec.q, spec.switch_jumps, i % 3, 200.0, rng)
            bundle = mscogarch.volatility_along(spec, path, 10.0, np.array([0.0, 200.0]), rng)
            pre, post = mscogarch.uk_representation(spec, path).integrate(10.0)
            assert np.allclose(pre, bundle.events.v_pre, rtol=1e-9, atol=0)
            assert np.allclose(post, bundle.events.v_post, rtol=1e-9, atol=0)


def test_criterion_4_transient_means(capsys):
    with criterion(4, capsys):
        for build, v0 in ((figure1, 10.0), (figure2, 40.0)):
            for j0 in range(3):
                spec = build(v0=v0, j0=j0)
                _z_ok(M.mean_rows(spec, (1.0, 5.0, 20.0), 10_000, SEED + j0), f"{build.__name__} j0={j0 + 1}")


def test_criterion_5_stationary_moments_and_arbitration(capsys):
    with criterion(5, capsys):
        for spec in (figure1(), figure2()):
            rows, _ = M.stationary_moment_rows(spec, 1e4, 2000, SEED)
            _z_ok(rows, type(spec).__name__)
        spec = arbitration_scenario()
        sample = M.run_ensemble(spec, M.Functional("time_average", horizon=1e4), 2000, SEED + 1)
        verdict = M.lower_bound_arbitration(spec, sample)
        passing = [key for key in ("(0,inf)", "(1,inf)") if verdict[key]["pass"]]
        assert passing == ["(0,inf)"] and verdict["selected"] == "(0,inf)"


def test_criterion_6_return_structure(capsys):
    with criterion(6, capsys):
        for spec in (figure1(), figure2(mu=(0.0, 0.0, 0.0))):
            rows, _ = M.return_rows(spec, 1.0, 2.0, 200_000, SEED)
            _z_ok(rows, type(spec).__name__)


def test_criterion_7_compensated_eta(capsys):
    with criterion(7, capsys):
        chk = msbns.compensator_martingale_check(figure2(), 50.0, 10_000, SEED, checkpoints=[1.0, 10.0, 50.0])
        assert chk.passed, chk.to_json()
        assert np.all(chk.stderr > 0)


def test_criterion_8_autocovariance_decay(capsys):
    with criterion(8, capsys):
        for spec, model, top in ((figure1(), mscogarch, 20.0), (figure2(), msbns, 30.0)):
            target = spectral_abscissa(model.psi_matrix(spec, 1))
            lags = tuple(np.arange(0.0, top + 1.0, 2.0))
            analytic = model.stationary_autocov(spec, lags)
            assert M.decay_slope(lags, analytic) == pytest.approx(target, rel=0.10)
            fn = M.Functional("autocov", horizon=1e4, lags=lags, dt=0.5)
            est = M.autocov_estimates(M.run_ensemble(spec, fn, 1000, SEED))
            assert M.decay_slope(lags, [e.mean for e in est]) == pytest.approx(target, rel=0.10)


def test_criterion_9_validate_is_deterministic(capsys, tmp_path):
    with criterion(9, capsys):
        for name in ("figure1.json", "figure2.json"):
            outputs = []
            for run, workers in enumerate((1, 1, 4)):
                out = tmp_path / f"{name}-{run}"
                cli.main(["validate", "--config", name, "--paths", "40", "--horizon", "300",
                          "--seed", "11", "--workers", str(workers), "--out", str(out)])
                outputs.append((out / "validation.json").read_bytes())
            assert outputs[0] == outputs[1] == outputs[2]
            assert json.loads(outputs[0])["seed"] == 11
