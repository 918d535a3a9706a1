"""Smoke test for the `hyperion` extension module.

Build and install it first:

    pip install --no-build-isolation -e crates/py

then run `python python/smoke_test.py` (or `pytest python/`).
"""

import math
import tempfile

import hyperion


def test_orbit_and_kepler():
    orbit = hyperion.Orbit(0.1)
    r, theta = orbit.at(0.0)
    assert abs(r - 0.9) < 1e-12 and theta == 0.0
    _, theta_half = orbit.at(0.5)
    assert abs(theta_half - math.pi) < 1e-9
    ecc, true = hyperion.solve_kepler(0.1, 0.25)
    assert 0.0 < ecc < math.pi and true > ecc


def test_quantum_state_is_unitary():
    params = hyperion.SystemParams(0.5, 0.1, 0.05)
    spec = hyperion.InitialState(10.0, 0.5)
    psi = hyperion.QuantumState(spec, params)
    assert abs(psi.norm_sqr() - 1.0) < 1e-12
    assert abs(psi.mean_jz() - 10.0) < 1e-9
    later, obs = psi.evolve(params, 1.0, record_at=[0.5, 1.0])
    assert obs["tau"] == [0.5, 1.0]
    assert max(abs(d) for d in obs["norm_drift"]) < 1e-9
    assert abs(later.norm_sqr() - 1.0) < 1e-9
    assert isinstance(later.amplitudes()[0], complex)


def test_classical_matches_quantum_at_early_times():
    params = hyperion.SystemParams(0.5, 0.1, 0.05)
    spec = hyperion.InitialState(10.0, 0.5)
    ens = hyperion.Ensemble(spec, params, 20000, 7, sampling="lattice")
    assert len(ens) == 20000
    _, cl = ens.evolve(params, 0.5, record_at=[0.5])
    _, qm = hyperion.QuantumState(spec, params).evolve(params, 0.5, record_at=[0.5])
    assert abs(cl["mean_jz"][0] - qm["mean_jz"][0]) < 0.05


def test_distances_and_noise():
    p = hyperion.ProbabilityVector(0.1, 0, [0.5, 0.5, 0.0])
    q = hyperion.ProbabilityVector(0.1, 0, [0.0, 0.5, 0.5])
    assert abs(hyperion.one_norm(p, q) - 1.0) < 1e-15
    assert abs(p.smoothed(0.2).total() - 1.0) < 1e-12
    noise = hyperion.Noise(1.0, 0.01, seed=3)
    assert abs(noise.diffusion() - 0.01 / 6.0) < 1e-15
    seq = hyperion.correlated_sequence(0.5, 1000, 1)
    assert len(seq) == 1000
    fit = hyperion.fit_power_law([1.0, 2.0, 4.0], [3.0, 12.0, 48.0])
    assert abs(fit["exponent"] - 2.0) < 1e-12


def test_errors_are_python_exceptions():
    try:
        hyperion.SystemParams(0.5, 1.5, 0.05)
    except ValueError as e:
        assert "e" in str(e)
    else:
        raise AssertionError("eccentricity 1.5 accepted")


def test_hyperion_report():
    r = hyperion.hyperion_report()
    assert abs(r["alpha"] - 0.43) < 0.01
    assert 8.5e-58 < r["beta"] < 9.8e-58


def test_run_and_report_roundtrip():
    config = hyperion.preset("chaotic_means")
    config = config.replace("n = 200000", "n = 2000").replace("tau_end = 100.0", "tau_end = 1.0")
    config = config.replace("every = 0.05", "every = 0.25")
    with tempfile.TemporaryDirectory() as d:
        summary = hyperion.run_experiment(config, d + "/run")
        assert "peak_abs_diff" in summary["metrics"]
        report = hyperion.load_report(d + "/run")
        assert report["type"] == "run"


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
    print("python smoke test passed")
