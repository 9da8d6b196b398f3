"""Quick end-to-end check of the Python bindings.

Build and install first:  pip install ./crates/py  (or `maturin develop -m crates/py/Cargo.toml`)
"""

import json
import math

import risdoa


def main():
    geo = risdoa.Geometry.nulra(16, sigma=0.1, seed=3)
    assert len(geo.positions) == 16
    a = geo.steering_vector(20.0)
    assert all(abs(abs(x) - 1.0) < 1e-12 for x in a)

    ula = risdoa.Geometry.ula(8)
    t = ula.transformation()
    assert all(abs(t[i][j] - (1.0 if i == j else 0.0)) < 1e-9 for i in range(8) for j in range(8))

    gamma = risdoa.gamma_from_snr(20.0, 32, 3)
    assert math.isclose(gamma * gamma, 10 ** (-0.096 * 20 + 5.5722), rel_tol=1e-12)

    # Noiseless single target on the ideal array: the estimate should land on it.
    config = {"sigma": 0.0, "targets_deg": [12.5], "snr_db": None, "gamma": 1.0}
    trial = risdoa.Trial(json.dumps(config), 0)
    angles, deficit = trial.estimate("proposed")
    assert deficit == 0 and abs(angles[0] - 12.5) < 0.01, angles

    angles, deficit, ratio = risdoa.estimate_doa(
        trial.received, trial.combined_matrix, trial.transformation, 1, 1.0
    )
    assert abs(angles[0] - 12.5) < 0.01 and ratio <= 1.001

    angles, _ = risdoa.fft_estimate(trial.received, trial.combined_matrix, 1)
    assert abs(angles[0] - 12.5) < 0.5

    angles, _ = risdoa.omp_estimate(trial.received, trial.combined_matrix, trial.geometry, 1)
    assert abs(angles[0] - 12.5) <= 0.5

    assert math.isclose(risdoa.rmse([1.0, 10.0], [10.0, 2.0]), math.sqrt(0.5))

    rows = risdoa.run_benchmark(json.dumps({"trials": 2, "methods": ["fft", "omp"]}))
    assert {r["method"] for r in rows} == {"fft", "omp"}

    try:
        risdoa.Trial('{"n_elemnts": 4}')
    except ValueError as e:
        assert "n_elemnts" in str(e)
    else:
        raise AssertionError("unknown config field accepted")

    print("python smoke test passed")


if __name__ == "__main__":
    main()
