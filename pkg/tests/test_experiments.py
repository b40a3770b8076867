import math

import numpy as np
import pytest

from rabistark.dynamics import TimeGrid
from rabistark.effective import k_photon_channel, solve_resonance
from rabistark.experiments import (
    ScanSpec,
    TimeRule,
    auto_n_max,
    channel_table,
    compare_ion_model,
    default_workers,
    find_peaks,
    run_scan,
    run_trace,
)
from rabistark.models import IonDriveParams, LindbladParams, ModelParams, kHz


def test_find_peaks_triangle():
    x = np.linspace(-1, 1, 21)
    y = 1 - np.abs(x - 0.2)
    peaks = find_peaks((x, y), 0.1)
    assert len(peaks) == 1
    assert peaks[0].location == pytest.approx(0.2, abs=1e-12)
    assert peaks[0].height == pytest.approx(1.0, abs=1e-12)
    assert peaks[0].width > 0


def test_find_peaks_parabolic_refinement():
    x = np.linspace(0, 1, 11)
    y = -((x - 0.537) ** 2)
    peaks = find_peaks((x, y), 0.01)
    assert peaks[0].location == pytest.approx(0.537, abs=1e-12)


def test_find_peaks_gaussian_width_and_order():
    x = np.linspace(-5, 5, 2001)
    sigma = 0.3
    y = np.exp(-((x - 2) ** 2) / (2 * sigma**2)) + 0.5 * np.exp(-((x + 1) ** 2) / (2 * sigma**2))
    peaks = find_peaks((x, y), 0.1)
    assert [round(pk.location, 6) for pk in peaks] == [-1.0, 2.0]
    fwhm = 2 * math.sqrt(2 * math.log(2)) * sigma
    assert peaks[1].width == pytest.approx(fwhm, rel=0.01)


def test_find_peaks_flat_and_short():
    x = np.linspace(0, 1, 50)
    assert find_peaks((x, np.full_like(x, 3.0)), 0.1) == []
    assert find_peaks((x[:2], x[:2]), 0.1) == []
    # small wiggles below the prominence threshold are ignored
    assert find_peaks((x, 0.01 * np.sin(40 * x)), 0.1) == []


def test_time_rule_and_spec_validation():
    with pytest.raises(ValueError):
        TimeRule("fixed")
    with pytest.raises(ValueError):
        TimeRule("channel", k=2)
    rule = TimeRule("fixed", T=1.0)
    p = ModelParams(omega0=1.0)
    with pytest.raises(ValueError):
        ScanSpec(p, "omega0", 1.0, 0.0, 0.1, ("e", 0), rule)
    with pytest.raises(ValueError):
        ScanSpec(p, "omega0", 0.0, 1.0, 0.0, ("e", 0), rule)
    with pytest.raises(ValueError):
        ScanSpec(p, "kappa", 0.0, 1.0, 0.1, ("e", 0), rule)
    with pytest.raises(ValueError):
        ScanSpec(p, "omega0", 0.0, 1.0, 0.1, ("x", 0), rule)
    spec = ScanSpec(p, "omega0", 0.0, 1.0, 0.1, ("e", 0), rule)
    assert len(spec.values) == 11 and spec.values[-1] == 1.0
    assert auto_n_max(2, 5) == 17
    assert spec.resolved_n_max() == 11


def test_channel_time_rule():
    p = ModelParams(omega0=2.25, omega=1.0, gamma=-0.25, g=0.02)
    rule = TimeRule("channel", k=1, n=2, branch="-")
    assert rule.resolve(p) == pytest.approx(math.pi / (2 * 0.02 * math.sqrt(3)))


def test_default_workers(monkeypatch):
    monkeypatch.delenv("RABISTARK_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("RABISTARK_WORKERS", "3")
    assert default_workers() == 3
    monkeypatch.setenv("RABISTARK_WORKERS", "zero")
    with pytest.raises(ValueError):
        default_workers()


def test_zero_coupling_scan_is_flat():
    p = ModelParams(omega0=0.0, omega=1.0, gamma=-0.25, g=0.0)
    spec = ScanSpec(p, "detuning", -1.0, 1.0, 0.05, ("e", 2), TimeRule("fixed", T=50.0), n_max=6)
    res = run_scan(spec, workers=1)
    assert np.allclose(res.observable, 2.0, atol=1e-12)
    assert res.peaks == []
    assert not res.skipped.any()
    assert res.convergence["converged"]


def _one_photon_spec(n, start, stop, step=0.01):
    p = ModelParams(omega0=1.0, omega=1.0, gamma=-0.25, g=0.02)
    return ScanSpec(p, "detuning", start, stop, step, ("e", n),
                    TimeRule("channel", k=1, n=n, branch="-"), n_max=n + 6)


def test_one_photon_peak_matches_resonance_root():
    spec = _one_photon_spec(1, -1.0, -0.5)
    res = run_scan(spec, workers=1)
    root = solve_resonance(spec.params, 1, 1, "-")[0]
    # detuning x maps to omega0 = omega (1 - x)
    assert len(res.peaks) >= 1
    main = max(res.peaks, key=lambda pk: pk.height)
    assert main.location == pytest.approx(1 - root, abs=spec.step)
    assert main.height >= 1.9


def test_scan_point_independence_and_workers():
    a = run_scan(_one_photon_spec(0, -0.4, -0.1), workers=1)
    b = run_scan(_one_photon_spec(0, -0.3, 0.0), workers=2)
    shared = np.intersect1d(a.values, b.values)
    assert shared.size > 10
    ia = np.searchsorted(a.values, shared)
    ib = np.searchsorted(b.values, shared)
    assert np.array_equal(a.observable[ia], b.observable[ib])
    c = run_scan(_one_photon_spec(0, -0.4, -0.1), workers=3)
    assert np.array_equal(a.observable, c.observable)


def test_singular_points_are_skipped():
    # a zero-coupling channel has no rate, so no point has an evolution time
    p = ModelParams(omega0=1.0, omega=1.0, gamma=0.0, g=0.0)
    spec = ScanSpec(p, "omega0", 0.5, 1.5, 0.25, ("e", 0), TimeRule("channel", k=1, n=0),
                    n_max=4, recheck=False)
    res = run_scan(spec, workers=1)
    assert res.skipped.all()
    assert np.isnan(res.observable).all()
    assert res.convergence["skip_reasons"]


def test_strong_decay_is_monotone():
    p = ModelParams(omega0=0.0, omega=1.0, gamma=0.0, g=0.0)
    tr = run_trace(p, ("g", 5), TimeGrid(0.0, 5.0, 101), lindblad=LindbladParams(1.0), n_max=8)
    assert np.all(np.diff(tr["n_mean"]) < 0)
    assert tr["n_mean"][-1] == pytest.approx(5 * math.exp(-10), abs=1e-6)


@pytest.mark.slow
def test_five_photon_selectivity():
    # at the N0 = 2 five-photon resonance |g,7> drains while |g,8> stays put
    base = ModelParams(omega0=0.0, omega=1.0, gamma=0.9, g=0.1)
    w0c = solve_resonance(base, 5, 2, "-")[0]
    T = k_photon_channel(base.replace(omega0=w0c), 2, 5, "-").transfer_time
    p = base.replace(omega0=-3.22695)
    grid = TimeGrid(0.0, 2 * T, 801)
    moving = run_trace(p, ("g", 7), grid, n_max=24)
    still = run_trace(p, ("g", 8), grid, n_max=24)
    assert moving["P_g_7"].min() <= 0.1
    assert moving["P_e_2"].max() >= 0.5
    assert still["P_g_8"].min() >= 0.95


def _balanced_drive(eta):
    eps = 120 / 4980
    return IonDriveParams(
        nu=kHz(4980), eta=eta, Omega_r=kHz(3.0), Omega_b=kHz(3.0) * (1 + eps) / (1 - eps),
        Omega_S=kHz(120), delta_r=kHz(116.4), delta_b=kHz(113.4), phi_S=0.0,
    )


def test_ion_compare_trivial_without_sidebands():
    d = _balanced_drive(0.0)
    res = compare_ion_model(d, ("plus", 2), TimeGrid(0.0, 0.2, 201), n_max=6)
    assert res.calibration.model().g == 0.0
    assert res.max_deviation <= 1e-6
    assert res.reference["P_plus_2"] == pytest.approx(np.ones(201), abs=1e-9)


def test_ion_compare_rejects_aliased_sampling():
    with pytest.raises(ValueError, match="aliases"):
        compare_ion_model(_balanced_drive(0.1), ("plus", 2), TimeGrid(0.0, 4.0, 101))


def test_channel_table_rows():
    p = ModelParams(omega0=2.2, omega=1.0, gamma=-0.4, g=0.1)
    rows = channel_table(p, 3, range(9))
    assert len(rows) == 18
    row = next(r for r in rows if r["n"] == 5 and r["branch"] == "+")
    assert row["delta_k"] == pytest.approx(0.0, abs=1e-12)
    assert row["Omega_k"] == pytest.approx(-5.455e-3, abs=5e-7)
