"""Acceptance gate: each criterion is run at its stated tolerance through the
shipped configs and reported as one PASS/FAIL line in the terminal summary."""
import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from rabistark.cli import main
from rabistark.dynamics import TimeGrid, propagate_state
from rabistark.effective import detunings, k_photon_channel, solve_resonance, stark_shifts
from rabistark.experiments import find_peaks, run_trace
from rabistark.models import (
    IonDriveParams,
    IonFullHamiltonian,
    ModelParams,
    design_ion_drive,
    interaction_picture_hamiltonian,
    ion_calibration,
    ion_full_hamiltonian,
    kHz,
    parity_operator,
    rabi_stark_hamiltonian,
    sigma_x_rabi_stark_hamiltonian,
)
from rabistark.qspace import HilbertSpace, basis_state

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

pytestmark = pytest.mark.slow


def _load_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    cols = {}
    for key in rows[0]:
        vals = [r[key] for r in rows]
        try:
            cols[key] = np.array([float(v) for v in vals])
        except ValueError:
            cols[key] = np.array(vals)
    return cols


def _run(tmp_path, name, *overrides):
    cfg = CONFIGS / f"{name}.toml"
    kind = next(line.split('"')[1] for line in cfg.read_text().splitlines() if line.startswith("kind"))
    out = tmp_path / name
    args = [kind, "--config", str(cfg), "--out", str(out)]
    for ov in overrides:
        args += ["--set", ov]
    rc = main(args)
    assert rc == 0, f"{name} exited with {rc}"
    peaks = _load_csv(out / "peaks.csv") if (out / "peaks.csv").exists() else None
    if peaks is not None and (out / "peaks.csv").read_text().count("\n") < 2:
        peaks = {}
    manifest = json.loads((out / "manifest.json").read_text())
    return _load_csv(out / "data.csv"), peaks, manifest


def test_criterion_1_one_photon_spectrum(tmp_path, acceptance_report):
    checks = []
    scans = {n: _run(tmp_path, f"one_photon_scan_e{n}") for n in range(4)}
    for n, (data, peaks, _) in scans.items():
        target = -0.25 * (2 * n + 1)
        locs = np.atleast_1d(peaks.get("location", np.array([])))
        heights = np.atleast_1d(peaks.get("height", np.array([])))
        near = np.abs(locs - target) <= 0.01
        ok = bool(near.any()) and heights[near].max() >= n + 0.9
        best = f"{locs[near][0]:.4f}, height {heights[near].max():.3f}" if near.any() else "none"
        checks.append((f"JC |e,{n}> at {target}", ok, best))
    # anti-JC features |e,m> -> |g,m-1> lower <a^+a>; they sit at delta+_{m-1} = 0
    for m, target in ((2, 1.25), (3, 0.75)):
        data, _, _ = scans[m]
        x, y = data["detuning"], data["n_mean"]
        dips = find_peaks((x, -y), 0.1)
        hit = [d for d in dips if abs(d.location - target) <= 0.01]
        info = f"{hit[0].location:.4f}, depth {m + hit[0].height:.3f}" if hit else "none"
        checks.append((f"anti-JC |e,{m}> at +{target}", bool(hit), info))
    assert acceptance_report(1, "one-photon spectrum", checks)


def test_criterion_2_three_photon_shifted_resonance(tmp_path, acceptance_report):
    p = ModelParams(omega0=0.0, omega=1.0, gamma=-0.4, g=0.1)
    root = solve_resonance(p, 3, 5, "+", shifted=True, bracket=(2.2, 2.45))[0]
    _, peaks, _ = _run(tmp_path, "three_photon_scan_g0.1")
    main_peak = float(peaks["location"][np.argmax(peaks["height"])])
    checks = [
        ("root vs 2.317", abs(root - 2.317) <= 0.02, f"root {root:.5f}"),
        ("scan peak vs root", abs(main_peak - root) <= 0.02, f"peak {main_peak:.5f}"),
    ]
    assert acceptance_report(2, "three-photon shifted resonance", checks)


def _transfer_index(data, omega0, g):
    T = k_photon_channel(ModelParams(omega0=omega0, omega=1.0, gamma=-0.4, g=g), 5, 3, "+").transfer_time
    return int(np.argmin(np.abs(data["time"] - T))), T


def test_criterion_3_three_photon_transfer(tmp_path, acceptance_report):
    weak, _, m_weak = _run(tmp_path, "three_photon_trace_g0.05_n5")
    strong, _, m_strong = _run(tmp_path, "three_photon_trace_g0.1_n5")
    i, T = _transfer_index(weak, m_weak["config"]["model"]["omega0"], 0.05)
    pe8_T = weak["P_e_8"][i]
    max_weak, max_strong = weak["P_e_8"].max(), strong["P_e_8"].max()
    checks = [
        ("P_e8(T) at g=0.05 >= 0.8", pe8_T >= 0.8, f"{pe8_T:.4f} at T={T:.1f}"),
        ("max P_e8 g=0.1 < g=0.05", max_strong < max_weak, f"{max_strong:.4f} vs {max_weak:.4f}"),
    ]
    for g in ("0.05", "0.1"):
        spectator, _, _ = _run(tmp_path, f"three_photon_trace_g{g}_n4")
        low = spectator["P_g_4"].min()
        checks.append((f"|g,4> retained at g={g}", low >= 0.95, f"min P_g4 {low:.4f}"))
    assert acceptance_report(3, "three-photon transfer quality", checks)


def test_criterion_4_five_photon_peaks(tmp_path, acceptance_report):
    p = ModelParams(omega0=0.0, omega=1.0, gamma=0.9, g=0.1)
    checks = []
    for N0, expected, bare in ((2, -3.227, -3.1), (3, -5.072, -4.9), (4, -6.918, -6.7)):
        unshifted = solve_resonance(p, 5, N0, "-")[0]
        checks.append((f"N0={N0} unshifted {bare}", unshifted == pytest.approx(bare, abs=1e-12),
                       f"{unshifted:.12g}"))
        _, peaks, _ = _run(tmp_path, f"five_photon_scan_N{N0}")
        loc = float(peaks["location"][np.argmax(peaks["height"])])
        checks.append((f"N0={N0} peak {expected}", abs(loc - expected) <= 0.02, f"{loc:.5f}"))
    assert acceptance_report(4, "five-photon peaks", checks)


def test_criterion_5_dissipation(tmp_path, acceptance_report):
    checks = []
    for kappa, target in (("1e-3", 0.10), ("1e-4", 0.60)):
        data, _, _ = _run(tmp_path, f"dissipation_kappa{kappa}")
        peak = data["P_e_8"].max()
        checks.append((f"kappa={kappa} max P_e8 {target}+-0.05", abs(peak - target) <= 0.05,
                       f"{peak:.4f}"))
    data, _, m = _run(tmp_path, "dissipation_kappa0.0")
    cfg = m["config"]
    p = ModelParams(**cfg["model"])
    grid = TimeGrid(0.0, cfg["grid"]["t_end"], cfg["grid"]["n_samples"])
    pure = run_trace(p, ("g", 5), grid, n_max=m["derived"]["n_max"])
    diff = max(float(np.max(np.abs(data[c] - pure[c]))) for c in ("P_g_5", "P_e_8", "n_mean"))
    checks.append(("kappa=0 vs pure <= 1e-6", diff <= 1e-6, f"{diff:.2e}"))
    assert acceptance_report(5, "dissipation", checks)


def test_criterion_6_ion_calibration(acceptance_report):
    d = IonDriveParams(
        nu=kHz(4980), eta=0.1, Omega_r=kHz(2.94), Omega_b=kHz(3.08), Omega_S=kHz(120),
        delta_r=kHz(114.86 + 1.5), delta_b=kHz(114.86 - 1.5), phi_S=0.0,
    )
    cal = ion_calibration(d)
    gamma_kHz = abs(cal.gamma_eff) / (2 * math.pi)
    # balancing ratio applied to the rounded red drive
    Omega_b = 2.94 * cal.balance_ratio
    wR = kHz(1.5)
    target = ModelParams(omega0=3 * wR, omega=wR, gamma=-0.4 * wR, g=0.05 * wR)
    designed = ion_calibration(design_ion_drive(target, nu=d.nu, eta=d.eta, phi_S=0.0))
    Omega_DD = designed.Omega_DD / (2 * math.pi)
    checks = [
        ("gamma_eff = 0.600 kHz", abs(gamma_kHz - 0.6) <= 1e-12, f"{gamma_kHz:.12f}"),
        ("Omega_b within 1% of 3.08", abs(Omega_b - 3.08) <= 0.01 * 3.08, f"{Omega_b:.4f}"),
        ("Omega_DD within 0.1 of 114.86", abs(Omega_DD - 114.86) <= 0.1, f"{Omega_DD:.4f}"),
    ]
    assert acceptance_report(6, "ion calibration", checks)


def _first_max_time(t, y, min_height=0.5):
    above = np.nonzero(y >= min_height)[0]
    if not above.size:
        return math.nan
    start = above[0]
    stop = start
    while stop + 1 < len(y) and y[stop + 1] >= y[stop]:
        stop += 1
    return float(t[stop])


def test_criterion_7_ion_vs_model(tmp_path, acceptance_report):
    _, _, m_a = _run(tmp_path, "ion_one_photon")
    dev = m_a["derived"]["max_deviation"]
    checks = [("one-photon max deviation <= 0.1", dev <= 0.1, f"{dev:.4f}")]
    data, _, _ = _run(tmp_path, "ion_three_photon")
    t = data["time"]
    t_model = _first_max_time(t, data["model_P_minus_0"])
    t_ion = _first_max_time(t, data["ion_P_minus_0"])
    peak_model, peak_ion = data["model_P_minus_0"].max(), data["ion_P_minus_0"].max()
    visible = peak_model >= 0.5 and peak_ion >= 0.5
    checks.append(("|+,3> <-> |-,0> visible in both", visible,
                   f"max P_-0 model {peak_model:.3f}, ion {peak_ion:.3f}"))
    match = math.isfinite(t_model) and abs(t_ion - t_model) <= 0.15 * t_model
    checks.append(("exchange period within 15%", match,
                   f"first maximum model {t_model:.3f} ms, ion {t_ion:.3f} ms"))
    assert acceptance_report(7, "ion vs model", checks)


def test_criterion_8_property_suites(acceptance_report):
    checks = []
    rng = np.random.default_rng(2024)
    space = HilbertSpace(10)
    P = parity_operator(space)
    herm, par = 0.0, 0.0
    for _ in range(10):
        p = ModelParams(omega0=rng.uniform(-4, 4), omega=rng.uniform(0.5, 2),
                        gamma=rng.uniform(-0.9, 0.9), g=rng.uniform(0, 0.5))
        for H in (rabi_stark_hamiltonian(p, space), sigma_x_rabi_stark_hamiltonian(p, space),
                  interaction_picture_hamiltonian(p, space, rng.uniform(0, 100))):
            herm = max(herm, float(np.max(np.abs(H.data - H.data.conj().T))))
        par = max(par, float(np.max(np.abs(rabi_stark_hamiltonian(p, space).commutator(P).data))))
    d = IonDriveParams(nu=kHz(4980), eta=0.1, Omega_r=kHz(2.94), Omega_b=kHz(3.08),
                       Omega_S=kHz(120), delta_r=kHz(116.36), delta_b=kHz(113.36), phi_S=0.0)
    for t in rng.uniform(0, 5, 5):
        H = ion_full_hamiltonian(d, space, t).data
        herm = max(herm, float(np.max(np.abs(H - H.conj().T))))
    checks.append(("Hermiticity <= 1e-12", herm <= 1e-12, f"{herm:.1e}"))
    checks.append(("[H, Pi] = 0 <= 1e-12", par <= 1e-12, f"{par:.1e}"))

    # parity, norm and energy drift on the adaptive path
    tol = 1e-9
    p = ModelParams(omega0=0.8, omega=1.0, gamma=-0.3, g=0.2)
    H = rabi_stark_hamiltonian(p, space)
    psi = basis_state(space, "e", 2)
    tr = propagate_state(lambda t: H, psi, TimeGrid(0.0, 30.0, 61), tol=tol, store_states=True)
    S = tr.states
    parity = np.real(np.einsum("ti,ij,tj->t", S.conj(), P.data, S))
    energy = np.real(np.einsum("ti,ij,tj->t", S.conj(), H.data, S))
    drift = max(np.ptp(parity), np.ptp(energy), tr.info["norm_drift"])
    checks.append(("<Pi>/<H>/norm drift <= 100 tol", drift <= 100 * tol, f"{drift:.1e}"))

    # trace and positivity on a dissipative run
    from rabistark.dynamics import propagate_density
    from rabistark.models import LindbladParams

    small = HilbertSpace(8)
    dm = propagate_density(rabi_stark_hamiltonian(p, small), LindbladParams(0.01),
                           basis_state(small, "g", 3), TimeGrid(0.0, 100.0, 101))
    ok = dm.info["trace_drift"] <= 1e-7 and dm.info["min_eig"] >= -1e-6
    checks.append(("trace/positivity budgets", ok,
                   f"trace {dm.info['trace_drift']:.1e}, min eig {dm.info['min_eig']:.1e}"))

    # k = 1 channel is the first-order detuning set
    exact = True
    for _ in range(50):
        q = ModelParams(omega0=rng.uniform(-4, 4), omega=rng.uniform(0.5, 2),
                        gamma=rng.uniform(-0.9, 0.9), g=rng.uniform(0, 0.5))
        n = int(rng.integers(0, 20))
        for b in "+-":
            ch, dt = k_photon_channel(q, n, 1, b), detunings(q, n)
            exact &= ch.delta_k == dt.delta(b) and ch.Omega_k == dt.Omega_n
    checks.append(("k=1 channel == detunings", exact, "50 random parameter sets"))

    # second-order shifts against exact diagonalisation, g <= 0.05
    worst = 0.0
    big = HilbertSpace(40)
    for q in (ModelParams(omega0=0.5, g=0.02), ModelParams(omega0=2.3, gamma=-0.4, g=0.05),
              ModelParams(omega0=-1.7, gamma=0.3, g=0.03)):
        w, V = np.linalg.eigh(rabi_stark_hamiltonian(q, big).data)
        bare = np.real(np.diag(rabi_stark_hamiltonian(q.replace(g=0.0), big).data))
        for n in range(6):
            s = stark_shifts(q, n)
            dmin = min(abs(x) for m in (n - 1, n) if m >= 0
                       for x in (detunings(q, m).delta_plus, detunings(q, m).delta_minus))
            bound = 10 * q.g**4 * (n + 2) ** 2 / dmin**3
            for label, shift in (("e", s.delta_e), ("g", s.delta_g)):
                i = big.index(label, n)
                j = int(np.argmax(np.abs(V[i]) ** 2))
                worst = max(worst, abs(w[j] - bare[i] - shift) / bound)
    checks.append(("Stark shifts vs oracle within O(g^4)", worst <= 1.0, f"worst/bound {worst:.3f}"))

    # parity-forbidden targets stay empty at first-order transfer times
    q = ModelParams(omega0=2.25, omega=1.0, gamma=-0.25, g=0.02)
    T = k_photon_channel(q, 2, 1, "-").transfer_time
    psi = basis_state(space, "e", 2)
    tr = propagate_state(lambda t: interaction_picture_hamiltonian(q, space, t), psi,
                         TimeGrid(0.0, T, 11), tol=1e-9)
    leak = max(float(np.max(tr[f"P_g_{m}"])) for m in (0, 2, 4))
    checks.append(("even-k leakage <= 1e-4", leak <= 1e-4, f"{leak:.1e}"))
    assert acceptance_report(8, "property suites", checks)


def test_ion_full_kernel_used_for_acceptance_runs():
    # guards against silently falling back to the slow matrix path
    gen = IonFullHamiltonian(
        IonDriveParams(nu=kHz(4980), eta=0.1, Omega_r=1.0, Omega_b=1.0, Omega_S=1.0), HilbertSpace(4)
    )
    rhs, params = gen.rhs_kernel()
    assert callable(rhs) and len(params) == 6
