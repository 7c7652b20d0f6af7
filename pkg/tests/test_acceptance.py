"""Acceptance criteria, each evaluated at its stated tolerance.

Criteria the model does not reproduce carry ``xfail(strict=True)`` with the
measured reason; they are still evaluated at full tolerance.

Every test prints one ``PASS``/``FAIL`` line naming the criterion; the lines
are also collected into the pytest terminal summary. Expensive scans are
shared through module-scoped fixtures. Run only this module with

    pytest tests/test_acceptance.py -m acceptance
"""

from __future__ import annotations

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from starkqfi.analysis import (
    critical_point,
    initial_state_vector,
    localized_h_scaling,
    particle_scaling,
    plateau,
    qfi_time_series,
    resonance_coefficient,
    resonance_scan,
    size_scaling,
    time_exponent,
    time_grid,
)
from starkqfi.basis import FockBasis, dimension
from starkqfi.gravimetry import PhysicalSetup, sensitivity
from starkqfi.hamiltonian import ModelParams, build_gradient_generator, build_hamiltonian, is_hermitian
from starkqfi.observables import occupancy_series
from starkqfi.propagator import EigenPropagator, KrylovPropagator
from starkqfi.qfi import generator_variance, qfi_fd_oracle, qfi_pure, qfi_value

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]


def report(number: int, title: str, checks: list[tuple[str, bool, str]]) -> bool:
    ok = all(passed for _, passed, _ in checks)
    failed = [f"{label} ({detail})" for label, passed, detail in checks if not passed]
    detail = "; ".join(failed) if failed else "; ".join(f"{l}: {d}" for l, _, d in checks)
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


# -- shared computations --------------------------------------------------------


@pytest.fixture(scope="module")
def hc_L11():
    """Transition point of the L=11, N=2, U=0 chain."""
    return critical_point(L=11, N=2, U=0.0)


@pytest.fixture(scope="module")
def amplification_coefficients():
    """A_r for m in {2, 4} over h in [3, 5] and N in {2, 3, 4} at L=11."""
    h = np.arange(3.0, 5.0001, 0.5)
    return h, {m: resonance_coefficient(h, [2, 3, 4], m=m, L=11) for m in (2, 4)}


# -- criteria -------------------------------------------------------------------


def test_criterion_01_quadratic_time_scaling():
    t = time_grid()
    checks = []
    for h in (0.1, 1.0, 5.0):
        for U in (0.0, 5.0, 20.0):
            q = qfi_time_series(ModelParams(11, 2, 1.0, U, h), t)
            fit = time_exponent(t, q)
            ok = abs(fit.exponent - 2.0) <= 0.05 and fit.r_squared >= 0.99
            checks.append((f"h={h:g},U={U:g}", ok,
                           f"exp={fit.exponent:.3f}, r2={fit.r_squared:.4f}"))
    assert report(1, "F_Q ~ t^2 over the tail window", checks)


@pytest.mark.xfail(strict=True, reason="not reproduced: at h/J=5 the plateau is flat in L (beta ~ 0.003), so a log-log fit has r^2 ~ 0.5 and cannot meet the r^2 >= 0.9 gate")
def test_criterion_02_size_scaling():
    L_list = [7, 9, 11, 13, 15, 17, 19]
    L_ref = int(np.median(L_list))
    hc = critical_point(L=L_ref, N=2, U=0.0)
    at_hc = size_scaling(L_list, N=2, U=0.0, h=hc.h_c)
    localized = size_scaling(L_list, N=2, U=0.0, h=5.0)
    extended = size_scaling(L_list, N=2, U=0.0, h=0.1)
    checks = [
        (f"beta(h_c={hc.h_c:.3f})", abs(at_hc.exponent - 2) <= 0.2 and at_hc.r_squared >= 0.9,
         f"beta={at_hc.exponent:.3f}, r2={at_hc.r_squared:.3f}"),
        ("beta(h=5)", abs(localized.exponent) <= 0.2 and localized.r_squared >= 0.9,
         f"beta={localized.exponent:.4f}, r2={localized.r_squared:.3f}"),
        ("beta(h=0.1)", extended.exponent > 2 and extended.r_squared >= 0.9,
         f"beta={extended.exponent:.3f}, r2={extended.r_squared:.3f}"),
    ]
    assert report(2, "size-scaling exponents", checks)


def test_criterion_03_particle_scaling(hc_L11):
    N_list = [1, 2, 3, 4, 5]
    at_hc = particle_scaling(N_list, L=11, U=0.0, h=hc_L11.h_c)
    localized = particle_scaling(N_list, L=11, U=0.0, h=5.0)
    extended = particle_scaling(N_list, L=11, U=0.0, h=0.1)
    checks = [
        (f"alpha(h_c={hc_L11.h_c:.3f})", abs(at_hc.exponent - 1) <= 0.2 and at_hc.r_squared >= 0.9,
         f"alpha={at_hc.exponent:.3f}, r2={at_hc.r_squared:.3f}"),
        ("alpha(h=5)", abs(localized.exponent - 1) <= 0.2 and localized.r_squared >= 0.9,
         f"alpha={localized.exponent:.3f}, r2={localized.r_squared:.3f}"),
        ("alpha(h=0.1) > alpha(h=5)", extended.exponent > localized.exponent,
         f"{extended.exponent:.3f} vs {localized.exponent:.3f}"),
    ]
    assert report(3, "particle-scaling exponent", checks)


def test_criterion_04_localized_h_dependence():
    fit = localized_h_scaling([3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0], L=11, N=2, U=0.0)
    t = time_grid()
    p11 = plateau((t, qfi_time_series(ModelParams(11, 2, 1.0, 0.0, 5.0), t))).value
    p15 = plateau((t, qfi_time_series(ModelParams(15, 2, 1.0, 0.0, 5.0), t))).value
    rel = abs(p15 - p11) / p11
    checks = [
        ("exponent", abs(fit.exponent + 2) <= 0.3, f"{fit.exponent:.3f}, r2={fit.r_squared:.4f}"),
        ("L=11 vs L=15 at h=5", rel < 0.10, f"relative change {rel:.2e}"),
    ]
    assert report(4, "plateau ~ h^-2 in the localised phase", checks)


@pytest.mark.xfail(strict=True, reason="not reproduced: N=4 A_r has strong maxima off the U=mh lines (e.g. U=1.5h) and off-line cells deviate from 1 by more than 0.1")
def test_criterion_05_resonance_structure():
    U = np.arange(0.0, 20.0001, 0.5)
    h = np.arange(2.0, 5.0001, 0.5)
    scan = resonance_scan(U, h, L=11, N=4)
    step = scan.U_step
    A = scan.A_r
    m_values = (1, 2, 3, 4)
    peaks = scan.peak_lines()
    stray = [(hh, round(u, 2)) for hh, found in peaks.items() for u in found
             if min(abs(u - m * hh) for m in m_values) > step]
    missing = [(m, hh) for hh, found in peaks.items() for m in m_values
               if m * hh <= U[-1] and not any(abs(u - m * hh) <= step for u in found)]
    off = scan.line_distance(m_values) > step
    worst = float(np.max(np.abs(A[off] - 1.0)))
    i, j = np.unravel_index(np.argmax(np.where(off, np.abs(A - 1.0), -1)), A.shape)
    checks = [
        ("maxima on U=mh lines", not stray, f"{len(stray)} off-line maxima, e.g. {stray[:4]}"),
        ("every line has a maximum", not missing, f"missing {missing[:6]}"),
        ("off-resonance A_r = 1 +- 0.1", worst <= 0.1,
         f"max |A_r-1| = {worst:.3f} at U={U[i]:g}, h={h[j]:g}"),
        ("no failed cells", not scan.errors, f"{len(scan.errors)} failed"),
    ]
    assert report(5, "resonance lines in A_r(U, h)", checks)


@pytest.mark.xfail(strict=True, reason="not reproduced: from the staggered state N=2 has no U=4h resonance (A_r ~ 1) and N=3 overshoots (A_r ~ 5.7)")
def test_criterion_06_amplification_magnitude(amplification_coefficients):
    h, coeffs = amplification_coefficients
    k = int(np.argmin(np.abs(h - 4.0)))
    setup = PhysicalSetup()
    checks = []
    for N, series in coeffs[4].items():
        A = float(series[k])
        ratio = sensitivity(setup, A) / sensitivity(setup, 1.0)
        checks.append((f"N={N}", abs(A - 4) <= 1 and abs(ratio - 0.52) <= 0.06,
                       f"A_r={A:.3f}, dg ratio={ratio:.3f}"))
    assert report(6, "A_r = 4 +- 1 at U=4h, h=4", checks)


@pytest.mark.xfail(strict=True, reason="not reproduced: U=4h resonance needs particles four sites apart, absent for N=2, so A_r(m=4) depends strongly on N")
def test_criterion_07_particle_independence(amplification_coefficients):
    h, coeffs = amplification_coefficients
    checks = []
    spreads = {}
    for m in (2, 4):
        stack = np.array([coeffs[m][N] for N in (2, 3, 4)])
        spread = (stack.max(axis=0) - stack.min(axis=0)) / stack[0]
        spreads[m] = spread
        worst = int(np.argmax(spread))
        checks.append((f"m={m} N-spread <= 0.2", bool(np.all(spread <= 0.2)),
                       f"max {spread[worst]:.3f} at h={h[worst]:g}"))
    gap = np.abs(coeffs[2][2] - coeffs[4][2]) / coeffs[2][2]
    limit = np.maximum(spreads[2], spreads[4])
    checks.append(("m=2 and m=4 curves differ", bool(np.any(gap > limit)),
                   f"max gap {gap.max():.3f}"))
    assert report(7, "A_r independent of N, dependent on m", checks)


def test_criterion_08_double_occupancy():
    L, N, h = 11, 3, 4.0
    basis = FockBasis(L, N)
    psi0 = initial_state_vector(basis)
    t = time_grid(100.0, 0.5)
    mean = {}
    for U in (h, 2 * h, 10.0):
        H = build_hamiltonian(ModelParams(L, N, 1.0, U, h), basis)
        _, multi = occupancy_series(EigenPropagator(H).evolve(psi0, t), basis, t)
        mean[U] = float(multi.sum(axis=1).mean())
    checks = [(f"U={U:g}", mean[U] >= 2 * mean[10.0], f"{mean[U]:.3f} vs {mean[10.0]:.3f}")
              for U in (h, 2 * h)]
    assert report(8, "resonant double occupancy", checks)


def _random_config(rng):
    while True:
        L = int(rng.integers(2, 15))
        N = int(rng.integers(1, 6))
        if L >= 2 * N - 1 and dimension(L, N) <= 2000:
            return L, N, float(rng.uniform(0.5, 1.5)), float(rng.uniform(-5, 20)), float(rng.uniform(0.05, 6))


def test_criterion_09_oracle_equivalence():
    rng = np.random.default_rng(909)
    worst_vec = worst_qfi = 0.0
    worst_cfg = None
    for _ in range(50):
        L, N, J, U, h = _random_config(rng)
        t = float(rng.uniform(5, 50))
        basis = FockBasis(L, N)
        build = lambda hh: build_hamiltonian(ModelParams(L, N, J, U, hh), basis)
        H, G = build(h), build_gradient_generator(basis)
        psi0 = initial_state_vector(basis)
        dense = next(EigenPropagator(H, G).pairs(psi0, [t]))
        kry = next(KrylovPropagator(H, G).pairs(psi0, [t]))
        worst_vec = max(worst_vec, np.linalg.norm(dense.psi - kry.psi))
        exact = qfi_pure(kry).qfi
        # keep the phase error (delta * t * ||G||)^2 small without hitting round-off
        delta = 1e-3 / (t * max(L - 1, 1) * N)
        fd = qfi_fd_oracle(build, psi0, t, h, delta).qfi
        rel = abs(exact - fd) / max(abs(fd), 1e-300)
        if rel > worst_qfi:
            worst_qfi, worst_cfg = rel, (L, N, round(J, 3), round(U, 3), round(h, 3), round(t, 2))
    checks = [
        ("Krylov vs dense", worst_vec <= 1e-9, f"max state difference {worst_vec:.1e}"),
        ("derivative QFI vs finite difference", worst_qfi <= 1e-5,
         f"max rel {worst_qfi:.1e} at {worst_cfg}"),
    ]
    assert report(9, "propagator oracle equivalence (50 configs)", checks)


def test_criterion_10_property_suite():
    rng = np.random.default_rng(1010)
    checks = []

    bijective = True
    for L, N in [(1, 3), (3, 2), (4, 3), (6, 4), (8, 5)]:  # exhaustive
        b = FockBasis(L, N)
        bijective &= bool(np.array_equal(b.rank_many(b.states), np.arange(b.dimension)))
    big = FockBasis(24, 6)  # sampled
    idx = rng.integers(0, big.dimension, 500)
    bijective &= bool(np.array_equal(big.rank_many(np.array([big.unrank(i) for i in idx])), idx))
    checks.append(("rank/unrank bijection", bijective, "exhaustive + sampled D=475020"))

    herm = all(
        is_hermitian(build_hamiltonian(ModelParams(L, N, rng.uniform(0, 2), rng.uniform(-10, 10),
                                                   rng.uniform(-5, 5))))
        for L, N in [(2, 1), (3, 2), (5, 3), (9, 4), (14, 5)]
    )
    checks.append(("Hermiticity", herm, "sizes up to D=8568"))

    norm_err = energy_err = 0.0
    for L, N, method in [(5, 2, "dense"), (11, 3, "dense"), (16, 4, "krylov")]:
        basis = FockBasis(L, N)
        H = build_hamiltonian(ModelParams(L, N, 1.0, rng.uniform(0, 10), rng.uniform(0.1, 5)), basis)
        psi0 = initial_state_vector(basis)
        prop = EigenPropagator(H) if method == "dense" else KrylovPropagator(H)
        states = prop.evolve(psi0, np.linspace(0, 100, 11))
        E0 = np.vdot(psi0, H @ psi0).real
        for s in states:
            norm_err = max(norm_err, abs(np.linalg.norm(s) - 1))
            energy_err = max(energy_err, abs(np.vdot(s, H @ s).real - E0) / max(1, abs(E0)))
    checks.append(("norm conservation", norm_err <= 1e-10, f"{norm_err:.1e} over t=100"))
    checks.append(("energy conservation", energy_err <= 1e-8, f"{energy_err:.1e} relative"))

    basis = FockBasis(9, 3)
    H = build_hamiltonian(ModelParams(9, 3, 1.0, 3.0, 1.0), basis)
    G = build_gradient_generator(basis)
    pair = next(KrylovPropagator(H, G).pairs(initial_state_vector(basis), [30.0]))
    ref = qfi_pure(pair).qfi
    gauge = 0.0
    for _ in range(50):
        ph, a = np.exp(1j * rng.uniform(0, 2 * np.pi)), rng.uniform(-50, 50)
        gauge = max(gauge, abs(qfi_value(ph * pair.psi, ph * (pair.dpsi + 1j * a * pair.psi)) - ref))
    checks.append(("gauge/re-origin invariance", gauge <= 1e-10 * max(1, ref), f"{gauge:.1e}"))

    psi0 = rng.normal(size=basis.dimension).astype(complex)
    psi0 /= np.linalg.norm(psi0)
    H = build_hamiltonian(ModelParams(9, 3, 1.0, 2.0, 1.0), basis)
    short = qfi_pure(next(EigenPropagator(H, G).pairs(psi0, [0.05]))).qfi
    law = 4 * 0.05**2 * generator_variance(psi0, G)
    rel = abs(short - law) / law
    checks.append(("short-time law 4t^2 Var(G)", rel <= 1e-3, f"rel {rel:.1e} at t=0.05"))
    assert report(10, "property suite", checks)
