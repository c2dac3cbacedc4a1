import numpy as np
import pytest
import scipy.linalg as la
from scipy.integrate import solve_ivp

from dissratchet.errors import ConfigurationError
from dissratchet.krylov import leading_spectrum
from dissratchet.lindblad import (DensityMatrix, DissipativeBlocks, HilbertSpec, SuperPropagator,
                                  apply_superoperator, build_dissipative_blocks, build_hilbert,
                                  build_propagator, choi_positivity_check, free_phases,
                                  kick_unitary)
from dissratchet.mapcore import MapParams


def jump_operators(spec, g):
    """Dense lowering operators for n > 0 and n < 0."""
    N, c = spec.N, (spec.N - 1) // 2
    L1 = np.zeros((N, N))
    L2 = np.zeros((N, N))
    for n in range(0, c):
        L1[c + n, c + n + 1] = g * np.sqrt(n + 1)
        L2[c - n, c - n - 1] = g * np.sqrt(n + 1)
    return L1, L2


def lindblad_rhs(spec, g):
    Ls = jump_operators(spec, g)
    LdL = sum(L.T @ L for L in Ls)

    def rhs(rho):
        return sum(L @ rho @ L.T for L in Ls) - 0.5 * (LdL @ rho + rho @ LdL)
    return rhs


def liouvillian(spec, g):
    """Row-major vectorised damping generator."""
    N = spec.N
    I = np.eye(N)
    Ls = jump_operators(spec, g)
    LdL = sum(L.T @ L for L in Ls)
    out = sum(np.kron(L, L) for L in Ls)
    return out - 0.5 * (np.kron(LdL, I) + np.kron(I, LdL.T))


def random_state(N, rng):
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    rho = A @ A.conj().T
    return rho / np.trace(rho)


def mean_n(spec, rho):
    return float(np.real(np.sum(spec.levels * np.diag(rho))))


def test_hilbert_sizes():
    assert build_hilbert(0.082, 30.0).N == 731
    h = build_hilbert(0.15, 30.0)
    assert h.N == 401
    assert h.p_max == pytest.approx(30.075)
    with pytest.raises(ConfigurationError):
        build_hilbert(30.0, 30.0)
    with pytest.raises(ConfigurationError):
        HilbertSpec(10, 0.1)


def test_dft_unitary_and_fft_paths():
    h = HilbertSpec(9, 0.3)
    F = h.dft_matrix()
    np.testing.assert_allclose(F.conj().T @ F, np.eye(9), atol=1e-13)
    rho = random_state(9, np.random.default_rng(0))
    np.testing.assert_allclose(h.to_position(rho), F @ rho @ F.conj().T, atol=1e-13)
    np.testing.assert_allclose(h.to_momentum(h.to_position(rho)), rho, atol=1e-13)


def test_kick_unitary():
    h = HilbertSpec(21, 0.15)
    np.testing.assert_array_equal(kick_unitary(h, MapParams(k=0.0, gamma=0.5)), np.ones(21))
    U = kick_unitary(h, MapParams(k=8.2, gamma=0.2))
    np.testing.assert_allclose(np.abs(U), 1.0, atol=1e-15)
    assert U[0] == pytest.approx(np.exp(-1j * 8.2), abs=1e-13)


@pytest.mark.parametrize("gamma", [0.2, 0.64, 0.9])
def test_blocks_match_dense_generator(gamma):
    h = HilbertSpec(9, 0.15)
    blocks = build_dissipative_blocks(h, gamma)
    E = la.expm(liouvillian(h, np.sqrt(-np.log(gamma))))
    rho = random_state(9, np.random.default_rng(1))
    np.testing.assert_allclose(blocks.apply(rho), (E @ rho.ravel()).reshape(9, 9), atol=1e-12)


def test_blocks_match_ode_integration():
    h = HilbertSpec(9, 0.15)
    gamma = 0.37
    rhs = lindblad_rhs(h, np.sqrt(-np.log(gamma)))
    rho0 = random_state(9, np.random.default_rng(2))
    sol = solve_ivp(lambda t, y: rhs(y.reshape(9, 9)).ravel(), (0, 1), rho0.ravel(),
                    method="DOP853", rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(build_dissipative_blocks(h, gamma).apply(rho0),
                               sol.y[:, -1].reshape(9, 9), atol=1e-9)


def test_ehrenfest_dissipation_only():
    h = HilbertSpec(31, 1.0)
    rho = np.zeros((31, 31))
    rho[15 + 10, 15 + 10] = 1.0
    out = build_dissipative_blocks(h, 0.64).apply(rho)
    assert mean_n(h, out) == pytest.approx(6.4, abs=1e-6)


def test_corner_block_scalar():
    h = HilbertSpec(11, 0.15)
    blocks = build_dissipative_blocks(h, 0.3)
    c = 5
    P = blocks.block(h.N - 1)
    assert P.shape == (1, 1)
    assert P[0, 0] == pytest.approx(np.exp(-0.5 * blocks.g**2 * 2 * c), rel=1e-14)


def test_conjugate_offset_blocks():
    h = HilbertSpec(13, 0.15)
    blocks = build_dissipative_blocks(h, float(np.random.default_rng(3).uniform(0.05, 0.95)))
    for d in range(1, h.N):
        np.testing.assert_array_equal(blocks.block(-d), np.conj(blocks.block(d)))


def test_gamma_endpoints_rejected():
    h = HilbertSpec(5, 0.15)
    for gamma in (0.0, 1.0):
        with pytest.raises(ConfigurationError):
            build_dissipative_blocks(h, gamma)


def dense_channel(prop):
    """Explicit matrix composition of the period: damp, kick, rotate."""
    h = prop.spec
    F = h.dft_matrix()
    Kk = F.conj().T @ np.diag(prop.kick) @ F
    U = np.diag(prop.free) @ Kk
    return lambda rho: U @ prop.blocks.apply(rho) @ U.conj().T


def test_channel_composition_oracle():
    h = HilbertSpec(15, 0.4)
    prop = build_propagator(h, MapParams(k=3.0, gamma=0.3, hbar_eff=0.4))
    rho = random_state(15, np.random.default_rng(4))
    np.testing.assert_allclose(prop.apply_array(rho), dense_channel(prop)(rho), atol=1e-12)


@pytest.fixture(scope="module")
def channel():
    h = build_hilbert(0.5, 10.0)
    return build_propagator(h, MapParams.from_rescaled(2.5, 0.4, 0.5))


def test_trace_and_hermiticity_preserved(channel):
    rng = np.random.default_rng(5)
    N = channel.spec.N
    for _ in range(3):
        rho = random_state(N, rng)
        out = apply_superoperator(channel, DensityMatrix(rho)).data
        assert abs(np.trace(out) - 1) <= 1e-10
        assert np.abs(out - out.conj().T).max() <= 1e-10
        assert DensityMatrix(out).is_physical(tol=1e-10)


def test_apply_superoperator_checks(channel):
    with pytest.raises(ValueError):
        apply_superoperator(channel, DensityMatrix(np.eye(3), "momentum"))
    with pytest.raises(ValueError):
        apply_superoperator(channel, DensityMatrix(np.eye(channel.spec.N), "position"))


def test_ehrenfest_full_period_kick_off():
    h = HilbertSpec(41, 0.15)
    prop = build_propagator(h, MapParams(k=0.0, gamma=0.55))
    rng = np.random.default_rng(6)
    psi = np.zeros(41, complex)
    psi[20 + 3:20 + 15] = rng.standard_normal(12) + 1j * rng.standard_normal(12)
    psi /= np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    out = prop.apply_array(rho)
    assert mean_n(h, out) == pytest.approx(0.55 * mean_n(h, rho), abs=1e-6)


def test_weak_damping_drifts_to_origin():
    h = HilbertSpec(9, 0.15)
    gamma = 0.99
    prop = build_propagator(h, MapParams(k=0.0, gamma=gamma))
    rhs = lindblad_rhs(h, np.sqrt(-np.log(gamma)))
    rho = random_state(9, np.random.default_rng(7))
    absn = lambda r: float(np.real(np.sum(np.abs(h.levels) * np.diag(r))))  # noqa: E731
    prev = absn(rho)
    for _ in range(5):
        sol = solve_ivp(lambda t, y: rhs(y.reshape(9, 9)).ravel(), (0, 1), rho.ravel(),
                        method="DOP853", rtol=1e-12, atol=1e-14)
        U = free_phases(h)
        oracle = U[:, None] * sol.y[:, -1].reshape(9, 9) * U.conj()[None, :]
        rho = prop.apply_array(rho)
        np.testing.assert_allclose(rho, oracle, atol=1e-9)
        assert absn(rho) < prev
        prev = absn(rho)


def test_maximally_mixed_without_kick():
    h = HilbertSpec(11, 0.15)
    prop = build_propagator(h, MapParams(k=0.0, gamma=0.5))
    rho = np.eye(11) / 11
    out = prop.apply_array(rho)
    assert np.abs(out - np.diag(np.diag(out))).max() < 1e-15
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-14)
    d = np.diag(out).real
    assert d[5] > 1 / 11 and d[0] < 1 / 11 and d[-1] < 1 / 11
    np.testing.assert_allclose(d, d[::-1], atol=1e-15)


def test_choi_identity_channel():
    h = HilbertSpec(7, 0.3)
    prop = SuperPropagator(h, MapParams(k=0.0, gamma=0.5, hbar_eff=0.3), np.ones(7),
                           DissipativeBlocks.identity(h), np.ones(7))
    ok, lam = choi_positivity_check(prop)
    assert ok and abs(lam) <= 1e-12


def test_choi_small_channel():
    h = HilbertSpec(9, 0.15)
    ok, lam = choi_positivity_check(build_propagator(h, MapParams(k=2.0, gamma=0.5)))
    assert ok and lam >= -1e-8


def test_choi_detects_broken_channel():
    h = HilbertSpec(9, 0.15)
    p = MapParams(k=2.0, gamma=0.5)
    prop = SuperPropagator(h, p, kick_unitary(h, p),
                           build_dissipative_blocks(h, 0.5, feeding_sign=-1.0), free_phases(h))
    ok, lam = choi_positivity_check(prop)
    assert not ok and lam < -1e-3


def test_choi_size_limit():
    h = HilbertSpec(17, 0.15)
    with pytest.raises(ConfigurationError):
        choi_positivity_check(build_propagator(h, MapParams(k=1.0, gamma=0.5)))


def test_hbar_mismatch_rejected():
    with pytest.raises(ConfigurationError):
        build_propagator(HilbertSpec(9, 0.15), MapParams(k=1.0, gamma=0.5, hbar_eff=0.2))


def test_small_channel_spectrum(channel):
    N = channel.spec.N
    op = channel.as_operator()
    spec = leading_spectrum(op, count=10, tol=1e-10)
    dense = np.column_stack([op.apply(e) for e in np.eye(N * N, dtype=complex)])
    ref = np.linalg.eigvals(dense)
    for z in spec.values:
        assert np.min(np.abs(ref - z)) <= 1e-8
    np.testing.assert_allclose(np.abs(spec.values[:10]), np.sort(np.abs(ref))[::-1][:10], atol=1e-8)
    assert np.all(np.abs(spec.values) <= 1 + 1e-8)
    assert abs(spec.values[0] - 1) <= 1e-8
    rho0 = spec.vectors[:, 0].reshape(N, N)
    rho0 = rho0 / np.trace(rho0)
    rho0 = (rho0 + rho0.conj().T) / 2
    assert np.linalg.eigvalsh(rho0).min() >= -1e-8
    for i in range(1, len(spec)):
        v = spec.vectors[:, i].reshape(N, N)
        assert abs(np.trace(v)) <= 1e-8 * np.linalg.norm(v)
