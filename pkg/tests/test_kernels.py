import numpy as np
import pytest

from sospec import kernels
from sospec.backend import HAVE_NUMBA

BACKENDS = ["numpy"] + (["numba"] if HAVE_NUMBA else [])


@pytest.fixture(autouse=True)
def restore_backend():
    before = kernels.active_backend()
    yield
    kernels.set_backend(before)


def _random_case(seed, b=64, n=6, f=13):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=(b, n))
    freq = rng.integers(-2, 3, size=(f, n // 2)).astype(np.float64)
    return z, freq, rng


class TestBackendEquivalence:
    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    def test_block_polar_matches(self):
        z, _, rng = _random_case(0)
        r_np, a_np = kernels._block_polar_fwd_np(z)
        r_nb, a_nb = kernels._block_polar_fwd_nb(z)
        assert np.allclose(r_np, r_nb, atol=1e-14)
        assert np.allclose(a_np, a_nb, atol=1e-14)
        dr = rng.normal(size=r_np.shape)
        da = rng.normal(size=a_np.shape)
        dz_np = kernels._block_polar_bwd_np(z, r_np, dr, da)
        dz_nb = kernels._block_polar_bwd_nb(z, r_nb, dr, da)
        assert np.allclose(dz_np, dz_nb, atol=1e-12)

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    def test_torus_matches(self):
        z, freq, rng = _random_case(1)
        _, angles = kernels._block_polar_fwd_np(z)
        c_np, s_np = kernels._torus_fwd_np(angles, freq)
        c_nb, s_nb = kernels._torus_fwd_nb(angles, freq)
        assert np.allclose(c_np, c_nb, atol=1e-12)
        assert np.allclose(s_np, s_nb, atol=1e-12)
        dc = rng.normal(size=c_np.shape)
        ds = rng.normal(size=s_np.shape)
        da_np = kernels._torus_bwd_np(c_np, s_np, dc, ds, freq)
        da_nb = kernels._torus_bwd_nb(c_nb, s_nb, dc, ds, freq)
        assert np.allclose(da_np, da_nb, atol=1e-12)

    @pytest.mark.skipif(not HAVE_NUMBA, reason="numba unavailable")
    def test_adam_matches_bitwise(self):
        rng = np.random.default_rng(2)
        p0 = rng.normal(size=257)
        g = rng.normal(size=257)
        state = {}
        for name, fn in [("numpy", kernels._adam_step_np), ("numba", kernels._adam_step_nb)]:
            p, m, v = p0.copy(), np.zeros_like(p0), np.zeros_like(p0)
            for t in range(1, 6):
                fn(p, g, m, v, 1e-3, 0.9, 0.999, 1e-8, 1 - 0.9**t, 1 - 0.999**t)
            state[name] = p
        assert np.array_equal(state["numpy"], state["numba"])


class TestKernelSemantics:
    @pytest.mark.parametrize("backend", BACKENDS)
    def test_angles_in_range_and_floor(self, backend):
        kernels.set_backend(backend)
        z = np.array([[0.0, 0.0, 1.0, -1.0]])
        radii, angles = kernels.block_polar_fwd(z)
        assert radii[0, 0] == kernels.RADIUS_FLOOR
        assert angles[0, 0] == 0.0
        assert np.all(angles >= 0.0) and np.all(angles < 2 * np.pi)
        # zero-radius block receives no gradient
        dz = kernels.block_polar_bwd(z, radii, np.ones_like(radii), np.ones_like(angles))
        assert dz[0, 0] == 0.0 and dz[0, 1] == 0.0

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_torus_features_unit_circle(self, backend):
        kernels.set_backend(backend)
        z, freq, _ = _random_case(3)
        _, angles = kernels.block_polar_fwd(z)
        cos_f, sin_f = kernels.torus_fwd(angles, freq)
        assert np.allclose(cos_f**2 + sin_f**2, 1.0, atol=1e-12)

    def test_adam_against_reference_loop(self):
        rng = np.random.default_rng(4)
        p = rng.normal(size=31)
        g = rng.normal(size=31)
        m = np.zeros_like(p)
        v = np.zeros_like(p)
        expect = p.copy()
        em, ev = np.zeros_like(p), np.zeros_like(p)
        lr, b1, b2, eps = 2e-3, 0.9, 0.999, 1e-8
        for t in range(1, 4):
            bc1, bc2 = 1 - b1**t, 1 - b2**t
            kernels.adam_step(p, g, m, v, lr, b1, b2, eps, bc1, bc2)
            for i in range(expect.size):
                em[i] = b1 * em[i] + (1 - b1) * g[i]
                ev[i] = b2 * ev[i] + (1 - b2) * g[i] * g[i]
                expect[i] -= lr * (em[i] / bc1) / (np.sqrt(ev[i] / bc2) + eps)
        assert np.allclose(p, expect, atol=1e-15)

    def test_set_backend_validates(self):
        with pytest.raises(ValueError):
            kernels.set_backend("cuda")
