import numpy as np
import pytest
from hypothesis import given, strategies as st

from quenchlab import freefermion as ff
from quenchlab.errors import DomainError, UnsupportedModelError
from quenchlab.model import ChainSpec, QuenchSpec, TimeGrid, cluster_valid_to

from oracles import Z, evolve_dense, expect, site_op


class TestBdG:
    @pytest.mark.parametrize("h", [0.3, 1.0, 1.7])
    @pytest.mark.parametrize("sector,offset", [("antiperiodic", 1), ("periodic", 0)])
    def test_spectrum_matches_dispersion(self, h, sector, offset):
        N = 12
        sol = ff.solve_bdg(*ff.build_bdg(ChainSpec(N, h=h), sector))
        k = (2 * np.arange(N) + offset) * np.pi / N
        assert np.allclose(sol.E, np.sort(ff.dispersion(h, k)), atol=1e-10)

    def test_bogoliubov_canonical(self):
        sol = ff.solve_bdg(*ff.build_bdg(ChainSpec(10, h=0.6)))
        G, F = sol.G, sol.F
        assert np.allclose(G @ G.T + F @ F.T, np.eye(10), atol=1e-10)
        assert np.allclose(G @ F.T + F @ G.T, 0, atol=1e-10)

    def test_restrictions(self):
        with pytest.raises(UnsupportedModelError):
            ff.build_bdg(ChainSpec(8, delta=-1.0, h=1))
        with pytest.raises(UnsupportedModelError):
            ff.build_bdg(ChainSpec(8, boundary="open", h=1))
        with pytest.raises(DomainError):
            ff.build_bdg(ChainSpec(8, h=1), "twisted")

    def test_symmetry_check(self):
        with pytest.raises(DomainError):
            ff.solve_bdg(np.array([[0, 1], [0, 0]]), np.zeros((2, 2)))

    def test_initial_h_must_vanish(self):
        with pytest.raises(DomainError):
            ff.make_propagator(ChainSpec(8, h=0.1), ChainSpec(8, h=1))


class TestCorrelators:
    @pytest.mark.parametrize("h", [0.4, 1.3])
    def test_zz_against_dense_evolution(self, h):
        N = 8
        times = np.array([0.0, 0.35, 1.1, 2.4])
        states = evolve_dense(N, h, times)
        for i, j in [(0, 4), (1, 3), (2, 7)]:
            op = site_op(Z, i, N) @ site_op(Z, j, N)
            ref = [expect(s, op) for s in states]
            got = ff.zz_correlator(ChainSpec(N, h=h), i, j, times)
            assert np.allclose(got, ref, atol=1e-10)

    def test_t_zero_is_unity(self):
        prop = ff.propagator_for(ChainSpec(10, h=0.8))
        assert ff.string_correlator(prop, 0, 5, 0.0) == pytest.approx(1.0, abs=1e-12)

    def test_contraction_identities(self):
        prop = ff.propagator_for(ChainSpec(10, h=0.8))
        cs = ff.contractions(prop, 1.3)
        # phi+ phi+ = 1 and phi- phi- = -1 on site
        assert np.allclose(np.diag(cs.PP), 1, atol=1e-10)
        assert np.allclose(np.diag(cs.MM), -1, atol=1e-10)

    def test_bad_indices(self):
        prop = ff.propagator_for(ChainSpec(8, h=0.8))
        with pytest.raises(DomainError):
            ff.string_correlator(prop, 3, 3, 0.1)
        with pytest.raises(DomainError):
            ff.contractions(prop, -1.0)

    @given(st.floats(0.1, 2.5), st.floats(0.0, 3.0))
    def test_modulus_bounded(self, h, t):
        prop = ff.propagator_for(ChainSpec(12, h=h))
        v = ff.string_correlator(prop, 0, 6, t)
        s = ff.string_correlator(prop, 0, 6, t, signed=True)
        assert -1e-10 <= v <= 1 + 1e-10
        assert abs(abs(s) - v) < 1e-8


class TestMagnetization:
    def test_matches_exact_sector_average_small_n(self):
        N, h = 8, 0.5
        q = QuenchSpec(ChainSpec(N, h=h), TimeGrid(0, 2.0, 0.25))
        ts = ff.magnetization_cluster(q, sector="both", signed=True)
        ref = ff.zz_correlator(ChainSpec(N, h=h), 0, N // 2, q.tgrid.times)
        assert np.allclose(ts.values ** 2, np.clip(ref, 0, None), atol=1e-10)
        assert ts.valid_to == pytest.approx(cluster_valid_to(q.chain))

    def test_ordered_short_time_decay(self):
        q = QuenchSpec(ChainSpec(64, h=0.3), TimeGrid(0, 4, 0.5))
        ts = ff.magnetization_cluster(q)
        assert ts.values[0] == pytest.approx(1.0)
        assert np.all(ts.values[1:] < 1)
        assert ts.values[-1] < ts.values[1]
        assert ts.meta["engine"] == ff.ENGINE_VERSION

    def test_thermodynamic_limit_rate(self):
        # long-time decay of the ordered quench (known closed form for h < 1)
        h = 0.5
        q = QuenchSpec(ChainSpec(96, h=h), TimeGrid(0, 20, 0.5))
        ts = ff.magnetization_cluster(q)
        k = np.linspace(0, np.pi, 20001)
        eps = ff.dispersion(h, k)
        deps = np.gradient(eps, k)
        cos_theta = (1 - h * np.cos(k)) / np.sqrt(1 + h * h - 2 * h * np.cos(k))
        integrand = np.abs(deps) * np.log(np.abs(cos_theta))
        rate = np.sum((integrand[1:] + integrand[:-1]) / 2 * np.diff(k)) / np.pi
        slope = np.polyfit(ts.times[20:40], np.log(ts.values[20:40]), 1)[0]
        assert slope == pytest.approx(rate, rel=0.02)

    def test_rejects_nonintegrable(self):
        q = QuenchSpec(ChainSpec(8, h=0.5, delta=-1.0), TimeGrid(0, 1, 0.5))
        with pytest.raises(UnsupportedModelError):
            ff.magnetization_cluster(q)


class TestInvariants:
    @given(N=st.sampled_from([4, 6, 10, 16]), h=st.floats(0.0, 3.0),
           sector=st.sampled_from(list(ff.SECTORS)))
    def test_transforms_orthogonal(self, N, h, sector):
        spec = ChainSpec(N, h=h)
        sol = ff.solve_bdg(*ff.build_bdg(spec, sector))
        assert np.allclose(sol.G @ sol.G.T + sol.F @ sol.F.T, np.eye(N), atol=1e-10)
        prop = ff.propagator_for(spec, sector)
        assert np.allclose(prop.T1 @ prop.T1.T + prop.T2 @ prop.T2.T, np.eye(N), atol=1e-10)

    @given(N=st.sampled_from([8, 12, 40]), h=st.floats(0.05, 3.0))
    def test_initial_value_is_one(self, N, h):
        s = ff.magnetization_cluster(QuenchSpec(ChainSpec(N, h=h), TimeGrid(0, 0.5, 0.5)))
        assert s.values[0] == pytest.approx(1.0, abs=1e-10)

    @given(N=st.sampled_from([8, 12, 40]), t=st.floats(0.0, 20.0))
    def test_zero_field_is_frozen(self, N, t):
        prop = ff.propagator_for(ChainSpec(N, h=0.0))
        assert ff.string_correlator(prop, 0, N // 2, t) == pytest.approx(1.0, abs=1e-10)
