import math

import numpy as np
import pytest

from vortexlab import quadrupole as qp
from vortexlab.torus_kernels import KernelEvalOptions, ParticleEnsemble2D, TorusDomain2D

FAST_OPTS = KernelEvalOptions(image_radius=2)


def coarse_state(M=2.0, backend="direct", amplitude=1.0, spacing=1.0 / 16):
    """Coarser-than-production quadrupole for cheap dynamical checks."""
    return qp.init_quadrupole(
        qp.QuadrupoleSpec(amplitude=amplitude), spacing, qp.StrainParams(M),
        opts=FAST_OPTS, min_particles_per_radius=8)


def single_blob_state(M=0.0, position=(0.5, -0.3), gamma=1.0, sigma=0.05):
    ens = ParticleEnsemble2D([position], [position], [gamma], [sigma])
    return qp.IntermediateState(
        time=0.0, strain=qp.StrainParams(M), domain=TorusDomain2D(),
        ensemble=ens, vorticity0=np.array([gamma / sigma**2]),
        quad_area=sigma**2, spacing=sigma, opts=FAST_OPTS)


class TestStrainParams:
    def test_horizon_identity(self):
        for M in (0.5, 2.0, 4.0, 8.0):
            s = qp.StrainParams(M)
            assert math.isclose(M * s.T_M, math.log1p(M), rel_tol=1e-15)

    def test_zero_strain_horizon_is_one(self):
        assert qp.StrainParams(0.0).T_M == 1.0


class TestInitQuadrupole:
    def test_zero_amplitude_empty_ensemble(self):
        st = qp.init_quadrupole(qp.QuadrupoleSpec(amplitude=0.0), 1.0 / 32,
                                qp.StrainParams(2.0))
        assert st.n_particles == 0
        assert qp.lp_norm(st, 2) == 0.0
        assert qp.gradient_probe(st, 0.05) == 0.0

    def test_total_circulation_exactly_zero(self):
        st = coarse_state()
        assert math.fsum(st.ensemble.circulations) == 0.0

    def test_under_resolved_spacing_rejected(self):
        with pytest.raises(qp.UnderResolvedBump):
            qp.init_quadrupole(qp.QuadrupoleSpec(), 1.0 / 8, qp.StrainParams(2.0))
        with pytest.raises(qp.UnderResolvedBump):
            qp.init_quadrupole(qp.QuadrupoleSpec(), 0.3, qp.StrainParams(2.0))

    def test_odd_symmetry_of_seeding(self):
        st = coarse_state()
        assert qp.mirror_mismatch(st) == 0.0
        # vorticity values are odd under each mirror
        v = st.vorticity0
        assert np.array_equal(v[st.mirror2], -v)
        assert np.array_equal(v[st.mirror3], -v)

    def test_l1_matches_adaptive_quadrature(self):
        from scipy.integrate import dblquad

        spec = qp.QuadrupoleSpec(amplitude=1.0)
        st = qp.init_quadrupole(spec, 1.0 / 64, qp.StrainParams(2.0))
        particle_l1 = qp.lp_norm(st, 1)
        bump, err = dblquad(
            lambda x3, x2: spec.profile(np.hypot(x2 - 1.5, x3 - 1.5))[()],
            1.0, 2.0, 1.0, 2.0, epsabs=1e-12, epsrel=1e-12)
        assert err < 1e-10
        assert abs(particle_l1 - 4.0 * bump) < 1e-6 * 4.0 * bump


class TestStep:
    def test_lone_blob_does_not_self_advect(self):
        st = single_blob_state(M=0.0)
        x0 = st.ensemble.positions[0].copy()
        series = qp.simulate(st, 1.0, dt=0.1)
        drift = np.linalg.norm(series.states[-1].ensemble.positions[0] - x0)
        assert drift < 1e-6

    def test_strain_only_tracer_matches_exact_solution(self):
        M = 2.0
        st = qp.init_quadrupole(qp.QuadrupoleSpec(amplitude=0.0), 1.0 / 32,
                                qp.StrainParams(M))
        a = np.array([1.3, -0.7])
        st = qp.add_tracers(st, a)
        t_end = 0.5
        series = qp.simulate(st, t_end, dt=1e-3)
        tr = series.states[-1].tracers[0]
        exact = np.array([a[0] * math.exp(-M * t_end), a[1]])
        assert np.max(np.abs(tr - exact)) < 1e-8

    def test_circulations_never_change(self):
        st = coarse_state(M=2.0)
        g0 = st.ensemble.circulations.copy()
        series = qp.simulate(st, 0.2, dt=0.05)
        assert np.array_equal(series.states[-1].ensemble.circulations, g0)

    def test_cfl_guard(self):
        st = coarse_state(M=4.0)
        with pytest.raises(qp.CFLViolation):
            qp.step(st, 0.05)

    def test_blowup_guard(self):
        st = qp.init_quadrupole(qp.QuadrupoleSpec(amplitude=0.0), 1.0 / 32,
                                qp.StrainParams(0.0))
        st = qp.add_tracers(st, [(8.0, 8.0)])
        with pytest.raises(qp.BlowupGuard):
            qp.step(st, 0.05)

    def test_backends_agree_on_short_run(self):
        dom = TorusDomain2D(8.0)
        kw = dict(spacing=1.0 / 32, strain=qp.StrainParams(2.0), domain=dom,
                  grid_resolution=512)
        sd = qp.init_quadrupole(qp.QuadrupoleSpec(), backend="direct",
                                opts=FAST_OPTS, **kw)
        sg = qp.init_quadrupole(qp.QuadrupoleSpec(), backend="grid", **kw)
        end_d = qp.simulate(sd, 0.2, dt=0.05).states[-1]
        end_g = qp.simulate(sg, 0.2, dt=0.05).states[-1]
        delta = np.max(np.abs(end_d.ensemble.positions - end_g.ensemble.positions))
        scale = np.max(np.abs(end_d.ensemble.positions))
        assert delta < 1e-3 * scale


class TestLpNorm:
    def test_l1_constant_in_time(self):
        st = coarse_state(M=4.0)
        series = qp.simulate(st, st.strain.T_M, dt=st.strain.T_M / 20)
        l1 = [qp.lp_norm(s, 1) for s in series.states]
        assert np.max(np.abs(np.array(l1) / l1[0] - 1.0)) < 1e-12

    def test_linf_growth_exact(self):
        st = coarse_state(M=4.0)
        end = qp.simulate(st, 0.25, dt=0.025).states[-1]
        expect = math.exp(4.0 * 0.25) * np.max(np.abs(st.vorticity0))
        assert math.isclose(qp.lp_norm(end, math.inf), expect, rel_tol=1e-12)

    def test_l2_ratio_sqrt_five_at_horizon(self):
        M = 4.0
        st = coarse_state(M=M)
        TM = st.strain.T_M
        end = qp.simulate(st, TM, dt=TM / 20).states[-1]
        ratio = qp.lp_norm(end, 2) / qp.lp_norm(st, 2)
        # exp(M T_M / 2) = sqrt(1 + M)
        assert math.isclose(ratio, math.sqrt(5.0), rel_tol=1e-12)

    def test_general_p_law(self):
        M, p, t = 2.0, 3.0, 0.3
        st = coarse_state(M=M)
        end = qp.simulate(st, t, dt=0.05).states[-1]
        ratio = qp.lp_norm(end, p) / qp.lp_norm(st, p)
        assert math.isclose(ratio, math.exp(M * (p - 1) / p * t), rel_tol=1e-12)


class TestFlowMapJacobian:
    def test_identity_at_t0(self):
        st = coarse_state(M=2.0)
        st = qp.seed_jacobian_tracers(st, (1.5, 1.5), 1e-3)
        assert math.isclose(qp.flow_map_jacobian(st, (1.5, 1.5), 1e-3), 1.0,
                            rel_tol=1e-12)

    def test_strain_only_exact_determinant(self):
        M = 2.0
        st = qp.init_quadrupole(qp.QuadrupoleSpec(amplitude=0.0), 1.0 / 32,
                                qp.StrainParams(M))
        st = qp.seed_jacobian_tracers(st, (1.5, 1.5), 1e-3)
        TM = st.strain.T_M
        end = qp.simulate(st, TM, dt=TM / 16).states[-1]
        det = qp.flow_map_jacobian(end, (1.5, 1.5), 1e-3)
        assert abs(det - math.exp(-M * TM)) < 1e-8

    def test_missing_tracers_raise(self):
        st = coarse_state()
        with pytest.raises(qp.TracersNotSeeded):
            qp.flow_map_jacobian(st, (1.5, 1.5), 1e-3)


class TestSupportBounds:
    def test_initial_support_in_box(self):
        b = qp.support_bounds(coarse_state())
        assert 1.0 <= b.min_x2 <= b.max_x2 <= 2.0
        assert 1.0 <= b.min_x3 <= b.max_x3 <= 2.0

    def test_no_strain_support_stays_off_axis(self):
        st = coarse_state(M=0.0)
        series = qp.simulate(st, 1.0, dt=0.1)
        for s in series.states:
            b = qp.support_bounds(s)
            assert b.min_x2 > 0.25 and b.min_x3 > 0.25
            assert b.max_x2 < 3.0 and b.max_x3 < 3.0


class TestGradientProbe:
    def test_support_intrusion_rejected(self):
        st = coarse_state()
        with pytest.raises(qp.SupportIntrudesProbeBall):
            qp.gradient_probe(st, 1.0)

    def test_no_strain_probe_is_stable(self):
        st = coarse_state(M=0.0)
        delta = 0.1
        p0 = qp.gradient_probe(st, delta)
        series = qp.simulate(st, 1.0, dt=0.1)
        vals = [qp.gradient_probe(s, delta) for s in series.states]
        assert all(0.5 * p0 <= v <= 2.0 * p0 for v in vals)


class TestSymmetryAndRegularity:
    def test_odd_symmetry_preserved_by_dynamics(self):
        st = coarse_state(M=2.0)
        TM = st.strain.T_M
        end = qp.simulate(st, TM, dt=TM / 12).states[-1]
        assert qp.mirror_mismatch(end) < 1e-6

    def test_log_lipschitz_modulus_bounded(self):
        st = coarse_state(M=2.0)
        end = qp.simulate(st, 0.25, dt=0.05).states[-1]
        L = st.domain.half_length
        amp = math.exp(2.0 * end.time) * np.max(np.abs(st.vorticity0))
        rng = np.random.default_rng(4)
        base = rng.uniform(-2.5, 2.5, size=(40, 2))
        ratios = []
        for d in (1e-6, 1e-4, 1e-2, 1.0):
            dirs = rng.normal(size=(40, 2))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            other = base + d * dirs
            ua = qp.FlowSeries([end]).velocity_at(end.time, base)
            ub = qp.FlowSeries([end]).velocity_at(end.time, other)
            du = np.linalg.norm(ua - ub, axis=1)
            ratios.append(np.max(du / (d * (1.0 + math.log(3.0 * L / d)))))
        assert max(ratios) < 2.0 * amp


class TestFlowSeries:
    def test_gap_detection(self):
        st = coarse_state(M=2.0)
        series = qp.simulate(st, 0.2, dt=0.05)
        assert series.at(0.1).time == pytest.approx(0.1)
        with pytest.raises(qp.FlowSeriesGap):
            series.at(0.123)
        with pytest.raises(qp.FlowSeriesGap):
            series.at(0.4)
