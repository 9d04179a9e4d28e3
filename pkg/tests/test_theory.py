"""Certificate formula checks: the two eta forms against each other, the
implicit ball radius against back-substitution, and the certified-ball report on
real trajectories."""

import math

import numpy as np
import pytest

from dindip import dipnet, flow, inertia, linops, theory, xp


class TestCertificateFormulas:
    def test_unit_spectra_example(self):
        cert = theory.certificate_from_quantities(
            sigmin_j0=1.0, sigmax_j0=1.0, sigmin_a=1.0, sigmax_a=1.0,
            loss0=0.5, eps_norm=0.0, k=1024, n=4, b=0.25,
        )
        assert cert.alpha_star == 1.0
        assert cert.beta_star == 0.5
        assert cert.xi == 1.25
        eta_expected = 4.0 * (1.0 + math.sqrt(2.0)) / 2.0 / 0.75
        assert cert.eta == pytest.approx(eta_expected, rel=1e-15)
        assert cert.eta == pytest.approx(6.43790, abs=1e-5)
        assert cert.R_prime == pytest.approx(cert.eta * math.sqrt(1.25 * 0.5), rel=1e-15)
        assert cert.R_prime == pytest.approx(5.0895, abs=2e-3)

    def test_ball_radius_quadratic_root(self):
        # B=1, 1+nD=2, sigmin=4, k=16  ->  R = -1 + sqrt(5)
        r = theory.ball_radius(sigmin_j0=4.0, k=16, n=1, b=1.0, d_bound=1.0)
        assert r == pytest.approx(-1.0 + math.sqrt(5.0), rel=1e-14)

    def test_radius_back_substitution(self):
        # R is the positive root of R * Lip_bound(R) = sigmin/2
        rng = np.random.Generator(np.random.Philox(17))
        for _ in range(50):
            sig = float(rng.uniform(0.05, 3.0))
            k = int(rng.integers(4, 10000))
            n = int(rng.integers(1, 12))
            b = float(rng.uniform(0.1, 1.0))
            r = theory.ball_radius(sig, k, n, b)
            lip = 2.0 * b * (1.0 + n * dipnet.D_INIT_BOUND + r) / math.sqrt(k)
            assert r * lip == pytest.approx(sig / 2.0, rel=1e-12)

    def test_radius_monotone_in_k(self):
        radii = [theory.ball_radius(0.5, k, 10, 0.25) for k in [64, 256, 1024, 4096]]
        assert all(a < b for a, b in zip(radii, radii[1:]))

    def test_r_prime_shrinks_with_sigmin_in_ill_conditioned_regime(self):
        vals = []
        for sig in [0.01, 0.05, 0.2, 0.8]:
            cert = theory.certificate_from_quantities(
                sigmin_j0=sig, sigmax_j0=sig, sigmin_a=1.0, sigmax_a=1.0,
                loss0=1.0, eps_norm=0.0, k=1024, n=4, b=0.25,
            )
            vals.append(cert.R_prime)
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_singular_init_marks_invalid(self):
        cert = theory.certificate_from_quantities(
            sigmin_j0=0.0, sigmax_j0=1.0, sigmin_a=1.0, sigmax_a=1.0,
            loss0=1.0, eps_norm=0.0, k=16, n=2, b=0.25,
        )
        assert not cert.init_ok

    def test_certify_on_instance(self):
        net, problem, cert = xp.make_certified_instance(n=4, k=512, seed=1, offset=0.08)
        assert cert.init_ok
        assert cert.R_prime < cert.R
        assert cert.alpha_star == pytest.approx(cert.sigmin_j0 * cert.sigmin_a, rel=1e-15)
        assert cert.beta_star == pytest.approx(1.0 / (2.0 * cert.alpha_star), rel=1e-15)
        assert cert.xi >= 1.0
        loss0, _ = dipnet.loss_and_grad(net, net.theta0, problem)
        assert cert.loss0 == loss0


class TestGeneralEta:
    def test_certified_parameters_example(self):
        # alpha*=1, beta*=0.5, sigsig=1: min(1/2, 0.5*0.75)=0.375,
        # max(1, 0.5+1/sqrt(2)) ~ 1.20711, eta ~ 6.43790
        eta = theory.general_eta(1.0, 0.5, 1.0, 1.0)
        assert eta == pytest.approx(6.43790, abs=1e-5)

    def test_matches_certified_form_on_random_spectra(self):
        rng = np.random.Generator(np.random.Philox(23))
        for _ in range(100):
            sj = float(10 ** rng.uniform(-2, 1))
            sa = float(10 ** rng.uniform(-2, 1))
            sigsig = sj * sa
            general = theory.general_eta(sigsig, 1.0 / (2.0 * sigsig), sj, sa)
            assert general == pytest.approx(theory.certified_eta(sj, sa), rel=1e-12)

    def test_boundary_rejected(self):
        with pytest.raises(ValueError, match="damping condition violated"):
            theory.general_eta(1.0, 2.0, 1.0, 1.0)
        with pytest.raises(ValueError, match="damping condition violated"):
            theory.general_eta(1.0, 2.5, 1.0, 1.0)
        with pytest.raises(ValueError):
            theory.general_eta(0.0, 0.5, 1.0, 1.0)

    def test_max_structure_insensitive_below_threshold(self):
        # both numerator arguments below 1: doubling them leaves eta unchanged
        # as long as alpha/2 stays the denominator minimum
        base = theory.general_eta(0.1, 0.2, 10.0, 10.0)
        doubled_beta = theory.general_eta(0.1, 0.4, 10.0, 10.0)
        halved_sigma = theory.general_eta(0.1, 0.2, 10.0, 5.0)
        assert base == doubled_beta == halved_sigma


class TestCertifiedBall:
    def test_certified_flow_stays_in_ball(self):
        net, problem, cert = xp.make_certified_instance(n=4, k=512, seed=4, offset=0.08)
        cfg = flow.FlowConfig(alpha=cert.alpha_star, beta=cert.beta_star, t_end=8.0,
                              h=0.02, record_every=1000)
        res = flow.integrate(flow.prepare_flow(net, problem, cfg), net, problem, cfg,
                             snapshot_every=40)
        report = theory.check_certified_ball(res.theta_snapshots, net, cert)
        assert report.all_ok
        assert report.max_dist <= cert.R_prime
        assert report.min_sigmin >= cert.sigmin_j0 / 2.0

    def test_constant_trajectory_passes(self):
        net, problem, cert = xp.make_certified_instance(n=3, k=128, seed=5)
        report = theory.check_certified_ball([net.theta0, net.theta0], net, cert)
        assert report.all_ok
        assert report.max_dist == 0.0

    def test_certified_theta_rate_with_final_iterate_proxy(self):
        # ||theta(t) - theta_inf|| <= 1.05 R' exp(-sigsig t / 4), theta_inf
        # approximated by the last iterate
        net, problem, cert = xp.make_certified_instance(n=4, k=512, seed=8, offset=0.08)
        sigsig = cert.sigmin_j0 * cert.sigmin_a
        cfg = flow.FlowConfig(alpha=cert.alpha_star, beta=cert.beta_star,
                              t_end=flow.default_t_end(cert, problem), h=0.02,
                              record_every=10**9)
        res = flow.integrate(flow.prepare_flow(net, problem, cfg), net, problem, cfg,
                             snapshot_every=25)
        theta_inf = res.state.theta
        for t, th in res.snapshot_items:
            dist = np.linalg.norm(th - theta_inf)
            assert dist <= 1.05 * cert.R_prime * np.exp(-sigsig * t / 4.0)

    def test_divergent_run_reports_violations(self):
        # uncertified aggressive run: the report flags, nothing raises
        net = dipnet.init_network(16, 1, 4, "sigmoid", 6)
        problem = linops.make_gaussian_problem(4, 3, 6)
        cert = theory.certify_continuous(net, net.theta0, problem)
        config = inertia.OptimizerConfig(alpha=4.0, beta=0.0, s0=2.0, delta=1.9,
                                         max_iters=300, stop_loss_threshold=0.0)
        result = inertia.run(net, problem, config, snapshot_every=1)
        assert result.status == "diverged"
        report = theory.check_certified_ball(result.theta_snapshots, net, cert)
        assert report.dists.shape == report.sigmins.shape
        assert not report.dist_ok.all()


class TestInitSpectrumStats:
    def test_closed_form_oracle_single_neuron(self):
        # k = n = 1, identity activation: sigma(J) = sqrt((w.u)^2 + v^2)
        stats = theory.init_spectrum_stats(k=1, d=3, n=1, act="identity", n_seeds=6, seed0=40)
        for i in range(6):
            net = dipnet.init_network(k=1, d=3, n=1, act="identity", seed=40 + i)
            z = float(net.w0[0] @ net.u)
            expected = math.sqrt(z**2 + float(net.v0[0, 0]) ** 2)
            assert stats.sigmin_values[i] == pytest.approx(expected, rel=1e-12)
            assert stats.opnorm_values[i] == pytest.approx(expected, rel=1e-12)

    def test_threshold_uses_quadrature_moments(self):
        act = dipnet.activation("sigmoid")
        stats = theory.init_spectrum_stats(k=64, d=2, n=3, act=act, n_seeds=2)
        expected = math.sqrt(act.C_phi**2 + act.C_phi_prime**2) / 2.0
        assert stats.sigmin_threshold == pytest.approx(expected, rel=1e-15)

    def test_quantiles_and_fraction(self):
        stats = theory.init_spectrum_stats(k=256, d=2, n=4, act="sigmoid", n_seeds=5)
        q = stats.quantiles()
        assert set(q) == {"sigmin", "opnorm", "x0_norm"}
        assert 0.0 <= stats.frac_sigmin_above <= 1.0

    def test_needs_seeds(self):
        with pytest.raises(ValueError):
            theory.init_spectrum_stats(k=4, d=1, n=2, act="sigmoid", n_seeds=0)


class TestRatePrediction:
    def test_exponent_relation(self):
        cert = theory.certificate_from_quantities(
            sigmin_j0=0.6, sigmax_j0=0.7, sigmin_a=0.5, sigmax_a=1.0,
            loss0=2.0, eps_norm=0.1, k=512, n=4, b=0.25,
        )
        pred = theory.rate_prediction(cert, eps_norm=0.1)
        assert pred.theta_exponent == pytest.approx(pred.loss_exponent / 2.0, rel=1e-15)
        assert pred.loss_prefactor == pytest.approx(cert.xi * cert.loss0, rel=1e-15)
        assert pred.theta_prefactor == cert.R_prime
        assert pred.x_conic_term == "not computed"
        assert pred.loss_bound(0.0) == pytest.approx(pred.loss_prefactor, rel=1e-15)
        assert pred.loss_bound(10.0) < pred.loss_prefactor
