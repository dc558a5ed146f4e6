import numpy as np
import pytest

from dirshift.model import CovariateDesign, ModelSpec, log_posterior, grad_log_posterior
from dirshift import transforms
from dirshift.target import make_target

from test_model import make_params, simulate_Y


def _random_case(rng, variant="intervention"):
    spec = ModelSpec(variant=variant, C=4, K_mean=1,
                     break_index=None if variant == "baseline" else 15)
    params = make_params(spec, rng)
    T = 30
    cov = CovariateDesign(trend=True).build(T)
    Y = simulate_Y(spec, rng, T)
    return spec, params, cov, Y


class TestGradient:
    def test_finite_differences_20_points(self):
        rng = np.random.default_rng(42)
        variants = ["intervention"] * 12 + ["baseline"] * 4 + ["fixed_effect"] * 4
        for variant in variants:
            spec, params, cov, Y = _random_case(rng, variant)
            u0 = transforms.unconstrain(spec, params)
            g = grad_log_posterior(spec, params, cov, Y)
            tgt = make_target(spec, cov, Y)
            eps = 1e-5
            for j in range(u0.size):
                up, um = u0.copy(), u0.copy()
                up[j] += eps
                um[j] -= eps
                fd = (tgt.log_density(up) - tgt.log_density(um)) / (2 * eps)
                denom = max(abs(fd), abs(g[j]), 1e-6 / 1e-4)
                assert abs(g[j] - fd) / denom < 1e-4, \
                    f"{variant} coord {j}: analytic {g[j]}, fd {fd}"

    def test_target_matches_numpy_log_posterior(self):
        # The sampled density is log_posterior plus the transform Jacobian.
        rng = np.random.default_rng(7)
        for variant in ("baseline", "fixed_effect", "intervention"):
            spec, params, cov, Y = _random_case(rng, variant)
            u = transforms.unconstrain(spec, params)
            tgt = make_target(spec, cov, Y)
            _, logjac = transforms.constrain_with_logjac(spec, u)
            direct = log_posterior(spec, params, cov, Y) + logjac
            assert tgt.log_density(u) == pytest.approx(direct, rel=1e-12, abs=1e-9)

    def test_gradient_of_prior_only(self):
        rng = np.random.default_rng(9)
        spec = ModelSpec(variant="intervention", C=4, K_mean=0, break_index=5)
        tgt = make_target(spec, __import__("dirshift.model", fromlist=["CovariateSet"])
                          .CovariateSet.empty(0), np.zeros((0, 4)))
        u = rng.normal(size=tgt.dim)
        f, g = tgt.value_and_grad(u)
        assert np.isfinite(f)
        eps = 1e-5
        for j in range(0, tgt.dim, 3):
            up, um = u.copy(), u.copy()
            up[j] += eps
            um[j] -= eps
            fd = (tgt.log_density(up) - tgt.log_density(um)) / (2 * eps)
            assert g[j] == pytest.approx(fd, rel=1e-4, abs=1e-6)

    def test_sign_symmetry_in_unconstrained_space(self):
        rng = np.random.default_rng(11)
        spec, params, cov, Y = _random_case(rng)
        tgt = make_target(spec, cov, Y)
        layout = transforms.param_layout(spec)
        pos = 0
        slices = {}
        for blk in layout:
            slices[blk.name] = slice(pos, pos + blk.size)
            pos += blk.size
        for _ in range(20):
            u = transforms.unconstrain(spec, make_params(spec, rng))
            u2 = u.copy()
            u2[slices["Delta"]] *= -1
            u2[slices["v_raw"]] *= -1
            assert tgt.log_density(u) == tgt.log_density(u2)
