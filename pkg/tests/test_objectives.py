import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from genretransfer.objectives import (
    CycleBatch,
    LossWeights,
    add_input_noise,
    cycle_loss,
    disc_loss,
    extra_disc_loss,
    gen_adv_loss,
    total_discriminator_loss,
    total_generator_loss,
)

SHAPE = (2, 16, 21, 1)
TOL = 1e-12


def full(v, shape=SHAPE):
    return torch.full(shape, float(v), dtype=torch.float64)


class TestGeneratorAdversarial:
    def test_perfect_fooling(self):
        assert gen_adv_loss(full(1)).item() == 0.0

    def test_all_zero_scores(self):
        assert abs(gen_adv_loss(full(0)).item() - 1.0) < TOL

    def test_half_and_half(self):
        s = full(0)
        s[0] = 1.0
        assert abs(gen_adv_loss(s).item() - 0.5) < TOL

    @settings(max_examples=50)
    @given(arrays(np.float64, (2, 2), elements=st.floats(-3, 3)))
    def test_matches_brute_force(self, s):
        expected = sum((v - 1.0) ** 2 for v in s.ravel()) / s.size
        assert abs(gen_adv_loss(s).item() - expected) < TOL


class TestCycle:
    def test_identity(self):
        x = torch.rand(2, 64, 84, 1, dtype=torch.float64)
        assert cycle_loss(x, x, x, x).item() == 0.0

    def test_ones_vs_zeros(self):
        one, zero = torch.ones(1, 64, 84, 1, dtype=torch.float64), torch.zeros(1, 64, 84, 1, dtype=torch.float64)
        assert abs(cycle_loss(one, zero, one, zero).item() - 2.0) < TOL

    def test_symmetric_in_directions(self):
        g = torch.Generator().manual_seed(0)
        a, ca, b, cb = (torch.rand(1, 64, 84, 1, generator=g, dtype=torch.float64) for _ in range(4))
        assert abs(cycle_loss(a, ca, b, cb).item() - cycle_loss(b, cb, a, ca).item()) < TOL

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            cycle_loss(torch.zeros(1, 64, 84, 1), torch.zeros(2, 64, 84, 1), torch.zeros(1, 64, 84, 1), torch.zeros(1, 64, 84, 1))


class TestTotalGenerator:
    def test_arithmetic(self):
        # adversarial terms 0.3 and 0.4, cycle 0.02, lambda 10
        s_b = torch.tensor([1.0 - np.sqrt(0.3)], dtype=torch.float64)
        s_a = torch.tensor([1.0 - np.sqrt(0.4)], dtype=torch.float64)
        total = total_generator_loss(None, s_b, s_a, LossWeights(10.0), cycle=0.02)
        assert abs(total.item() - 0.9) < TOL

    def test_lambda_zero_is_adversarial_sum(self):
        s = full(0.3)
        total = total_generator_loss(None, s, s, LossWeights(0.0), cycle=5.0)
        assert abs(total.item() - 2 * 0.49) < TOL

    def test_perfect_is_zero(self):
        x = torch.rand(1, 64, 84, 1, dtype=torch.float64)
        batch = CycleBatch(x, x, x, x, x, x)
        assert total_generator_loss(batch, full(1), full(1), LossWeights()).item() == 0.0

    def test_linear_in_lambda(self):
        s_b, s_a = full(0.2), full(0.7)
        lambdas = np.array([0.0, 5.0, 10.0])
        totals = np.array([total_generator_loss(None, s_b, s_a, LossWeights(l), cycle=0.037).item() for l in lambdas])
        slope, intercept = np.polyfit(lambdas, totals, 1)
        assert np.max(np.abs(slope * lambdas + intercept - totals)) < TOL
        assert abs(slope - 0.037) < TOL

    def test_linear_in_gamma_with_extra_terms(self):
        s_b, s_a, e_a, e_b = full(0.2), full(0.7), full(0.1), full(0.4)
        gammas = np.array([0.0, 0.5, 2.0])
        totals = np.array([
            total_generator_loss(None, s_b, s_a, LossWeights(10.0, g), cycle=0.01, extra_scores=(e_a, e_b)).item()
            for g in gammas
        ])
        slope, intercept = np.polyfit(gammas, totals, 1)
        assert np.max(np.abs(slope * gammas + intercept - totals)) < 1e-10
        assert abs(slope - (0.81 + 0.36)) < 1e-10


class TestDiscriminator:
    @pytest.mark.parametrize("real, fake, expected", [(1, 0, 0.0), (0, 1, 1.0), (0.5, 0.5, 0.25)])
    def test_standard(self, real, fake, expected):
        assert abs(disc_loss(full(real), full(fake)).item() - expected) < TOL

    def test_extra(self):
        assert extra_disc_loss(full(1), full(0)).item() == 0.0
        assert abs(extra_disc_loss(full(0.8), full(0.1)).item() - 0.025) < TOL

    @settings(max_examples=30)
    @given(arrays(np.float64, (2, 2), elements=st.floats(-2, 2)), arrays(np.float64, (2, 2), elements=st.floats(-2, 2)))
    def test_extra_is_same_formula(self, r, f):
        assert extra_disc_loss(r, f).item() == disc_loss(r, f).item()
        expected = 0.5 * (np.mean((r - 1) ** 2) + np.mean(f ** 2))
        assert abs(disc_loss(r, f).item() - expected) < TOL

    def test_total_arithmetic(self):
        total = total_discriminator_loss((0.2, 0.3), (0.1, 0.1), LossWeights(gamma_extra=1.0))
        assert abs(total.item() - 0.7) < TOL

    def test_gamma_zero_and_base(self):
        assert abs(total_discriminator_loss((0.2, 0.3), (0.1, 0.1), LossWeights(gamma_extra=0.0)).item() - 0.5) < TOL
        assert total_discriminator_loss((0.2, 0.3), None, LossWeights()).item() == 0.2 + 0.3

    def test_linear_in_gamma(self):
        gammas = np.array([0.0, 1.0, 3.0])
        totals = np.array([total_discriminator_loss((0.2, 0.3), (0.15, 0.05), LossWeights(gamma_extra=g)).item() for g in gammas])
        slope, intercept = np.polyfit(gammas, totals, 1)
        assert abs(slope - 0.2) < 1e-10 and abs(intercept - 0.5) < 1e-10

    @settings(max_examples=30)
    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_nonnegative(self, r, f):
        assert disc_loss(full(r), full(f)).item() >= 0
        assert gen_adv_loss(full(f)).item() >= 0


class TestNoise:
    def test_zero_sigma_is_identity(self):
        x = torch.rand(2, 64, 84, 1)
        assert add_input_noise(x, 0.0) is x

    def test_statistics(self):
        sigma = 0.7
        x = np.zeros(10 ** 6)
        noise = add_input_noise(x, sigma, np.random.default_rng(0)) - x
        assert abs(noise.mean()) < 5 * sigma / 1000
        assert abs(noise.std() - sigma) < 0.01 * sigma

    def test_statistics_torch(self):
        sigma = 3.0
        x = torch.zeros(10 ** 6, dtype=torch.float64)
        noise = add_input_noise(x, sigma, torch.Generator().manual_seed(0)) - x
        assert abs(noise.mean().item()) < 5 * sigma / 1000
        assert abs(noise.std().item() - sigma) < 0.01 * sigma

    def test_same_seed_same_noise(self):
        x = torch.zeros(4, 64, 84, 1)
        a = add_input_noise(x, 1.0, torch.Generator().manual_seed(5))
        b = add_input_noise(x, 1.0, torch.Generator().manual_seed(5))
        assert torch.equal(a, b)

    def test_no_clipping(self):
        x = np.ones(1000)
        assert (add_input_noise(x, 5.0, np.random.default_rng(1)) > 1).any()

    def test_negative_sigma(self):
        with pytest.raises(ValueError):
            add_input_noise(np.zeros(3), -0.1)


def test_weights_validated():
    with pytest.raises(ValueError):
        LossWeights(lambda_cycle=-1)
    with pytest.raises(ValueError):
        LossWeights(sigma_d=-0.5)


def test_cycle_batch_shapes_checked():
    x = torch.zeros(1, 64, 84, 1)
    with pytest.raises(ValueError):
        CycleBatch(x, x, x, x, x, torch.zeros(2, 64, 84, 1))
