# -*- coding: utf-8 -*-
"""
Tests for gamma-space blending and the training losses, including a
gradient check of the full chain kernel -> rays -> field -> blend -> loss.
"""

import numpy as np
import pytest

from src import autodiff as ad
from src.autodiff import Tensor, grad_check, grad_check_tensors
from src.errors import NonFiniteError, ShapeError
from src.nerf.blur_model import (
    GAMMA,
    alignment_loss,
    blend_blurry,
    gamma_correct,
    gamma_decode,
    gamma_encode,
    reconstruction_loss,
    total_loss,
)
from src.nerf.dsk import DskParams, build_rays, eval_kernel
from src.nerf.field import EncodingConfig, RadianceFieldParams
from src.nerf.renderer import Camera, Intrinsics, look_at, render_ray


class TestGamma:

    def test_known_values(self):
        out = gamma_correct(np.array([0.0, 0.5, 1.0])).data
        np.testing.assert_allclose(out, [0.0, 0.5 ** (1 / 2.2), 1.0], atol=1e-6)
        assert out[1] == pytest.approx(0.72974, abs=1e-4)

    def test_encode_decode_are_inverse(self, rng):
        values = rng.uniform(0, 1, size=(4, 5, 3))
        np.testing.assert_allclose(gamma_decode(gamma_encode(values)), values, atol=1e-12)
        assert GAMMA == 2.2

    def test_negative_input_rejected(self):
        with pytest.raises(ValueError):
            gamma_correct(np.array([-0.1, 0.2]))

    def test_gradient_finite_at_zero(self, float64):
        x = Tensor(np.array([0.0, 0.3]), requires_grad=True)
        ad.backward(ad.sum(gamma_correct(x)))
        assert np.all(np.isfinite(x.grad))
        assert x.grad[1] == pytest.approx(0.3 ** (1 / 2.2 - 1) / 2.2)


class TestBlend:

    def test_blends_irradiance_then_applies_gamma(self):
        colors = Tensor(np.array([[[0.2, 0.2, 0.2], [0.6, 0.6, 0.6]]]))
        weights = Tensor(np.array([[0.5, 0.5]]))
        np.testing.assert_allclose(blend_blurry(colors, weights).data, [[0.4 ** (1 / 2.2)] * 3], atol=1e-6)
        np.testing.assert_allclose(blend_blurry(colors, weights, gamma=False).data, [[0.4] * 3], atol=1e-6)

    def test_single_point_kernel_is_the_gamma_of_its_color(self):
        colors = Tensor(np.array([[[0.1, 0.5, 0.9]]]))
        out = blend_blurry(colors, Tensor(np.array([[1.0]])))
        np.testing.assert_allclose(out.data, [[0.1 ** (1 / 2.2), 0.5 ** (1 / 2.2), 0.9 ** (1 / 2.2)]], atol=1e-6)

    def test_gamma_blend_is_brighter_than_display_blend(self):
        colors = Tensor(np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]]))
        weights = Tensor(np.array([[0.5, 0.5]]))
        linear_mix = blend_blurry(colors, weights).data
        assert np.all(linear_mix > 0.5)

    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            blend_blurry(Tensor(np.ones((1, 2, 3))), Tensor(np.array([[0.5, 0.6]])))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            blend_blurry(Tensor(np.ones((1, 3, 3))), Tensor(np.array([[0.5, 0.5]])))


class TestLosses:

    def test_reconstruction_is_a_mean_of_squared_distances(self):
        pred = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
        obs = np.array([[0.0, 0.0, 0.5], [1.0, 1.0, 1.0]])
        assert reconstruction_loss(Tensor(pred), obs).item() == pytest.approx(0.125)

    def test_reconstruction_errors(self):
        with pytest.raises(ShapeError):
            reconstruction_loss(Tensor(np.zeros((2, 3))), np.zeros((3, 3)))
        with pytest.raises(ValueError):
            reconstruction_loss(Tensor(np.zeros((0, 3))), np.zeros((0, 3)))

    def test_alignment_values(self):
        q_0 = np.array([[3.0, 4.0], [1.0, 1.0]])
        p = np.array([[0.0, 0.0], [1.0, 1.0]])
        delta_o = np.array([[0.0, 0.0, 0.0], [0.0, 0.3, 0.4]])
        assert alignment_loss(q_0, p, delta_o).item() == pytest.approx((5.0 + 10.0 * 0.5) / 2, rel=1e-6)
        assert alignment_loss(q_0, p, delta_o, lambda_o=0.0).item() == pytest.approx(2.5, rel=1e-6)

    def test_alignment_zero_when_anchor_stays(self):
        p = np.array([[2.5, 3.5]])
        assert alignment_loss(p, p, np.zeros((1, 3))).item() == 0.0

    def test_total_loss(self):
        assert total_loss(Tensor(0.5), Tensor(2.0), lambda_a=0.1).item() == pytest.approx(0.7)
        with pytest.raises(NonFiniteError):
            total_loss(Tensor(np.nan), Tensor(1.0))

    def test_blend_gradient(self, rng):
        weights = np.array([[0.3, 0.7], [0.5, 0.5]])
        w = rng.uniform(0.5, 1.5, size=(2, 3))
        colors = rng.uniform(0.1, 0.9, size=(2, 2, 3))
        assert grad_check(lambda c: ad.sum(blend_blurry(c, Tensor(weights)) * w), colors, 1e-6) < 1e-5


class TestFullChainGradient:
    """One pixel, four samples per ray, two kernel points."""

    def test_micro_instance(self, float64):
        rng = np.random.default_rng(31)
        intrinsics = Intrinsics.centered(8, 8, 9.0)
        center = np.array([0.0, -4.0, 0.5])
        camera = Camera(look_at(center, np.zeros(3)), center, intrinsics)
        field = RadianceFieldParams(EncodingConfig(2, 1), width=8, depth=2, color_width=4, rng=rng)
        dsk = DskParams(num_views=1, width=8, height=8, num_points=2, embedding_dim=3, hidden=8, depth=2,
                        o_scale=0.05, rng=rng)
        head = dsk["kernel.head.weight"]
        head.data[:] = rng.normal(scale=0.5, size=head.shape)
        p = np.array([[3.7, 4.2]])
        observed = np.array([[0.4, 0.5, 0.6]])
        views = np.array([0])

        def loss_fn():
            outputs = eval_kernel(dsk, views, p)
            kernel = build_rays(camera, p, outputs, dsk.canonical)
            colors = render_ray(field, kernel.rays, 2.0, 6.0, 4)
            blurry = blend_blurry(colors, kernel.weights)
            align = alignment_loss(kernel.pixels[:, 0], p, outputs.delta_origin[:, 0])
            return total_loss(reconstruction_loss(blurry, observed), align, 0.1)

        tensors = field.parameters() + dsk.parameters()
        assert grad_check_tensors(loss_fn, tensors, step=1e-6, max_coords=8, rng=rng) < 1e-4
