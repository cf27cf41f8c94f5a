import numpy as np
import pytest

from geossl.errors import ConfigurationError, NumericError, ValidationError
from geossl.model import (
    EncoderConfig,
    EncoderParams,
    GeoHeadParams,
    encode,
    encode_backward,
    encode_with_cache,
    backbone_features,
    flatten_arrays,
    geo_logits,
    init_encoder_params,
    init_head,
    momentum_update,
    param_shapes,
    unflatten_arrays,
)


def tiny_config(**overrides):
    base = dict(
        height=8, width=8, channels=1, widths=(4,), embed_dim=8, proj_depth=2,
        activation="tanh",
    )
    base.update(overrides)
    return EncoderConfig(**base)


def tiny_params(seed=0, **overrides):
    cfg = tiny_config(**overrides)
    return init_encoder_params(cfg, np.random.default_rng(seed))


class TestConfig:
    def test_spatial_sizes_halve_with_stride_two(self):
        cfg = EncoderConfig(height=32, width=32, widths=(32, 64))
        assert cfg.spatial_sizes() == [(16, 16), (8, 8)]
        assert cfg.backbone_dim == 64

    def test_rejects_bad_geometry(self):
        with pytest.raises(ConfigurationError):
            EncoderConfig(height=0).validate()
        with pytest.raises(ConfigurationError):
            EncoderConfig(widths=()).validate()
        with pytest.raises(ConfigurationError):
            EncoderConfig(embed_dim=1).validate()
        with pytest.raises(ConfigurationError):
            EncoderConfig(proj_depth=0).validate()
        with pytest.raises(ConfigurationError):
            EncoderConfig(activation="gelu").validate()
        with pytest.raises(ConfigurationError):
            EncoderConfig(kernel=4).validate()

    def test_round_trips_through_dict(self):
        cfg = tiny_config(widths=(3, 5))
        assert EncoderConfig.from_dict(cfg.to_dict()) == cfg


class TestInit:
    def test_shapes_match_declared_spec(self):
        params = tiny_params()
        assert {k: v.shape for k, v in params.arrays.items()} == param_shapes(params.config)
        params.validate()

    def test_biases_start_at_zero(self):
        params = tiny_params()
        for name, arr in params.arrays.items():
            if name.endswith("_b"):
                assert np.all(arr == 0.0)

    def test_deterministic_per_seed(self):
        a, b = tiny_params(seed=7), tiny_params(seed=7)
        for name in a.arrays:
            np.testing.assert_array_equal(a.arrays[name], b.arrays[name])
        c = tiny_params(seed=8)
        assert any(not np.array_equal(a.arrays[n], c.arrays[n]) for n in a.arrays)

    def test_validate_flags_non_finite(self):
        params = tiny_params()
        params.arrays["conv1_w"][0, 0, 0, 0] = np.nan
        with pytest.raises(NumericError, match="conv1_w"):
            params.validate()


class TestEncode:
    def test_rows_are_unit_norm(self, rng):
        params = tiny_params()
        z = encode(params, rng.uniform(0, 1, size=(5, 8, 8, 1)))
        np.testing.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-6)

    def test_duplicated_inputs_give_duplicated_rows(self, rng):
        params = tiny_params()
        row = rng.uniform(0, 1, size=(1, 8, 8, 1))
        z = encode(params, np.concatenate([row, row], axis=0))
        np.testing.assert_array_equal(z[0], z[1])

    def test_batched_equals_one_at_a_time(self, rng):
        """No batch-coupled statistics: each row depends only on itself."""
        params = tiny_params(seed=3)
        batch = rng.uniform(0, 1, size=(4, 8, 8, 1))
        together = encode(params, batch)
        alone = np.vstack([encode(params, batch[i:i + 1]) for i in range(4)])
        np.testing.assert_allclose(together, alone, atol=1e-6)
        feats_together = backbone_features(params, batch)
        feats_alone = np.vstack([backbone_features(params, batch[i:i + 1]) for i in range(4)])
        np.testing.assert_allclose(feats_together, feats_alone, atol=1e-6)

    def test_geometry_mismatch_rejected(self, rng):
        params = tiny_params()
        with pytest.raises(ValidationError):
            encode(params, rng.uniform(size=(2, 9, 8, 1)))

    def test_non_finite_input_names_the_layer(self):
        params = tiny_params()
        bad = np.full((1, 8, 8, 1), np.inf)
        with pytest.raises(NumericError, match="input"):
            encode(params, bad)


class TestEncodeBackward:
    def fd_gradient(self, params, batch, functional, step=1e-5):
        vec, spec = flatten_arrays(params.arrays)
        grad = np.zeros_like(vec)
        for i in range(vec.size):
            up, down = vec.copy(), vec.copy()
            up[i] += step
            down[i] -= step
            f_up = functional(EncoderParams(params.config, unflatten_arrays(up, spec)))
            f_down = functional(EncoderParams(params.config, unflatten_arrays(down, spec)))
            grad[i] = (f_up - f_down) / (2 * step)
        return unflatten_arrays(grad, spec)

    def assert_close_grads(self, analytic, numeric, tol=1e-4):
        for name in analytic:
            a, f = analytic[name], numeric[name]
            denom = np.maximum(np.maximum(np.abs(a), np.abs(f)), 1e-8)
            worst = float(np.max(np.abs(a - f) / denom))
            assert worst < tol, f"{name}: relative error {worst:.3e}"

    def test_embedding_routed_gradient_matches_fd(self, rng):
        params = tiny_params(seed=1)
        batch = rng.uniform(0, 1, size=(2, 8, 8, 1))
        c = rng.normal(size=(2, 8))
        _, _, cache = encode_with_cache(params, batch)
        analytic = encode_backward(cache, d_embedding=c)
        numeric = self.fd_gradient(params, batch, lambda p: float(np.sum(c * encode(p, batch))))
        self.assert_close_grads(analytic, numeric)

    def test_backbone_routed_gradient_matches_fd(self, rng):
        params = tiny_params(seed=2)
        batch = rng.uniform(0, 1, size=(2, 8, 8, 1))
        d = rng.normal(size=(2, 4))
        _, _, cache = encode_with_cache(params, batch)
        analytic = encode_backward(cache, d_backbone=d)
        numeric = self.fd_gradient(
            params, batch, lambda p: float(np.sum(d * backbone_features(p, batch)))
        )
        self.assert_close_grads(analytic, numeric)

    def test_joint_routing_matches_fd(self, rng):
        params = tiny_params(seed=4, widths=(3, 4))
        batch = rng.uniform(0, 1, size=(2, 8, 8, 1))
        c = rng.normal(size=(2, 8))
        d = rng.normal(size=(2, 4))
        _, _, cache = encode_with_cache(params, batch)
        analytic = encode_backward(cache, d_embedding=c, d_backbone=d)

        def functional(p):
            return float(np.sum(c * encode(p, batch)) + np.sum(d * backbone_features(p, batch)))

        self.assert_close_grads(analytic, self.fd_gradient(params, batch, functional))

    def test_requires_an_upstream_gradient(self, rng):
        params = tiny_params()
        _, _, cache = encode_with_cache(params, rng.uniform(size=(1, 8, 8, 1)))
        with pytest.raises(ValidationError):
            encode_backward(cache)


class TestGeoLogits:
    def test_zero_head_gives_zero_logits(self, rng):
        head = init_head(6, 3)
        out = geo_logits(head, rng.normal(size=(4, 6)))
        np.testing.assert_array_equal(out, np.zeros((4, 3)))

    def test_one_hot_row_reads_off_weight_row(self, rng):
        w = rng.normal(size=(5, 3))
        b = rng.normal(size=3)
        head = GeoHeadParams(weight=w, bias=b)
        z = np.eye(5)[[2]]
        np.testing.assert_allclose(geo_logits(head, z), (w[2] + b)[None, :], atol=1e-12)

    def test_matches_elementwise_oracle(self, rng):
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=3)
        z = rng.normal(size=(6, 4))
        head = GeoHeadParams(weight=w, bias=b)
        expect = np.array([[sum(z[i, p] * w[p, j] for p in range(4)) + b[j] for j in range(3)] for i in range(6)])
        np.testing.assert_allclose(geo_logits(head, z), expect, atol=1e-9)

    def test_shape_mismatch_rejected(self, rng):
        head = init_head(4, 3)
        with pytest.raises(ValidationError):
            geo_logits(head, rng.normal(size=(2, 5)))

    def test_head_needs_two_outputs(self):
        with pytest.raises(ConfigurationError):
            init_head(4, 1)


class TestMomentumUpdate:
    def test_m_one_is_identity(self):
        k, q = tiny_params(seed=0), tiny_params(seed=1)
        out = momentum_update(k, q, 1.0)
        for name in k.arrays:
            np.testing.assert_array_equal(out.arrays[name], k.arrays[name])

    def test_m_zero_copies_query(self):
        k, q = tiny_params(seed=0), tiny_params(seed=1)
        out = momentum_update(k, q, 0.0)
        for name in q.arrays:
            np.testing.assert_array_equal(out.arrays[name], q.arrays[name])

    def test_half_mixes_elementwise(self):
        k, q = tiny_params(seed=0), tiny_params(seed=0)
        k.arrays["proj1_b"][:] = 0.0
        q.arrays["proj1_b"][:] = 2.0
        out = momentum_update(k, q, 0.5)
        np.testing.assert_array_equal(out.arrays["proj1_b"], np.full(4, 1.0))

    def test_geometric_convergence(self):
        """After s updates against a fixed target, the gap shrinks by m^s."""
        m = 0.9
        k, q = tiny_params(seed=0), tiny_params(seed=1)
        gap0, _ = flatten_arrays({n: k.arrays[n] - q.arrays[n] for n in k.arrays})
        for s in (1, 5, 20):
            cur = k
            for _ in range(s):
                cur = momentum_update(cur, q, m)
            gap, _ = flatten_arrays({n: cur.arrays[n] - q.arrays[n] for n in cur.arrays})
            assert np.linalg.norm(gap) == pytest.approx(
                m ** s * np.linalg.norm(gap0), rel=1e-6
            )

    def test_m_outside_unit_interval_rejected(self):
        k, q = tiny_params(), tiny_params()
        with pytest.raises(ConfigurationError):
            momentum_update(k, q, 1.5)

    def test_mismatched_parameters_rejected(self):
        k = tiny_params()
        q = tiny_params(widths=(5,))
        with pytest.raises(ValidationError):
            momentum_update(k, q, 0.5)


class TestFlatten:
    def test_round_trip(self, rng):
        arrays = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=4)}
        vec, spec = flatten_arrays(arrays)
        back = unflatten_arrays(vec, spec)
        for name in arrays:
            np.testing.assert_array_equal(back[name], arrays[name])

    def test_length_mismatch_rejected(self, rng):
        vec, spec = flatten_arrays({"a": rng.normal(size=3)})
        with pytest.raises(ValidationError):
            unflatten_arrays(np.append(vec, 0.0), spec)
