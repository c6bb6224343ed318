"""Serialized-model reader, executor, and the inference provider.

Model bytes come from the independent writer in _onnx_build; expected
outputs come from nested-loop convolution oracles (and a torch cross-check
where its padding convention can express the case).
"""

import warnings

import numpy as np
import pytest

from reconaudit import onnx_io
from reconaudit.dataset_io import OnnxProvider
from reconaudit.errors import ModelGraphError, ModelShapeError
from reconaudit.imagecore import RgbImage

import _onnx_build as ob


# ---------------------------------------------------------------------------
# Loop oracles


def conv2d_loop(x, w, b, strides, pads):
    n, c, h, wd = x.shape
    m, c2, kh, kw = w.shape
    assert c == c2
    sh, sw = strides
    pt, pl, pb, pr = pads
    oh = (h + pt + pb - kh) // sh + 1
    ow = (wd + pl + pr - kw) // sw + 1
    xp = np.pad(x.astype(np.float64), ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    out = np.zeros((n, m, oh, ow))
    for ni in range(n):
        for mi in range(m):
            for oi in range(oh):
                for oj in range(ow):
                    acc = 0.0
                    for ci in range(c):
                        for ki in range(kh):
                            for kj in range(kw):
                                acc += xp[ni, ci, oi * sh + ki, oj * sw + kj] * w[mi, ci, ki, kj]
                    out[ni, mi, oi, oj] = acc
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


def convt_loop(x, w, b, strides, pads, output_padding):
    n, c, h, wd = x.shape
    c2, m, kh, kw = w.shape
    assert c == c2
    sh, sw = strides
    pt, pl, pb, pr = pads
    oph, opw = output_padding
    oh = (h - 1) * sh + kh - pt - pb + oph
    ow = (wd - 1) * sw + kw - pl - pr + opw
    out = np.zeros((n, m, oh, ow))
    for ni in range(n):
        for ci in range(c):
            for i in range(h):
                for j in range(wd):
                    v = float(x[ni, ci, i, j])
                    for mi in range(m):
                        for ki in range(kh):
                            for kj in range(kw):
                                oi = i * sh + ki - pt
                                oj = j * sw + kj - pl
                                if 0 <= oi < oh and 0 <= oj < ow:
                                    out[ni, mi, oi, oj] += v * w[ci, mi, ki, kj]
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[None, :, None, None]
    return out


def rnd(rng, *shape):
    return (rng.random(shape).astype(np.float32) - 0.5).astype(np.float32)


def run_single(tmp_path, op_type, feeds, weights=None, input_dims=None, **attrs):
    """Build a one-op model, load it, run it, return the output array."""
    path = tmp_path / "m.onnx"
    specs = [
        (name, input_dims[name] if input_dims else ("N",) + arr.shape[1:])
        for name, arr in feeds.items()
    ]
    ob.single_node_model(path, op_type, specs, weights=weights, **attrs)
    graph = onnx_io.load_model(path)
    return onnx_io.run_graph(graph, feeds)["y"]


# ---------------------------------------------------------------------------
# Wire-format round trips


class TestWireRoundTrip:
    def test_model_envelope_and_value_infos(self, tmp_path):
        path = tmp_path / "m.onnx"
        g = ob.graph(
            nodes=[ob.node("Identity", ["x"], ["y"], name="copy")],
            inputs=[ob.value_info("x", ("N", 3, 8, 8))],
            outputs=[ob.value_info("y", ("N", 3, 8, 8))],
        )
        ob.write_model(path, g, producer="exporter-under-test", opset=13)
        m = onnx_io.load_model(path)
        assert m.producer == "exporter-under-test"
        assert m.opset == 13
        assert m.inputs[0].name == "x"
        assert m.inputs[0].dims == ("N", 3, 8, 8)
        assert m.outputs[0].name == "y"
        assert m.nodes[0].op_type == "Identity"
        assert m.nodes[0].name == "copy"
        assert m.nodes[0].inputs == ("x",)
        assert m.nodes[0].outputs == ("y",)

    def test_attribute_types_round_trip(self, tmp_path):
        path = tmp_path / "m.onnx"
        t = np.arange(4, dtype=np.float32).reshape(2, 2)
        g = ob.graph(
            nodes=[
                ob.node(
                    "Identity",
                    ["x"],
                    ["y"],
                    epsilon=0.125,
                    group=7,
                    auto_pad="NOTSET",
                    pads=[1, 2, 3, 4],
                    scales=[1.5, -2.25],
                    value=t,
                )
            ],
            inputs=[ob.value_info("x", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        ob.write_model(path, g)
        attrs = onnx_io.load_model(path).nodes[0].attrs
        assert attrs["epsilon"] == 0.125
        assert attrs["group"] == 7
        assert attrs["auto_pad"] == "NOTSET"
        assert attrs["pads"] == [1, 2, 3, 4]
        assert attrs["scales"] == [1.5, -2.25]
        assert np.array_equal(attrs["value"], t)

    def test_initializer_raw_and_repeated_encodings_agree(self, tmp_path):
        rng = np.random.default_rng(0)
        w = rnd(rng, 2, 3)
        for raw in (True, False):
            path = tmp_path / f"m{raw}.onnx"
            g = ob.graph(
                nodes=[ob.node("Identity", ["w"], ["y"])],
                inputs=[],
                outputs=[ob.value_info("y", (2, 3))],
                initializers=[ob.tensor("w", w, raw=raw)],
            )
            ob.write_model(path, g)
            got = onnx_io.load_model(path).initializers["w"]
            assert got.dtype == np.float32 and np.array_equal(got, w)

    def test_int64_and_int32_initializers(self, tmp_path):
        shape = np.array([0, -1], dtype=np.int64)
        counts = np.array([[5, 6], [7, 8]], dtype=np.int32)
        for raw in (True, False):
            path = tmp_path / f"m{raw}.onnx"
            g = ob.graph(
                nodes=[ob.node("Identity", ["s"], ["y"])],
                inputs=[],
                outputs=[ob.value_info("y", (2,))],
                initializers=[ob.tensor("s", shape, raw=raw), ob.tensor("c", counts, raw=raw)],
            )
            ob.write_model(path, g)
            inits = onnx_io.load_model(path).initializers
            assert inits["s"].dtype == np.int64 and inits["s"].tolist() == [0, -1]
            assert inits["c"].dtype == np.int32 and inits["c"].tolist() == [[5, 6], [7, 8]]

    def test_packed_dims_variant(self, tmp_path):
        # repeated int64 dims may arrive packed; build that encoding by hand
        w = np.arange(6, dtype=np.float32).reshape(2, 3)
        msg = ob.field_bytes(1, b"".join(ob.varint(d) for d in w.shape))
        msg += ob.field_varint(2, ob.FLOAT)
        msg += ob.field_bytes(9, w.tobytes())
        msg += ob.field_string(8, "w")
        path = tmp_path / "m.onnx"
        g = ob.graph(
            nodes=[ob.node("Identity", ["w"], ["y"])],
            inputs=[],
            outputs=[ob.value_info("y", (2, 3))],
            initializers=[msg],
        )
        ob.write_model(path, g)
        assert np.array_equal(onnx_io.load_model(path).initializers["w"], w)

    def test_unknown_fields_are_skipped(self, tmp_path):
        # a doc_string (field 10 on GraphProto) the reader does not model
        g = ob.graph(
            nodes=[ob.node("Identity", ["x"], ["y"])],
            inputs=[ob.value_info("x", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        g += ob.field_string(10, "ignore me")
        path = tmp_path / "m.onnx"
        ob.write_model(path, g)
        assert onnx_io.load_model(path).nodes[0].op_type == "Identity"


# ---------------------------------------------------------------------------
# Convolutions against loop oracles

CONV_CASES = [
    ((1, 1, 5, 5), (1, 1, 3, 3), (1, 1), (0, 0, 0, 0), True),
    ((2, 3, 8, 7), (4, 3, 3, 3), (1, 1), (1, 1, 1, 1), True),
    ((1, 2, 9, 9), (3, 2, 4, 4), (2, 2), (1, 0, 2, 1), False),
    ((1, 3, 8, 8), (5, 3, 3, 3), (2, 2), (1, 1, 1, 1), True),
    ((2, 2, 6, 6), (2, 2, 1, 1), (3, 3), (0, 0, 0, 0), False),
]

CONVT_CASES = [
    ((1, 1, 4, 4), (1, 1, 3, 3), (1, 1), (0, 0, 0, 0), (0, 0), True),
    ((1, 2, 4, 4), (2, 3, 3, 3), (2, 2), (1, 1, 1, 1), (1, 1), True),
    ((2, 2, 5, 4), (2, 3, 3, 3), (2, 2), (1, 0, 2, 1), (1, 0), False),
    ((1, 3, 3, 3), (3, 2, 4, 4), (2, 2), (1, 1, 1, 1), (0, 0), True),
    ((1, 1, 3, 3), (1, 1, 2, 2), (1, 1), (0, 0, 0, 0), (0, 0), False),
]


class TestConv:
    @pytest.mark.parametrize("xs,ws,strides,pads,use_bias", CONV_CASES)
    def test_matches_loop_oracle(self, tmp_path, xs, ws, strides, pads, use_bias):
        rng = np.random.default_rng(hash((xs, ws)) % 2**32)
        x, w = rnd(rng, *xs), rnd(rng, *ws)
        b = rnd(rng, ws[0]) if use_bias else None
        weights = {"w": w} | ({"b": b} if use_bias else {})
        got = run_single(
            tmp_path, "Conv", {"x": x}, weights=weights,
            strides=list(strides), pads=list(pads),
        )
        want = conv2d_loop(x, w, b, strides, pads)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_matches_torch(self, tmp_path):
        torch = pytest.importorskip("torch")
        rng = np.random.default_rng(3)
        x, w, b = rnd(rng, 2, 3, 8, 8), rnd(rng, 4, 3, 3, 3), rnd(rng, 4)
        got = run_single(
            tmp_path, "Conv", {"x": x}, weights={"w": w, "b": b},
            strides=[2, 2], pads=[1, 1, 1, 1],
        )
        want = torch.nn.functional.conv2d(
            torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b),
            stride=2, padding=1,
        ).numpy()
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_empty_bias_name_means_no_bias(self, tmp_path):
        rng = np.random.default_rng(4)
        x, w = rnd(rng, 1, 2, 5, 5), rnd(rng, 2, 2, 3, 3)
        path = tmp_path / "m.onnx"
        g = ob.graph(
            nodes=[ob.node("Conv", ["x", "w", ""], ["y"], strides=[1, 1], pads=[0, 0, 0, 0])],
            inputs=[ob.value_info("x", ("N", 2, 5, 5))],
            outputs=[ob.value_info("y", ("N",))],
            initializers=[ob.tensor("w", w)],
        )
        ob.write_model(path, g)
        got = onnx_io.run_graph(onnx_io.load_model(path), {"x": x})["y"]
        np.testing.assert_allclose(got, conv2d_loop(x, w, None, (1, 1), (0, 0, 0, 0)), rtol=1e-5, atol=1e-5)

    def test_channel_mismatch_rejected(self, tmp_path):
        rng = np.random.default_rng(5)
        with pytest.raises(ModelGraphError, match="channel mismatch"):
            run_single(
                tmp_path, "Conv", {"x": rnd(rng, 1, 3, 5, 5)},
                weights={"w": rnd(rng, 2, 4, 3, 3)}, strides=[1, 1], pads=[0, 0, 0, 0],
            )

    def test_grouped_and_dilated_rejected(self, tmp_path):
        rng = np.random.default_rng(6)
        x, w = rnd(rng, 1, 2, 5, 5), rnd(rng, 2, 2, 3, 3)
        with pytest.raises(ModelGraphError, match="grouped"):
            run_single(tmp_path, "Conv", {"x": x}, weights={"w": w}, group=2)
        with pytest.raises(ModelGraphError, match="dilated"):
            run_single(tmp_path, "Conv", {"x": x}, weights={"w": w}, dilations=[2, 2])


class TestConvTranspose:
    @pytest.mark.parametrize("xs,ws,strides,pads,outpad,use_bias", CONVT_CASES)
    def test_matches_loop_oracle(self, tmp_path, xs, ws, strides, pads, outpad, use_bias):
        rng = np.random.default_rng(hash((xs, ws, strides)) % 2**32)
        x, w = rnd(rng, *xs), rnd(rng, *ws)
        b = rnd(rng, ws[1]) if use_bias else None
        weights = {"w": w} | ({"b": b} if use_bias else {})
        got = run_single(
            tmp_path, "ConvTranspose", {"x": x}, weights=weights,
            strides=list(strides), pads=list(pads), output_padding=list(outpad),
        )
        want = convt_loop(x, w, b, strides, pads, outpad)
        assert got.shape == want.shape
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_stride_two_doubles_spatial_size(self, tmp_path):
        rng = np.random.default_rng(7)
        got = run_single(
            tmp_path, "ConvTranspose", {"x": rnd(rng, 1, 2, 4, 4)},
            weights={"w": rnd(rng, 2, 3, 3, 3)},
            strides=[2, 2], pads=[1, 1, 1, 1], output_padding=[1, 1],
        )
        assert got.shape == (1, 3, 8, 8)

    def test_matches_torch(self, tmp_path):
        torch = pytest.importorskip("torch")
        rng = np.random.default_rng(8)
        x, w, b = rnd(rng, 1, 2, 4, 4), rnd(rng, 2, 3, 3, 3), rnd(rng, 3)
        got = run_single(
            tmp_path, "ConvTranspose", {"x": x}, weights={"w": w, "b": b},
            strides=[2, 2], pads=[1, 1, 1, 1], output_padding=[1, 1],
        )
        want = torch.nn.functional.conv_transpose2d(
            torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b),
            stride=2, padding=1, output_padding=1,
        ).numpy()
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-5)

    def test_empty_output_rejected(self, tmp_path):
        rng = np.random.default_rng(9)
        with pytest.raises(ModelGraphError, match="empty"):
            run_single(
                tmp_path, "ConvTranspose", {"x": rnd(rng, 1, 1, 2, 2)},
                weights={"w": rnd(rng, 1, 1, 2, 2)}, pads=[4, 4, 4, 4],
            )


# ---------------------------------------------------------------------------
# Pointwise and shape ops


class TestSimpleOps:
    def test_relu(self, tmp_path):
        x = np.array([[-1.0, 0.0, 2.5]], dtype=np.float32)
        got = run_single(tmp_path, "Relu", {"x": x})
        assert got.tolist() == [[0.0, 0.0, 2.5]]

    def test_sigmoid_formula_and_saturation_is_silent(self, tmp_path):
        x = np.array([[0.0, 1.0, -500.0, 500.0]], dtype=np.float32)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            got = run_single(tmp_path, "Sigmoid", {"x": x})
        assert got[0, 0] == 0.5
        assert got[0, 1] == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), rel=1e-6)
        assert got[0, 2] == 0.0
        assert got[0, 3] == 1.0

    def test_exp_overflow_is_silent_inf(self, tmp_path):
        x = np.array([[0.0, 1.0, 1000.0]], dtype=np.float32)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            got = run_single(tmp_path, "Exp", {"x": x})
        assert got[0, 0] == 1.0
        assert got[0, 1] == pytest.approx(np.e, rel=1e-6)
        assert np.isinf(got[0, 2])

    def test_add_mul_broadcast(self, tmp_path):
        rng = np.random.default_rng(10)
        x = rnd(rng, 2, 3, 4)
        c = rnd(rng, 1, 3, 1)
        got_add = run_single(tmp_path, "Add", {"x": x}, weights={"c": c})
        np.testing.assert_allclose(got_add, x + c, rtol=1e-6)
        got_mul = run_single(tmp_path, "Mul", {"x": x}, weights={"c": c})
        np.testing.assert_allclose(got_mul, x * c, rtol=1e-6)

    def test_gemm_trans_b_alpha_beta(self, tmp_path):
        rng = np.random.default_rng(11)
        a, w, c = rnd(rng, 3, 5), rnd(rng, 4, 5), rnd(rng, 4)
        got = run_single(
            tmp_path, "Gemm", {"a": a}, weights={"w": w, "c": c},
            transB=1, alpha=2.0, beta=0.5,
        )
        np.testing.assert_allclose(got, 2.0 * (a @ w.T) + 0.5 * c, rtol=1e-5, atol=1e-6)

    def test_gemm_defaults_no_bias(self, tmp_path):
        rng = np.random.default_rng(12)
        a, w = rnd(rng, 3, 5), rnd(rng, 5, 4)
        got = run_single(tmp_path, "Gemm", {"a": a}, weights={"w": w})
        np.testing.assert_allclose(got, a @ w, rtol=1e-5, atol=1e-6)

    def test_batchnorm_formula(self, tmp_path):
        rng = np.random.default_rng(13)
        x = rnd(rng, 2, 3, 4, 4)
        scale, bias, mean = rnd(rng, 3), rnd(rng, 3), rnd(rng, 3)
        var = (rng.random(3).astype(np.float32) + 0.5).astype(np.float32)
        got = run_single(
            tmp_path, "BatchNormalization", {"x": x},
            weights={"scale": scale, "bias": bias, "mean": mean, "var": var},
            epsilon=1e-3,
        )
        sh = (1, 3, 1, 1)
        want = (x - mean.reshape(sh)) / np.sqrt(var.reshape(sh) + np.float32(1e-3))
        want = want * scale.reshape(sh) + bias.reshape(sh)
        np.testing.assert_allclose(got, want, rtol=1e-5, atol=1e-6)

    def test_reshape_zero_copies_and_minus_one_infers(self, tmp_path):
        x = np.arange(24, dtype=np.float32).reshape(2, 3, 4)
        got = run_single(
            tmp_path, "Reshape", {"x": x},
            weights={"shape": np.array([0, -1], dtype=np.int64)},
        )
        assert got.shape == (2, 12)
        np.testing.assert_array_equal(got, x.reshape(2, 12))

    def test_reshape_zero_past_rank_rejected(self, tmp_path):
        x = np.arange(6, dtype=np.float32).reshape(2, 3)
        with pytest.raises(ModelGraphError, match="past the input rank"):
            run_single(
                tmp_path, "Reshape", {"x": x},
                weights={"shape": np.array([0, 0, 0], dtype=np.int64)},
            )

    def test_identity_passthrough(self, tmp_path):
        x = np.arange(4, dtype=np.float32).reshape(2, 2)
        np.testing.assert_array_equal(run_single(tmp_path, "Identity", {"x": x}), x)


# ---------------------------------------------------------------------------
# Structural failures


class TestGraphErrors:
    def _write(self, tmp_path, g):
        path = tmp_path / "m.onnx"
        ob.write_model(path, g)
        return path

    def test_unsupported_op(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Softmax", ["x"], ["y"])],
            inputs=[ob.value_info("x", (1, 4))],
            outputs=[ob.value_info("y", (1, 4))],
        )
        m = onnx_io.load_model(self._write(tmp_path, g))
        with pytest.raises(ModelGraphError, match="unsupported op 'Softmax'"):
            onnx_io.run_graph(m, {"x": np.zeros((1, 4), dtype=np.float32)})

    def test_undefined_tensor(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Add", ["x", "ghost"], ["y"], name="adder")],
            inputs=[ob.value_info("x", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        m = onnx_io.load_model(self._write(tmp_path, g))
        with pytest.raises(ModelGraphError, match="'adder' reads undefined tensor 'ghost'"):
            onnx_io.run_graph(m, {"x": np.zeros(1, dtype=np.float32)})

    def test_feed_not_an_input(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Identity", ["x"], ["y"])],
            inputs=[ob.value_info("x", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        m = onnx_io.load_model(self._write(tmp_path, g))
        with pytest.raises(ModelGraphError, match="not a declared graph input"):
            onnx_io.run_graph(m, {"x": np.zeros(1), "zzz": np.zeros(1)})

    def test_missing_feed(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Add", ["x", "e"], ["y"])],
            inputs=[ob.value_info("x", (1,)), ob.value_info("e", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        m = onnx_io.load_model(self._write(tmp_path, g))
        with pytest.raises(ModelGraphError, match="'e' was not fed"):
            onnx_io.run_graph(m, {"x": np.zeros(1)})

    def test_rank_and_dim_validation(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Identity", ["x"], ["y"])],
            inputs=[ob.value_info("x", ("N", 3))],
            outputs=[ob.value_info("y", ("N", 3))],
        )
        m = onnx_io.load_model(self._write(tmp_path, g))
        with pytest.raises(ModelGraphError, match="rank"):
            onnx_io.run_graph(m, {"x": np.zeros((2, 3, 4))})
        with pytest.raises(ModelGraphError, match="axis 1"):
            onnx_io.run_graph(m, {"x": np.zeros((2, 4))})

    def test_output_never_produced(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Identity", ["x"], ["t"])],
            inputs=[ob.value_info("x", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        m = onnx_io.load_model(self._write(tmp_path, g))
        with pytest.raises(ModelGraphError, match="'y' was never produced"):
            onnx_io.run_graph(m, {"x": np.zeros(1)})

    def test_graph_without_outputs_rejected(self, tmp_path):
        g = ob.graph(
            nodes=[ob.node("Identity", ["x"], ["y"])],
            inputs=[ob.value_info("x", (1,))],
            outputs=[],
        )
        with pytest.raises(ModelGraphError, match="declares no outputs"):
            onnx_io.load_model(self._write(tmp_path, g))

    def test_file_without_graph_rejected(self, tmp_path):
        path = tmp_path / "m.onnx"
        path.write_bytes(ob.field_varint(1, 8) + ob.field_string(2, "x"))
        with pytest.raises(ModelGraphError, match="no graph"):
            onnx_io.load_model(path)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "m.onnx"
        path.write_bytes(b"\x80")
        with pytest.raises(ModelGraphError, match="truncated"):
            onnx_io.load_model(path)

    def test_unsupported_tensor_dtype_rejected(self, tmp_path):
        msg = ob.field_varint(1, 2) + ob.field_varint(2, 10)  # FLOAT16
        msg += ob.field_bytes(9, b"\x00\x00\x00\x00")
        msg += ob.field_string(8, "w")
        g = ob.graph(
            nodes=[ob.node("Identity", ["w"], ["y"])],
            inputs=[],
            outputs=[ob.value_info("y", (2,))],
            initializers=[msg],
        )
        with pytest.raises(ModelGraphError, match="data type 10"):
            onnx_io.load_model(self._write(tmp_path, g))

    def test_tensor_size_shape_mismatch_rejected(self, tmp_path):
        w = np.zeros(4, dtype=np.float32)
        msg = ob.field_varint(1, 2) + ob.field_varint(1, 3)  # claims 2x3
        msg += ob.field_varint(2, ob.FLOAT)
        msg += ob.field_bytes(9, w.tobytes())
        msg += ob.field_string(8, "w")
        g = ob.graph(
            nodes=[ob.node("Identity", ["w"], ["y"])],
            inputs=[],
            outputs=[ob.value_info("y", (2, 3))],
            initializers=[msg],
        )
        with pytest.raises(ModelGraphError, match="'w'"):
            onnx_io.load_model(self._write(tmp_path, g))

    def test_unsupported_node_domain_rejected(self, tmp_path):
        n = ob.node("Identity", ["x"], ["y"]) + ob.field_string(7, "com.custom")
        g = ob.graph(
            nodes=[n],
            inputs=[ob.value_info("x", (1,))],
            outputs=[ob.value_info("y", (1,))],
        )
        with pytest.raises(ModelGraphError, match="domain"):
            onnx_io.load_model(self._write(tmp_path, g))


# ---------------------------------------------------------------------------
# A composed encoder-decoder graph, checked against manual composition


def build_small_autoencoder(path, rng):
    """Conv encoder, two dense heads, noise-scaled latent, deconv decoder."""
    P = {
        "w1": rnd(rng, 2, 1, 3, 3),
        "b1": rnd(rng, 2),
        "wmu": rnd(rng, 4, 18) * np.float32(0.3),
        "bmu": rnd(rng, 4),
        "wlv": rnd(rng, 4, 18) * np.float32(0.3),
        "blv": rnd(rng, 4),
        "wd": rnd(rng, 18, 4) * np.float32(0.3),
        "bd": rnd(rng, 18),
        "wt": rnd(rng, 2, 1, 3, 3),
        "bt": rnd(rng, 1),
    }
    inits = [ob.tensor(k, v) for k, v in P.items()]
    inits.append(ob.tensor("flat_shape", np.array([0, -1], dtype=np.int64)))
    inits.append(ob.tensor("grid_shape", np.array([0, 2, 3, 3], dtype=np.int64)))
    inits.append(ob.tensor("half", np.float32(0.5).reshape(())))
    nodes = [
        ob.node("Conv", ["x", "w1", "b1"], ["h1"], strides=[2, 2], pads=[1, 1, 1, 1]),
        ob.node("Relu", ["h1"], ["h1r"]),
        ob.node("Reshape", ["h1r", "flat_shape"], ["flat"]),
        ob.node("Gemm", ["flat", "wmu", "bmu"], ["mu"], transB=1),
        ob.node("Gemm", ["flat", "wlv", "blv"], ["logvar"], transB=1),
        ob.node("Mul", ["logvar", "half"], ["half_lv"]),
        ob.node("Exp", ["half_lv"], ["std"]),
        ob.node("Mul", ["std", "eps"], ["noise"]),
        ob.node("Add", ["mu", "noise"], ["z"]),
        ob.node("Gemm", ["z", "wd", "bd"], ["dec"], transB=1),
        ob.node("Relu", ["dec"], ["decr"]),
        ob.node("Reshape", ["decr", "grid_shape"], ["grid"]),
        ob.node(
            "ConvTranspose", ["grid", "wt", "bt"], ["up"],
            strides=[2, 2], pads=[1, 1, 1, 1], output_padding=[1, 1],
        ),
        ob.node("Sigmoid", ["up"], ["y"]),
    ]
    g = ob.graph(
        nodes=nodes,
        inputs=[ob.value_info("x", ("N", 1, 6, 6)), ob.value_info("eps", ("N", 4))],
        outputs=[ob.value_info("y", ("N", 1, 6, 6))],
        initializers=inits,
    )
    ob.write_model(path, g)
    return P


def compose_manually(x, eps, P):
    h1 = np.maximum(conv2d_loop(x, P["w1"], P["b1"], (2, 2), (1, 1, 1, 1)), 0)
    flat = h1.reshape(x.shape[0], -1)
    mu = flat @ P["wmu"].T.astype(np.float64) + P["bmu"]
    logvar = flat @ P["wlv"].T.astype(np.float64) + P["blv"]
    z = mu + eps * np.exp(0.5 * logvar)
    dec = np.maximum(z @ P["wd"].T.astype(np.float64) + P["bd"], 0)
    grid = dec.reshape(x.shape[0], 2, 3, 3)
    up = convt_loop(grid, P["wt"], P["bt"], (2, 2), (1, 1, 1, 1), (1, 1))
    return 1.0 / (1.0 + np.exp(-up))


class TestComposedGraph:
    def test_matches_manual_composition(self, tmp_path):
        rng = np.random.default_rng(42)
        path = tmp_path / "vae.onnx"
        P = build_small_autoencoder(path, rng)
        m = onnx_io.load_model(path)
        x = rng.random((2, 1, 6, 6)).astype(np.float32)
        eps = rng.standard_normal((2, 4)).astype(np.float32)
        got = onnx_io.run_graph(m, {"x": x, "eps": eps})["y"]
        want = compose_manually(x.astype(np.float64), eps.astype(np.float64), P)
        assert got.shape == (2, 1, 6, 6)
        np.testing.assert_allclose(got, want, rtol=1e-4, atol=1e-5)

    def test_zero_noise_decodes_the_mean_deterministically(self, tmp_path):
        rng = np.random.default_rng(43)
        path = tmp_path / "vae.onnx"
        build_small_autoencoder(path, rng)
        m = onnx_io.load_model(path)
        x = rng.random((1, 1, 6, 6)).astype(np.float32)
        zero = np.zeros((1, 4), dtype=np.float32)
        a = onnx_io.run_graph(m, {"x": x, "eps": zero})["y"]
        b = onnx_io.run_graph(m, {"x": x, "eps": zero})["y"]
        np.testing.assert_array_equal(a, b)
        sampled = onnx_io.run_graph(
            m, {"x": x, "eps": np.full((1, 4), 2.0, dtype=np.float32)}
        )["y"]
        assert not np.array_equal(a, sampled)


# ---------------------------------------------------------------------------
# The inference provider


def identity_model(path, dims):
    g = ob.graph(
        nodes=[ob.node("Identity", ["x"], ["y"])],
        inputs=[ob.value_info("x", dims)],
        outputs=[ob.value_info("y", dims)],
    )
    return ob.write_model(path, g)


def rgb(seed, side=8):
    rng = np.random.default_rng(seed)
    return RgbImage(rng.random((side, side, 3)))


class TestOnnxProvider:
    def test_identity_channels_first(self, tmp_path):
        path = identity_model(tmp_path / "m.onnx", ("N", 3, 8, 8))
        prov = OnnxProvider(path)
        assert prov.channels_first and (prov.height, prov.width) == (8, 8)
        img = rgb(0)
        (out,) = prov.reconstruct([img])
        np.testing.assert_allclose(out.data, img.data, atol=1e-6)

    def test_identity_channels_last(self, tmp_path):
        path = identity_model(tmp_path / "m.onnx", ("N", 8, 8, 3))
        prov = OnnxProvider(path)
        assert not prov.channels_first and (prov.height, prov.width) == (8, 8)
        imgs = [rgb(1), rgb(2)]
        outs = prov.reconstruct(imgs)
        for img, out in zip(imgs, outs):
            np.testing.assert_allclose(out.data, img.data, atol=1e-6)

    def test_constant_graph_ignores_input(self, tmp_path):
        path = tmp_path / "m.onnx"
        g = ob.graph(
            nodes=[
                ob.node("Mul", ["x", "zero"], ["xz"]),
                ob.node("Add", ["xz", "c"], ["y"]),
            ],
            inputs=[ob.value_info("x", ("N", 3, 8, 8))],
            outputs=[ob.value_info("y", ("N", 3, 8, 8))],
            initializers=[
                ob.tensor("zero", np.float32(0.0).reshape(())),
                ob.tensor("c", np.full((1, 3, 8, 8), 0.5, dtype=np.float32)),
            ],
        )
        ob.write_model(path, g)
        (out,) = OnnxProvider(path).reconstruct([rgb(3)])
        np.testing.assert_array_equal(out.data, np.full((8, 8, 3), 0.5))

    def _noise_model(self, path):
        g = ob.graph(
            nodes=[
                ob.node("Mul", ["x", "half"], ["xh"]),
                ob.node("Mul", ["eps", "tiny"], ["et"]),
                ob.node("Add", ["xh", "et"], ["y"]),
            ],
            inputs=[
                ob.value_info("x", ("N", 3, 8, 8)),
                ob.value_info("eps", ("N", 1, 8, 8)),
            ],
            outputs=[ob.value_info("y", ("N", 3, 8, 8))],
            initializers=[
                ob.tensor("half", np.float32(0.5).reshape(())),
                ob.tensor("tiny", np.float32(1e-4).reshape(())),
            ],
        )
        return ob.write_model(path, g)

    def test_mean_decode_feeds_zero_noise(self, tmp_path):
        path = self._noise_model(tmp_path / "m.onnx")
        img = rgb(4)
        (out,) = OnnxProvider(path).reconstruct([img])
        np.testing.assert_allclose(out.data, img.data * 0.5, atol=1e-6)

    def test_sampling_perturbs_and_is_seed_deterministic(self, tmp_path):
        path = self._noise_model(tmp_path / "m.onnx")
        img = rgb(5)
        (mean_out,) = OnnxProvider(path).reconstruct([img])
        (s1,) = OnnxProvider(path, sample_latent=True, seed=7).reconstruct([img])
        (s2,) = OnnxProvider(path, sample_latent=True, seed=7).reconstruct([img])
        assert not np.array_equal(s1.data, mean_out.data)
        np.testing.assert_array_equal(s1.data, s2.data)

    def test_sampling_without_noise_input_rejected(self, tmp_path):
        path = identity_model(tmp_path / "m.onnx", ("N", 3, 8, 8))
        with pytest.raises(ModelShapeError, match="no noise input"):
            OnnxProvider(path, sample_latent=True)

    def test_initializer_listed_as_input_is_not_noise(self, tmp_path):
        # old-style exporters declare weights in graph.input too
        path = tmp_path / "m.onnx"
        w = np.full((1, 3, 8, 8), 0.25, dtype=np.float32)
        g = ob.graph(
            nodes=[ob.node("Add", ["x", "w"], ["y"])],
            inputs=[
                ob.value_info("x", ("N", 3, 8, 8)),
                ob.value_info("w", (1, 3, 8, 8)),
            ],
            outputs=[ob.value_info("y", ("N", 3, 8, 8))],
            initializers=[ob.tensor("w", w)],
        )
        ob.write_model(path, g)
        prov = OnnxProvider(path)
        assert prov.noise_spec is None
        img = RgbImage(np.full((8, 8, 3), 0.5))
        (out,) = prov.reconstruct([img])
        np.testing.assert_allclose(out.data, 0.75, atol=1e-6)

    def test_out_of_range_output_rejected(self, tmp_path):
        path = tmp_path / "m.onnx"
        g = ob.graph(
            nodes=[ob.node("Mul", ["x", "three"], ["y"])],
            inputs=[ob.value_info("x", ("N", 3, 8, 8))],
            outputs=[ob.value_info("y", ("N", 3, 8, 8))],
            initializers=[ob.tensor("three", np.float32(3.0).reshape(()))],
        )
        ob.write_model(path, g)
        with pytest.raises(ModelShapeError, match="leaves"):
            OnnxProvider(path).reconstruct([rgb(6)])

    def test_wrong_image_size_rejected(self, tmp_path):
        path = identity_model(tmp_path / "m.onnx", ("N", 3, 8, 8))
        with pytest.raises(ModelShapeError, match="8 x 8"):
            OnnxProvider(path).reconstruct([rgb(7, side=16)])

    def test_non_image_input_rank_rejected(self, tmp_path):
        path = identity_model(tmp_path / "m.onnx", ("N", 12))
        with pytest.raises(ModelShapeError, match="4 axes"):
            OnnxProvider(path)
