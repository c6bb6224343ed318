"""Minimal ONNX model loading and inference on numpy.

Only the small operator set an exported encoder-decoder graph needs is
implemented: Conv, ConvTranspose, BatchNormalization, Relu, Sigmoid,
Reshape, Gemm, Exp, Mul, Add, Identity. The file format is parsed directly
from the protobuf wire encoding; no protobuf runtime is required. Anything
outside this subset fails loudly with the op or field that was not
understood.

Inference runs in float32 end to end so results track what a float32
training framework produced.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path

import numpy as np

from .errors import ModelGraphError

__all__ = ["TensorSpec", "NodeDef", "ModelGraph", "load_model", "run_graph"]


# ---------------------------------------------------------------------------
# Protobuf wire parsing

_WIRE_VARINT = 0
_WIRE_I64 = 1
_WIRE_LEN = 2
_WIRE_I32 = 5


def _read_varint(buf: bytes, pos: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise ModelGraphError("truncated varint")
        b = buf[pos]
        pos += 1
        result |= (b & 0x7F) << shift
        if not b & 0x80:
            return result, pos
        shift += 7
        if shift > 70:
            raise ModelGraphError("varint too long")


def _as_int64(u: int) -> int:
    return u - (1 << 64) if u >= (1 << 63) else u


def _read_tag(buf: bytes, pos: int) -> tuple[int, int, int]:
    tag, pos = _read_varint(buf, pos)
    return tag >> 3, tag & 7, pos


def _read_len(buf: bytes, pos: int) -> tuple[bytes, int]:
    n, pos = _read_varint(buf, pos)
    if pos + n > len(buf):
        raise ModelGraphError("truncated length-delimited field")
    return buf[pos : pos + n], pos + n


def _skip(buf: bytes, pos: int, wtype: int) -> int:
    if wtype == _WIRE_VARINT:
        _, pos = _read_varint(buf, pos)
        return pos
    if wtype == _WIRE_I64:
        return pos + 8
    if wtype == _WIRE_LEN:
        payload, pos = _read_len(buf, pos)
        return pos
    if wtype == _WIRE_I32:
        return pos + 4
    raise ModelGraphError(f"unsupported wire type {wtype}")


def _packed_varints(payload: bytes) -> list[int]:
    vals = []
    pos = 0
    while pos < len(payload):
        v, pos = _read_varint(payload, pos)
        vals.append(_as_int64(v))
    return vals


# ---------------------------------------------------------------------------
# Message structures

_FLOAT = 1
_INT32 = 6
_INT64 = 7

_ATTR_FLOAT = 1
_ATTR_INT = 2
_ATTR_STRING = 3
_ATTR_TENSOR = 4
_ATTR_FLOATS = 6
_ATTR_INTS = 7


@dataclasses.dataclass(frozen=True)
class TensorSpec:
    """Declared graph input or output: name, element type, dims.

    Dims are ints where the model pins them and strings for symbolic axes
    (typically the batch axis).
    """

    name: str
    elem_type: int
    dims: tuple


@dataclasses.dataclass(frozen=True)
class NodeDef:
    op_type: str
    name: str
    inputs: tuple[str, ...]
    outputs: tuple[str, ...]
    attrs: dict


@dataclasses.dataclass(frozen=True)
class ModelGraph:
    producer: str
    opset: int
    inputs: tuple[TensorSpec, ...]
    outputs: tuple[TensorSpec, ...]
    initializers: dict[str, np.ndarray]
    nodes: tuple[NodeDef, ...]


def _parse_tensor(buf: bytes) -> tuple[str, np.ndarray]:
    pos = 0
    dims: list[int] = []
    data_type = 0
    name = ""
    raw = None
    float_data: list[float] = []
    int_data: list[int] = []
    while pos < len(buf):
        field, wtype, pos = _read_tag(buf, pos)
        if field == 1:
            if wtype == _WIRE_LEN:
                payload, pos = _read_len(buf, pos)
                dims.extend(_packed_varints(payload))
            else:
                v, pos = _read_varint(buf, pos)
                dims.append(_as_int64(v))
        elif field == 2 and wtype == _WIRE_VARINT:
            data_type, pos = _read_varint(buf, pos)
        elif field == 4:
            if wtype == _WIRE_LEN:
                payload, pos = _read_len(buf, pos)
                float_data.extend(np.frombuffer(payload, dtype="<f4").tolist())
            else:
                raw4 = buf[pos : pos + 4]
                pos += 4
                float_data.append(float(np.frombuffer(raw4, dtype="<f4")[0]))
        elif field in (5, 7):
            if wtype == _WIRE_LEN:
                payload, pos = _read_len(buf, pos)
                int_data.extend(_packed_varints(payload))
            else:
                v, pos = _read_varint(buf, pos)
                int_data.append(_as_int64(v))
        elif field == 8 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            name = payload.decode("utf-8")
        elif field == 9 and wtype == _WIRE_LEN:
            raw, pos = _read_len(buf, pos)
        else:
            pos = _skip(buf, pos, wtype)
    shape = tuple(dims)
    if data_type == _FLOAT:
        arr = (
            np.frombuffer(raw, dtype="<f4")
            if raw is not None
            else np.array(float_data, dtype=np.float32)
        )
    elif data_type == _INT64:
        arr = (
            np.frombuffer(raw, dtype="<i8")
            if raw is not None
            else np.array(int_data, dtype=np.int64)
        )
    elif data_type == _INT32:
        arr = (
            np.frombuffer(raw, dtype="<i4")
            if raw is not None
            else np.array(int_data, dtype=np.int32)
        )
    else:
        raise ModelGraphError(f"unsupported tensor data type {data_type} for {name!r}")
    try:
        arr = arr.reshape(shape)
    except ValueError as e:
        raise ModelGraphError(f"tensor {name!r}: {e}") from None
    return name, arr


def _parse_attribute(buf: bytes) -> tuple[str, object]:
    pos = 0
    name = ""
    atype = 0
    f_val = None
    i_val = None
    s_val = None
    t_val = None
    floats: list[float] = []
    ints: list[int] = []
    while pos < len(buf):
        field, wtype, pos = _read_tag(buf, pos)
        if field == 1 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            name = payload.decode("utf-8")
        elif field == 2 and wtype == _WIRE_I32:
            f_val = float(np.frombuffer(buf[pos : pos + 4], dtype="<f4")[0])
            pos += 4
        elif field == 3 and wtype == _WIRE_VARINT:
            v, pos = _read_varint(buf, pos)
            i_val = _as_int64(v)
        elif field == 4 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            s_val = payload.decode("utf-8")
        elif field == 5 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            t_val = _parse_tensor(payload)[1]
        elif field == 7:
            if wtype == _WIRE_LEN:
                payload, pos = _read_len(buf, pos)
                floats.extend(np.frombuffer(payload, dtype="<f4").tolist())
            else:
                floats.append(float(np.frombuffer(buf[pos : pos + 4], dtype="<f4")[0]))
                pos += 4
        elif field == 8:
            if wtype == _WIRE_LEN:
                payload, pos = _read_len(buf, pos)
                ints.extend(_packed_varints(payload))
            else:
                v, pos = _read_varint(buf, pos)
                ints.append(_as_int64(v))
        elif field == 20 and wtype == _WIRE_VARINT:
            atype, pos = _read_varint(buf, pos)
        else:
            pos = _skip(buf, pos, wtype)
    if atype == _ATTR_FLOAT or (atype == 0 and f_val is not None):
        return name, f_val
    if atype == _ATTR_INT or (atype == 0 and i_val is not None):
        return name, i_val
    if atype == _ATTR_STRING or (atype == 0 and s_val is not None):
        return name, s_val
    if atype == _ATTR_TENSOR or (atype == 0 and t_val is not None):
        return name, t_val
    if atype == _ATTR_FLOATS or (atype == 0 and floats):
        return name, list(floats)
    if atype == _ATTR_INTS or (atype == 0 and ints):
        return name, list(ints)
    raise ModelGraphError(f"attribute {name!r} has unsupported type {atype}")


def _parse_node(buf: bytes) -> NodeDef:
    pos = 0
    inputs: list[str] = []
    outputs: list[str] = []
    name = ""
    op_type = ""
    domain = ""
    attrs: dict = {}
    while pos < len(buf):
        field, wtype, pos = _read_tag(buf, pos)
        if field == 1 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            inputs.append(payload.decode("utf-8"))
        elif field == 2 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            outputs.append(payload.decode("utf-8"))
        elif field == 3 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            name = payload.decode("utf-8")
        elif field == 4 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            op_type = payload.decode("utf-8")
        elif field == 5 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            k, v = _parse_attribute(payload)
            attrs[k] = v
        elif field == 7 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            domain = payload.decode("utf-8")
        else:
            pos = _skip(buf, pos, wtype)
    if domain not in ("", "ai.onnx"):
        raise ModelGraphError(f"node {name!r} uses unsupported domain {domain!r}")
    return NodeDef(op_type, name, tuple(inputs), tuple(outputs), attrs)


def _parse_value_info(buf: bytes) -> TensorSpec:
    pos = 0
    name = ""
    elem_type = 0
    dims: list = []
    while pos < len(buf):
        field, wtype, pos = _read_tag(buf, pos)
        if field == 1 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            name = payload.decode("utf-8")
        elif field == 2 and wtype == _WIRE_LEN:
            tbuf, pos = _read_len(buf, pos)
            tpos = 0
            while tpos < len(tbuf):
                tfield, twtype, tpos = _read_tag(tbuf, tpos)
                if tfield == 1 and twtype == _WIRE_LEN:
                    tensor_buf, tpos = _read_len(tbuf, tpos)
                    spos = 0
                    while spos < len(tensor_buf):
                        sfield, swtype, spos = _read_tag(tensor_buf, spos)
                        if sfield == 1 and swtype == _WIRE_VARINT:
                            elem_type, spos = _read_varint(tensor_buf, spos)
                        elif sfield == 2 and swtype == _WIRE_LEN:
                            shape_buf, spos = _read_len(tensor_buf, spos)
                            dpos = 0
                            while dpos < len(shape_buf):
                                dfield, dwtype, dpos = _read_tag(shape_buf, dpos)
                                if dfield == 1 and dwtype == _WIRE_LEN:
                                    dim_buf, dpos = _read_len(shape_buf, dpos)
                                    ipos = 0
                                    dim: object = None
                                    while ipos < len(dim_buf):
                                        ifield, iwtype, ipos = _read_tag(dim_buf, ipos)
                                        if ifield == 1 and iwtype == _WIRE_VARINT:
                                            v, ipos = _read_varint(dim_buf, ipos)
                                            dim = _as_int64(v)
                                        elif ifield == 2 and iwtype == _WIRE_LEN:
                                            payload, ipos = _read_len(dim_buf, ipos)
                                            dim = payload.decode("utf-8")
                                        else:
                                            ipos = _skip(dim_buf, ipos, iwtype)
                                    dims.append(dim)
                                else:
                                    dpos = _skip(shape_buf, dpos, dwtype)
                        else:
                            spos = _skip(tensor_buf, spos, swtype)
                else:
                    tpos = _skip(tbuf, tpos, twtype)
        else:
            pos = _skip(buf, pos, wtype)
    return TensorSpec(name, elem_type, tuple(dims))


def _parse_graph(buf: bytes) -> tuple:
    pos = 0
    nodes: list[NodeDef] = []
    initializers: dict[str, np.ndarray] = {}
    inputs: list[TensorSpec] = []
    outputs: list[TensorSpec] = []
    while pos < len(buf):
        field, wtype, pos = _read_tag(buf, pos)
        if field == 1 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            nodes.append(_parse_node(payload))
        elif field == 5 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            name, arr = _parse_tensor(payload)
            initializers[name] = arr
        elif field == 11 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            inputs.append(_parse_value_info(payload))
        elif field == 12 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            outputs.append(_parse_value_info(payload))
        else:
            pos = _skip(buf, pos, wtype)
    return nodes, initializers, inputs, outputs


def load_model(path: str | Path) -> ModelGraph:
    """Parse an ONNX file into a ModelGraph, or raise ModelGraphError."""
    buf = Path(path).read_bytes()
    pos = 0
    producer = ""
    opset = 0
    graph_buf = None
    while pos < len(buf):
        field, wtype, pos = _read_tag(buf, pos)
        if field == 2 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            producer = payload.decode("utf-8")
        elif field == 7 and wtype == _WIRE_LEN:
            graph_buf, pos = _read_len(buf, pos)
        elif field == 8 and wtype == _WIRE_LEN:
            payload, pos = _read_len(buf, pos)
            opos = 0
            while opos < len(payload):
                ofield, owtype, opos = _read_tag(payload, opos)
                if ofield == 2 and owtype == _WIRE_VARINT:
                    opset, opos = _read_varint(payload, opos)
                else:
                    opos = _skip(payload, opos, owtype)
        else:
            pos = _skip(buf, pos, wtype)
    if graph_buf is None:
        raise ModelGraphError("file contains no graph")
    nodes, initializers, inputs, outputs = _parse_graph(graph_buf)
    if not outputs:
        raise ModelGraphError("graph declares no outputs")
    return ModelGraph(
        producer=producer,
        opset=int(opset),
        inputs=tuple(inputs),
        outputs=tuple(outputs),
        initializers=initializers,
        nodes=tuple(nodes),
    )


# ---------------------------------------------------------------------------
# Execution


def _pair(attrs: dict, key: str, default: tuple[int, int]) -> tuple[int, int]:
    v = attrs.get(key)
    if v is None:
        return default
    if len(v) != 2:
        raise ModelGraphError(f"attribute {key} must have 2 entries, got {v}")
    return int(v[0]), int(v[1])


def _conv2d(x, w, b, strides, pads):
    pt, pl, pb, pr = pads
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pb), (pl, pr)))
    m, c2, kh, kw = w.shape
    if xp.shape[1] != c2:
        raise ModelGraphError(
            f"conv channel mismatch: input has {xp.shape[1]}, kernel expects {c2}"
        )
    sh, sw = strides
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::sh, ::sw]
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    out = np.moveaxis(out, 3, 1)
    if b is not None:
        out = out + b[None, :, None, None]
    return np.ascontiguousarray(out.astype(np.float32, copy=False))


def _op_conv(inputs, attrs):
    x, w = inputs[0], inputs[1]
    b = inputs[2] if len(inputs) > 2 else None
    if int(attrs.get("group", 1)) != 1:
        raise ModelGraphError("grouped Conv is not supported")
    if "dilations" in attrs and tuple(attrs["dilations"]) != (1, 1):
        raise ModelGraphError("dilated Conv is not supported")
    if "auto_pad" in attrs and attrs["auto_pad"] not in ("", "NOTSET"):
        raise ModelGraphError("auto_pad is not supported; use explicit pads")
    strides = _pair(attrs, "strides", (1, 1))
    pads = attrs.get("pads", [0, 0, 0, 0])
    return _conv2d(x, w, b, strides, tuple(int(p) for p in pads))


def _op_conv_transpose(inputs, attrs):
    x, w = inputs[0], inputs[1]
    b = inputs[2] if len(inputs) > 2 else None
    if int(attrs.get("group", 1)) != 1:
        raise ModelGraphError("grouped ConvTranspose is not supported")
    if "auto_pad" in attrs and attrs["auto_pad"] not in ("", "NOTSET"):
        raise ModelGraphError("auto_pad is not supported; use explicit pads")
    sh, sw = _pair(attrs, "strides", (1, 1))
    pads = tuple(int(p) for p in attrs.get("pads", [0, 0, 0, 0]))
    oph, opw = _pair(attrs, "output_padding", (0, 0))
    pt, pl, pb, pr = pads
    n, c, h, wdt = x.shape
    c2, m, kh, kw = w.shape
    if c != c2:
        raise ModelGraphError(
            f"conv transpose channel mismatch: input has {c}, kernel expects {c2}"
        )
    hs, ws = (h - 1) * sh + 1, (wdt - 1) * sw + 1
    xs = np.zeros((n, c, hs, ws), dtype=np.float32)
    xs[:, :, ::sh, ::sw] = x
    w2 = np.ascontiguousarray(np.flip(w, axis=(2, 3)).transpose(1, 0, 2, 3))
    full = _conv2d(xs, w2, None, (1, 1), (kh - 1, kw - 1, kh - 1, kw - 1))
    out_h = (h - 1) * sh + kh - pt - pb + oph
    out_w = (wdt - 1) * sw + kw - pl - pr + opw
    if out_h < 1 or out_w < 1:
        raise ModelGraphError(f"conv transpose output would be empty: {out_h} x {out_w}")
    need_h = pt + out_h - full.shape[2]
    need_w = pl + out_w - full.shape[3]
    if need_h > 0 or need_w > 0:
        full = np.pad(full, ((0, 0), (0, 0), (0, max(0, need_h)), (0, max(0, need_w))))
    out = full[:, :, pt : pt + out_h, pl : pl + out_w]
    if b is not None:
        out = out + b[None, :, None, None].astype(np.float32)
    return np.ascontiguousarray(out.astype(np.float32, copy=False))


def _op_batchnorm(inputs, attrs):
    x, scale, bias, mean, var = inputs
    eps = np.float32(attrs.get("epsilon", 1e-5))
    shape = (1, -1) + (1,) * (x.ndim - 2)
    inv = (scale / np.sqrt(var + eps)).reshape(shape)
    return (x - mean.reshape(shape)) * inv + bias.reshape(shape)


def _op_gemm(inputs, attrs):
    a, b = inputs[0], inputs[1]
    c = inputs[2] if len(inputs) > 2 else None
    alpha = np.float32(attrs.get("alpha", 1.0))
    beta = np.float32(attrs.get("beta", 1.0))
    if int(attrs.get("transA", 0)):
        a = a.T
    if int(attrs.get("transB", 0)):
        b = b.T
    y = alpha * (a @ b)
    if c is not None:
        y = y + beta * c
    return y.astype(np.float32, copy=False)


def _op_reshape(inputs, attrs):
    data, shape = inputs[0], inputs[1]
    target = [int(s) for s in np.asarray(shape).ravel()]
    resolved = []
    for i, s in enumerate(target):
        if s == 0:
            if i >= data.ndim:
                raise ModelGraphError("Reshape dim 0 refers past the input rank")
            resolved.append(data.shape[i])
        else:
            resolved.append(s)
    return data.reshape(resolved)


def _op_sigmoid(inputs, attrs):
    x = inputs[0]
    with np.errstate(over="ignore"):
        return (1.0 / (1.0 + np.exp(-x))).astype(np.float32, copy=False)


def _op_exp(inputs, attrs):
    with np.errstate(over="ignore"):
        return np.exp(inputs[0]).astype(np.float32, copy=False)


_OPS = {
    "Conv": _op_conv,
    "ConvTranspose": _op_conv_transpose,
    "BatchNormalization": _op_batchnorm,
    "Relu": lambda inputs, attrs: np.maximum(inputs[0], 0),
    "Sigmoid": _op_sigmoid,
    "Exp": _op_exp,
    "Reshape": _op_reshape,
    "Gemm": _op_gemm,
    "Add": lambda inputs, attrs: (inputs[0] + inputs[1]).astype(np.float32, copy=False),
    "Mul": lambda inputs, attrs: (inputs[0] * inputs[1]).astype(np.float32, copy=False),
    "Identity": lambda inputs, attrs: inputs[0],
}


def run_graph(graph: ModelGraph, feeds: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Execute the graph on the given inputs.

    Nodes are expected in topological order (the standard for serialized
    graphs); a node reading an undefined name fails loudly. Returns a dict
    of the declared graph outputs.
    """
    values: dict[str, np.ndarray] = dict(graph.initializers)
    input_names = {spec.name for spec in graph.inputs}
    for name, arr in feeds.items():
        if name not in input_names:
            raise ModelGraphError(f"feed {name!r} is not a declared graph input")
        values[name] = np.asarray(arr, dtype=np.float32)
    for spec in graph.inputs:
        if spec.name not in values:
            raise ModelGraphError(f"graph input {spec.name!r} was not fed")
        got = values[spec.name]
        declared = spec.dims
        if len(declared) != got.ndim:
            raise ModelGraphError(
                f"input {spec.name!r}: rank {got.ndim} fed, model declares {len(declared)}"
            )
        for axis, d in enumerate(declared):
            if isinstance(d, int) and d != got.shape[axis]:
                raise ModelGraphError(
                    f"input {spec.name!r} axis {axis}: fed {got.shape[axis]}, "
                    f"model declares {d}"
                )
    for node in graph.nodes:
        try:
            fn = _OPS[node.op_type]
        except KeyError:
            raise ModelGraphError(f"unsupported op {node.op_type!r}") from None
        args = []
        for name in node.inputs:
            if name == "":
                args.append(None)
            elif name in values:
                args.append(values[name])
            else:
                raise ModelGraphError(
                    f"node {node.name!r} reads undefined tensor {name!r}"
                )
        results = fn(args, node.attrs)
        if not isinstance(results, tuple):
            results = (results,)
        for out_name, arr in zip(node.outputs, results):
            values[out_name] = arr
    out = {}
    for spec in graph.outputs:
        if spec.name not in values:
            raise ModelGraphError(f"graph output {spec.name!r} was never produced")
        out[spec.name] = values[spec.name]
    return out
