/**
 * Convolutions with hand-supplied gradients.
 *
 * The wasm backend ships Conv2DBackpropInput but not Conv2DBackpropFilter,
 * so plain tf.conv2d cannot be trained there. Both directions are wrapped
 * in customGrad with the filter gradient composed from ops every backend
 * has: the classic identity that the weight gradient of a VALID conv is
 * itself a stride-1 conv of the input with the output gradient as the
 * filter, dilated by the forward stride.
 *
 * All convolutions here are VALID; callers pad explicitly. That keeps the
 * spatial arithmetic identical to the exported ONNX graph, which uses
 * explicit pads for the same reason.
 */
import * as tf from '@tensorflow/tfjs';

/** d(conv)/d(filter) for y = conv2d(x, w, stride, 'valid'), w: [kh,kw,ci,co]. */
export function convFilterGrad(
  x: tf.Tensor4D,
  dy: tf.Tensor4D,
  kh: number,
  kw: number,
  stride: number,
): tf.Tensor4D {
  return tf.tidy(() => {
    const xT = tf.transpose(x, [3, 1, 2, 0]); // channels become the batch
    const fT = tf.transpose(dy, [1, 2, 0, 3]); // output grad becomes the filter
    const g = tf.conv2d(xT, fT as unknown as tf.Tensor4D, 1, 'valid', 'NHWC', stride);
    // stride leftovers make g spatially larger than the kernel; crop them
    const cropped = tf.slice(g, [0, 0, 0, 0], [g.shape[0], kh, kw, g.shape[3]]);
    return tf.transpose(cropped, [1, 2, 0, 3]) as tf.Tensor4D;
  });
}

/** VALID convolution, trainable on any backend. */
export function conv(x: tf.Tensor4D, w: tf.Tensor4D, stride: number): tf.Tensor4D {
  const op = tf.customGrad((xi, wi, save) => {
    const value = tf.conv2d(xi as tf.Tensor4D, wi as tf.Tensor4D, stride, 'valid');
    (save as tf.GradSaveFunc)([xi as tf.Tensor, wi as tf.Tensor]);
    return {
      value,
      gradFunc: (dy: tf.Tensor, saved: tf.Tensor[]) => {
        const [xs, ws] = saved as [tf.Tensor4D, tf.Tensor4D];
        return [
          tf.conv2dTranspose(dy as tf.Tensor4D, ws, xs.shape, stride, 'valid'),
          convFilterGrad(xs, dy as tf.Tensor4D, ws.shape[0], ws.shape[1], stride),
        ];
      },
    };
  });
  return op(x, w) as tf.Tensor4D;
}

/**
 * VALID transposed convolution to (in-1)*stride + kh rows, trainable on
 * any backend. Filter shape follows tf.conv2dTranspose: [kh, kw, out, in].
 */
export function deconv(z: tf.Tensor4D, w: tf.Tensor4D, stride: number): tf.Tensor4D {
  const outH = (z.shape[1] - 1) * stride + w.shape[0];
  const outW = (z.shape[2] - 1) * stride + w.shape[1];
  const op = tf.customGrad((zi, wi, save) => {
    const z4 = zi as tf.Tensor4D;
    const w4 = wi as tf.Tensor4D;
    const value = tf.conv2dTranspose(z4, w4, [z4.shape[0], outH, outW, w4.shape[2]], stride, 'valid');
    (save as tf.GradSaveFunc)([z4, w4]);
    return {
      value,
      gradFunc: (dy: tf.Tensor, saved: tf.Tensor[]) => {
        const [zs, ws] = saved as [tf.Tensor4D, tf.Tensor4D];
        return [
          tf.conv2d(dy as tf.Tensor4D, ws, stride, 'valid'),
          // adjoint identity: <deconv(z, w), dy> = <z, conv(dy, w)>
          convFilterGrad(dy as tf.Tensor4D, zs, ws.shape[0], ws.shape[1], stride),
        ];
      },
    };
  });
  return op(z, w) as tf.Tensor4D;
}
