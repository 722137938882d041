//! Naive ±1 / integer evaluation of every layer kind.
//!
//! This is the ground truth the packed engine is tested against. It never
//! touches packed words or popcounts: weights are unpacked to `i8` and every
//! product is formed explicitly.

use std::fmt::Debug;

use num_traits::{FromPrimitive, PrimInt, Signed};
use thiserror::Error;

use crate::bitpack::{sign, PackedBitTensor, PackedBitVector, Shape3, WordWidth};
use crate::model::{validate, Diagnostic, FixedTensor, LayerKind, LayerWeights, NetworkSpec};

/// Integer type used for oracle accumulators.
pub trait Accumulator: PrimInt + Signed + FromPrimitive + Debug + Send + Sync + 'static {}

impl Accumulator for i32 {}
impl Accumulator for i64 {}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReferenceError {
    #[error("input shape {actual} does not match network input {expected}")]
    ShapeMismatch { expected: Shape3, actual: Shape3 },
    #[error("invalid network ({} problems)", .0.len())]
    InvalidNetwork(Vec<Diagnostic>),
}

/// A tensor whose elements are exactly −1 or +1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignTensor {
    shape: Shape3,
    data: Vec<i8>,
}

impl SignTensor {
    /// `None` if any element is not ±1 or the length does not match.
    pub fn new(shape: Shape3, data: Vec<i8>) -> Option<Self> {
        (data.len() == shape.numel() && data.iter().all(|&x| x == 1 || x == -1)).then_some(SignTensor { shape, data })
    }

    pub fn from_packed(t: &PackedBitTensor) -> Self {
        SignTensor {
            shape: t.shape(),
            data: t.data().unpack(),
        }
    }

    pub fn to_packed(&self, width: WordWidth) -> PackedBitTensor {
        PackedBitTensor::new(self.shape, PackedBitVector::from_bits(self.data.iter().map(|&x| x > 0), width))
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    /// Elements in channel-major order.
    pub fn data(&self) -> &[i8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> i8 {
        self.data[self.shape.index(c, h, w)]
    }
}

/// Integer tensor of pre-activation accumulator values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntTensor<A> {
    pub shape: Shape3,
    pub data: Vec<A>,
}

impl<A: Accumulator> IntTensor<A> {
    #[inline]
    pub fn get(&self, c: usize, h: usize, w: usize) -> A {
        self.data[self.shape.index(c, h, w)]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceOutput<A> {
    pub class_id: usize,
    pub logits: Vec<A>,
    /// Output of every layer that produces a ±1 feature-map, indexed by layer.
    pub intermediates: Vec<SignTensor>,
}

/// Index of the largest logit; the lowest index wins ties.
pub fn argmax<T: PartialOrd + Copy>(logits: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in logits.iter().enumerate().skip(1) {
        if x > logits[best] {
            best = i;
        }
    }
    best
}

fn acc<A: Accumulator>(x: i64) -> A {
    A::from_i64(x).expect("accumulator overflow")
}

enum Activation<'a> {
    Fixed(&'a FixedTensor),
    Signs(SignTensor),
}

pub fn ref_infer<A: Accumulator>(net: &NetworkSpec, input: &FixedTensor) -> Result<ReferenceOutput<A>, ReferenceError> {
    validate(net).map_err(ReferenceError::InvalidNetwork)?;
    if input.shape != net.input_shape {
        return Err(ReferenceError::ShapeMismatch {
            expected: net.input_shape,
            actual: input.shape,
        });
    }
    let shapes = net.shapes().expect("validated network chains");
    let mut act = Activation::Fixed(input);
    let mut intermediates = Vec::with_capacity(net.layers.len());
    let mut logits = Vec::new();
    let last = net.layers.len() - 1;

    for (i, (layer, weights)) in net.layers.iter().zip(&net.weights).enumerate() {
        let out = shapes[i];
        match layer.kind {
            LayerKind::ConvFirst | LayerKind::ConvBin => {
                let w = binary_weights(weights);
                let fan_in = layer.fan_in();
                let (kh, kw) = layer.kernel;
                let (sh, sw) = layer.stride;
                let mut data = vec![0i8; out.numel()];
                for oc in 0..out.channels {
                    let filter = &w[oc * fan_in..(oc + 1) * fan_in];
                    for oh in 0..out.height {
                        for ow in 0..out.width {
                            let mut sum: A = acc(layer.bias[oc] as i64);
                            for dy in 0..kh {
                                for dx in 0..kw {
                                    for c in 0..layer.in_channels {
                                        let wv = filter[(dy * kw + dx) * layer.in_channels + c] as i64;
                                        let (h, x) = (oh * sh + dy, ow * sw + dx);
                                        let xv = match &act {
                                            Activation::Fixed(t) => t.get(c, h, x).raw() as i64,
                                            Activation::Signs(t) => t.get(c, h, x) as i64,
                                        };
                                        sum = sum + acc::<A>(wv * xv);
                                    }
                                }
                            }
                            data[out.index(oc, oh, ow)] = sign(sum);
                        }
                    }
                }
                act = Activation::Signs(SignTensor { shape: out, data });
            }
            LayerKind::FcBin => {
                let w = binary_weights(weights);
                let a = signs(&act);
                let fan_in = layer.fan_in();
                let sums: Vec<A> = (0..out.channels)
                    .map(|oc| {
                        let row = &w[oc * fan_in..(oc + 1) * fan_in];
                        row.iter()
                            .zip(a.data())
                            .fold(acc::<A>(layer.bias[oc] as i64), |s, (&wv, &xv)| s + acc::<A>(wv as i64 * xv as i64))
                    })
                    .collect();
                if i == last {
                    logits = sums.clone();
                }
                act = Activation::Signs(SignTensor {
                    shape: out,
                    data: sums.iter().map(|&s| sign(s)).collect(),
                });
            }
            LayerKind::MaxPool => {
                let pooled = maxpool_signs(signs(&act), layer.pool);
                act = Activation::Signs(pooled);
            }
            LayerKind::FcLast16 => {
                let LayerWeights::Fixed(w) = weights else {
                    unreachable!("validated network")
                };
                let a = signs(&act);
                let fan_in = layer.fan_in();
                logits = (0..out.channels)
                    .map(|oc| {
                        let row = &w[oc * fan_in..(oc + 1) * fan_in];
                        row.iter().zip(a.data()).fold(acc::<A>(layer.bias[oc] as i64), |s, (wv, &xv)| {
                            s + acc::<A>(wv.raw() as i64 * xv as i64)
                        })
                    })
                    .collect();
                continue;
            }
        }
        if let Activation::Signs(t) = &act {
            intermediates.push(t.clone());
        }
    }

    Ok(ReferenceOutput {
        class_id: argmax(&logits),
        logits,
        intermediates,
    })
}

fn binary_weights(w: &LayerWeights) -> Vec<i8> {
    match w {
        LayerWeights::Binary(v) => v.unpack(),
        _ => unreachable!("validated network"),
    }
}

fn signs<'a>(act: &'a Activation) -> &'a SignTensor {
    match act {
        Activation::Signs(t) => t,
        Activation::Fixed(_) => unreachable!("validated network starts with conv_first"),
    }
}

/// Elementwise max over non-overlapping `pool` windows of a ±1 tensor.
pub fn maxpool_signs(t: &SignTensor, pool: (usize, usize)) -> SignTensor {
    let (ph, pw) = pool;
    let s = t.shape;
    let out = Shape3::new(s.channels, s.height / ph, s.width / pw);
    let mut data = vec![-1i8; out.numel()];
    for c in 0..out.channels {
        for oh in 0..out.height {
            for ow in 0..out.width {
                let mut m = -1i8;
                for dy in 0..ph {
                    for dx in 0..pw {
                        m = m.max(t.get(c, oh * ph + dy, ow * pw + dx));
                    }
                }
                data[out.index(c, oh, ow)] = m;
            }
        }
    }
    SignTensor { shape: out, data }
}

/// Max-pool applied to raw accumulator values, then binarized.
pub fn ref_maxpool_before_sign<A: Accumulator>(pre: &IntTensor<A>, pool: (usize, usize)) -> SignTensor {
    let (ph, pw) = pool;
    let s = pre.shape;
    let out = Shape3::new(s.channels, s.height / ph, s.width / pw);
    let mut data = vec![0i8; out.numel()];
    for c in 0..out.channels {
        for oh in 0..out.height {
            for ow in 0..out.width {
                let mut m = pre.get(c, oh * ph, ow * pw);
                for dy in 0..ph {
                    for dx in 0..pw {
                        m = m.max(pre.get(c, oh * ph + dy, ow * pw + dx));
                    }
                }
                data[out.index(c, oh, ow)] = sign(m);
            }
        }
    }
    SignTensor { shape: out, data }
}

/// Binarizes every element of an integer tensor.
pub fn sign_tensor<A: Accumulator>(pre: &IntTensor<A>) -> SignTensor {
    SignTensor {
        shape: pre.shape,
        data: pre.data.iter().map(|&x| sign(x)).collect(),
    }
}
