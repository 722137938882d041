#![allow(dead_code)]

use bnnsim::bitpack::Shape3;
use bnnsim::model::{generate_random, ArchLayer, ArchSpec, Fixed16, FixedTensor, LayerKind, NetworkSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const POOLS: [[usize; 2]; 3] = [[1, 2], [2, 2], [1, 3]];

fn conv(kind: LayerKind, rng: &mut impl Rng, h: &mut usize, w: &mut usize, max_ch: usize) -> ArchLayer {
    let kh = rng.gen_range(1..=(*h).min(2));
    let kw = rng.gen_range(1..=(*w).min(3));
    let sh = rng.gen_range(1..=2);
    let sw = rng.gen_range(1..=2);
    *h = (*h - kh) / sh + 1;
    *w = (*w - kw) / sw + 1;
    ArchLayer {
        kind,
        out_channels: Some(rng.gen_range(1..=max_ch)),
        kernel: Some([kh, kw]),
        stride: Some([sh, sw]),
        pool: None,
    }
}

fn maybe_pool(rng: &mut impl Rng, layers: &mut Vec<ArchLayer>, h: &mut usize, w: &mut usize) {
    if rng.gen_bool(0.6) {
        let [ph, pw] = POOLS[rng.gen_range(0..POOLS.len())];
        if *h >= ph && *w >= pw {
            layers.push(ArchLayer::max_pool([ph, pw]));
            *h /= ph;
            *w /= pw;
        }
    }
}

/// A small random architecture. Widths are chosen so fan-ins regularly
/// straddle word boundaries and every layer kind shows up over many seeds.
pub fn random_arch(rng: &mut impl Rng) -> ArchSpec {
    let input = Shape3::new(rng.gen_range(1..=3), rng.gen_range(1..=3), rng.gen_range(3..=12));
    let (mut h, mut w) = (input.height, input.width);
    let mut layers = vec![conv(LayerKind::ConvFirst, rng, &mut h, &mut w, 40)];
    maybe_pool(rng, &mut layers, &mut h, &mut w);
    for _ in 0..rng.gen_range(0..=3) {
        layers.push(conv(LayerKind::ConvBin, rng, &mut h, &mut w, 70));
        maybe_pool(rng, &mut layers, &mut h, &mut w);
    }
    for _ in 0..rng.gen_range(0..=2) {
        layers.push(ArchLayer::fc_bin(rng.gen_range(1..=90)));
    }
    let classes = rng.gen_range(1..=6);
    layers.push(if rng.gen_bool(0.5) {
        ArchLayer::fc_last16(classes)
    } else {
        ArchLayer::fc_bin(classes)
    });
    ArchSpec::new(input, layers)
}

pub fn random_input(shape: Shape3, rng: &mut impl Rng) -> FixedTensor {
    FixedTensor::new(shape, (0..shape.numel()).map(|_| Fixed16::from_raw(rng.gen())).collect())
}

/// Inputs symmetric around zero with moderate magnitude.
pub fn balanced_input(shape: Shape3, rng: &mut impl Rng) -> FixedTensor {
    FixedTensor::new(
        shape,
        (0..shape.numel())
            .map(|_| Fixed16::from_raw(rng.gen_range(-1024..=1024)))
            .collect(),
    )
}

pub fn random_case(seed: u64) -> (NetworkSpec, FixedTensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = random_arch(&mut rng);
    let net = generate_random(&arch, rng.gen()).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{}", arch.to_toml()));
    let input = random_input(net.input_shape, &mut rng);
    (net, input)
}
