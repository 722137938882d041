use super::{BitpackError, WordWidth};

/// A logical vector of ±1 values packed one bit per value.
///
/// Storage is a run of 64-bit limbs; the word width only decides how the
/// vector is chunked into memory entries and fused instructions, so the same
/// logical bits can be viewed at any supported width via [`with_width`].
///
/// [`with_width`]: PackedBitVector::with_width
#[derive(Debug, Clone, Eq)]
pub struct PackedBitVector {
    limbs: Vec<u64>,
    len: usize,
    width: WordWidth,
}

#[inline]
fn limb_count(bits: usize) -> usize {
    bits.div_ceil(64)
}

#[inline]
fn low_mask(n: usize) -> u64 {
    if n >= 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

impl PackedBitVector {
    pub fn new(width: WordWidth) -> Self {
        PackedBitVector {
            limbs: Vec::new(),
            len: 0,
            width,
        }
    }

    pub fn with_capacity(bits: usize, width: WordWidth) -> Self {
        PackedBitVector {
            limbs: Vec::with_capacity(limb_count(bits)),
            len: 0,
            width,
        }
    }

    /// All-`-1` vector of `len` bits.
    pub fn zeros(len: usize, width: WordWidth) -> Self {
        PackedBitVector {
            limbs: vec![0; limb_count(len)],
            len,
            width,
        }
    }

    /// All-`+1` vector of `len` bits.
    pub fn ones(len: usize, width: WordWidth) -> Self {
        let mut v = PackedBitVector {
            limbs: vec![u64::MAX; limb_count(len)],
            len,
            width,
        };
        v.canonicalize();
        v
    }

    /// Packs a sequence of ±1 integers.
    pub fn pack<T>(values: &[T], width: WordWidth) -> Result<Self, BitpackError>
    where
        T: Copy + Into<i64>,
    {
        let mut v = Self::with_capacity(values.len(), width);
        for (index, &x) in values.iter().enumerate() {
            match x.into() {
                1 => v.push(true),
                -1 => v.push(false),
                value => return Err(BitpackError::InvalidValue { index, value }),
            }
        }
        Ok(v)
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I, width: WordWidth) -> Self {
        let mut v = Self::new(width);
        for b in bits {
            v.push(b);
        }
        v
    }

    /// Wraps raw limbs as-is. Bits at positions `>= len` are allowed to be
    /// non-zero; [`signed_dot`] never reads them.
    ///
    /// # Panics
    /// If `limbs` does not hold exactly `ceil(len / 64)` limbs.
    pub fn from_raw_parts(limbs: Vec<u64>, len: usize, width: WordWidth) -> Self {
        assert_eq!(limbs.len(), limb_count(len), "limb count does not match length");
        PackedBitVector { limbs, len, width }
    }

    pub fn unpack(&self) -> Vec<i8> {
        self.iter().map(|b| if b { 1 } else { -1 }).collect()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn width(&self) -> WordWidth {
        self.width
    }

    /// Number of m-bit memory entries the vector occupies.
    #[inline]
    pub fn word_count(&self) -> usize {
        self.width.entries_for(self.len)
    }

    /// The same logical bits chunked at a different width.
    pub fn with_width(&self, width: WordWidth) -> Self {
        PackedBitVector {
            limbs: self.limbs.clone(),
            len: self.len,
            width,
        }
    }

    pub fn raw_limbs(&self) -> &[u64] {
        &self.limbs
    }

    /// Mutable access to the raw limbs, padding included.
    pub fn raw_limbs_mut(&mut self) -> &mut [u64] {
        &mut self.limbs
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        (self.limbs[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.limbs[i / 64] |= mask;
        } else {
            self.limbs[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn push(&mut self, bit: bool) {
        if self.len.is_multiple_of(64) {
            self.limbs.push(0);
        }
        if bit {
            self.limbs[self.len / 64] |= 1u64 << (self.len % 64);
        }
        self.len += 1;
    }

    /// Appends `len` bits read from `src` starting at bit `start`.
    pub fn extend_from_range(&mut self, src: &PackedBitVector, start: usize, len: usize) {
        assert!(start + len <= src.len, "range exceeds source length");
        let mut copied = 0;
        while copied < len {
            let n = (len - copied).min(64);
            let chunk = src.read_bits(start + copied, n);
            self.push_bits(chunk, n);
            copied += n;
        }
    }

    /// Reads up to 64 bits starting at `pos`, LSB-first.
    fn read_bits(&self, pos: usize, n: usize) -> u64 {
        debug_assert!(n <= 64);
        if n == 0 {
            return 0;
        }
        let limb = pos / 64;
        let offset = pos % 64;
        let mut out = self.limbs[limb] >> offset;
        if offset != 0 && offset + n > 64 {
            out |= self.limbs[limb + 1] << (64 - offset);
        }
        out & low_mask(n)
    }

    fn push_bits(&mut self, bits: u64, n: usize) {
        debug_assert!(n <= 64);
        if n == 0 {
            return;
        }
        let bits = bits & low_mask(n);
        let offset = self.len % 64;
        if offset == 0 {
            self.limbs.push(bits);
        } else {
            let last = self.limbs.len() - 1;
            self.limbs[last] |= bits << offset;
            if offset + n > 64 {
                self.limbs.push(bits >> (64 - offset));
            }
        }
        self.len += n;
    }

    /// Clears every bit at a position `>= len`.
    pub fn canonicalize(&mut self) {
        let tail = self.len % 64;
        if tail != 0 {
            if let Some(last) = self.limbs.last_mut() {
                *last &= low_mask(tail);
            }
        }
    }

    pub fn is_canonical(&self) -> bool {
        let tail = self.len % 64;
        tail == 0 || self.limbs.last().is_none_or(|l| l & !low_mask(tail) == 0)
    }

    pub fn count_ones(&self) -> usize {
        let mut n = 0usize;
        for (i, &limb) in self.limbs.iter().enumerate() {
            let valid = (self.len - i * 64).min(64);
            n += (limb & low_mask(valid)).count_ones() as usize;
        }
        n
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(move |i| self.get(i))
    }

    /// Bitwise complement over the valid bits.
    pub fn complement(&self) -> Self {
        let mut v = PackedBitVector {
            limbs: self.limbs.iter().map(|l| !l).collect(),
            len: self.len,
            width: self.width,
        };
        v.canonicalize();
        v
    }

    /// Little-endian bytes of the valid bits, `ceil(len / 8)` long.
    pub fn to_le_bytes(&self) -> Vec<u8> {
        let n = self.len.div_ceil(8);
        let mut out = Vec::with_capacity(n);
        for (i, limb) in self.limbs.iter().enumerate() {
            let valid = (self.len - i * 64).min(64);
            let bytes = (limb & low_mask(valid)).to_le_bytes();
            out.extend_from_slice(&bytes);
        }
        out.truncate(n);
        out
    }

    pub fn from_le_bytes(bytes: &[u8], len: usize, width: WordWidth) -> Self {
        assert!(bytes.len() >= len.div_ceil(8), "not enough bytes for {len} bits");
        let mut limbs = vec![0u64; limb_count(len)];
        for (i, &b) in bytes.iter().take(len.div_ceil(8)).enumerate() {
            limbs[i / 8] |= (b as u64) << (8 * (i % 8));
        }
        let mut v = PackedBitVector { limbs, len, width };
        v.canonicalize();
        v
    }
}

impl PartialEq for PackedBitVector {
    fn eq(&self, other: &Self) -> bool {
        if self.len != other.len || self.width != other.width {
            return false;
        }
        self.limbs
            .iter()
            .zip(&other.limbs)
            .enumerate()
            .all(|(i, (a, b))| {
                let valid = (self.len - i * 64).min(64);
                (a ^ b) & low_mask(valid) == 0
            })
    }
}

/// Popcount of `xnor(a, b)` restricted to bit positions `[start, end)`.
#[inline]
fn xnor_popcount_range(a: &[u64], b: &[u64], start: usize, end: usize) -> u32 {
    let mut count = 0;
    let mut pos = start;
    while pos < end {
        let limb = pos / 64;
        let offset = pos % 64;
        let take = (end - pos).min(64 - offset);
        let x = !(a[limb] ^ b[limb]) >> offset;
        count += (x & low_mask(take)).count_ones();
        pos += take;
    }
    count
}

/// Σ aᵢ·bᵢ over ±1 semantics, accumulated one m-bit chunk at a time as
/// `temp += 2·pcnt(xnor(a_M, b_M)) − n_valid`.
///
/// The xnor result of a partial tail chunk is masked to its valid bits, so
/// padding contributes nothing whatever its contents.
pub fn signed_dot(a: &PackedBitVector, b: &PackedBitVector) -> Result<i32, BitpackError> {
    check_compatible(a, b)?;
    let m = a.width.bits();
    let mut temp = 0i32;
    let mut start = 0;
    while start < a.len {
        let end = (start + m).min(a.len);
        let pcnt = xnor_popcount_range(&a.limbs, &b.limbs, start, end) as i32;
        temp += 2 * pcnt - (end - start) as i32;
        start = end;
    }
    Ok(temp)
}

/// Faulty variant of [`signed_dot`] that popcounts whole tail words without
/// masking. Only useful for mutation testing of differential harnesses.
#[doc(hidden)]
pub fn signed_dot_unmasked_tail(
    a: &PackedBitVector,
    b: &PackedBitVector,
) -> Result<i32, BitpackError> {
    check_compatible(a, b)?;
    let m = a.width.bits();
    let limbs = a.limbs.len();
    let mut temp = 0i32;
    let mut start = 0;
    while start < a.len {
        let end = (start + m).min(a.len);
        let mut pcnt = 0i32;
        for pos in start..start + m {
            let limb = pos / 64;
            let (x, y) = if limb < limbs {
                (a.limbs[limb], b.limbs[limb])
            } else {
                (0, 0)
            };
            pcnt += ((!(x ^ y) >> (pos % 64)) & 1) as i32;
        }
        temp += 2 * pcnt - (end - start) as i32;
        start = end;
    }
    Ok(temp)
}

fn check_compatible(a: &PackedBitVector, b: &PackedBitVector) -> Result<(), BitpackError> {
    if a.len != b.len {
        return Err(BitpackError::LengthMismatch {
            left: a.len,
            right: b.len,
        });
    }
    if a.width != b.width {
        return Err(BitpackError::WidthMismatch {
            left: a.width,
            right: b.width,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_dot(a: &[i8], b: &[i8]) -> i32 {
        a.iter().zip(b).map(|(&x, &y)| x as i32 * y as i32).sum()
    }

    #[test]
    fn pack_examples() {
        let v = PackedBitVector::pack(&[1i8, -1, 1], WordWidth::W32).unwrap();
        assert_eq!(v.raw_limbs(), &[0b101]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.word_count(), 1);

        let empty = PackedBitVector::pack::<i8>(&[], WordWidth::W64).unwrap();
        assert_eq!(empty.word_count(), 0);
        assert!(empty.raw_limbs().is_empty());
        assert!(empty.unpack().is_empty());
    }

    #[test]
    fn pack_rejects_non_sign_values() {
        let err = PackedBitVector::pack(&[1i8, 0, -1], WordWidth::W32).unwrap_err();
        assert_eq!(err, BitpackError::InvalidValue { index: 1, value: 0 });
        assert!(PackedBitVector::pack(&[2i32], WordWidth::W32).is_err());
    }

    #[test]
    fn unpack_example() {
        let v = PackedBitVector::from_raw_parts(vec![0b101], 3, WordWidth::W32);
        assert_eq!(v.unpack(), vec![1, -1, 1]);
    }

    #[test]
    fn dot_identical_and_opposite() {
        let a = PackedBitVector::pack(&[1i8, -1, -1, 1, 1, 1, -1, 1], WordWidth::W32).unwrap();
        assert_eq!(signed_dot(&a, &a).unwrap(), 8);
        assert_eq!(signed_dot(&a, &a.complement()).unwrap(), -8);
    }

    #[test]
    fn dot_mismatch_errors() {
        let a = PackedBitVector::zeros(10, WordWidth::W32);
        let b = PackedBitVector::zeros(11, WordWidth::W32);
        assert!(matches!(
            signed_dot(&a, &b),
            Err(BitpackError::LengthMismatch { .. })
        ));
        let c = PackedBitVector::zeros(10, WordWidth::W64);
        assert!(matches!(
            signed_dot(&a, &c),
            Err(BitpackError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn dot_exhaustive_small_lengths() {
        // every pair of vectors for lengths up to 6, at every width
        for len in 0..=6usize {
            for x in 0u32..(1 << len) {
                for y in 0u32..(1 << len) {
                    let a: Vec<i8> = (0..len).map(|i| if x >> i & 1 == 1 { 1 } else { -1 }).collect();
                    let b: Vec<i8> = (0..len).map(|i| if y >> i & 1 == 1 { 1 } else { -1 }).collect();
                    let expected = scalar_dot(&a, &b);
                    for w in WordWidth::ALL {
                        let pa = PackedBitVector::pack(&a, w).unwrap();
                        let pb = PackedBitVector::pack(&b, w).unwrap();
                        assert_eq!(signed_dot(&pa, &pb).unwrap(), expected);
                    }
                }
            }
        }
    }

    #[test]
    fn unmasked_tail_is_wrong_on_partial_chunks() {
        let a = PackedBitVector::pack(&[1i8, -1, 1], WordWidth::W32).unwrap();
        let b = PackedBitVector::pack(&[-1i8, -1, 1], WordWidth::W32).unwrap();
        assert_eq!(signed_dot(&a, &b).unwrap(), 1);
        assert_eq!(signed_dot_unmasked_tail(&a, &b).unwrap(), 1 + 2 * 29);
        let full = PackedBitVector::zeros(64, WordWidth::W32);
        assert_eq!(
            signed_dot_unmasked_tail(&full, &full).unwrap(),
            signed_dot(&full, &full).unwrap()
        );
    }

    #[test]
    fn extend_from_range_copies_unaligned_bits() {
        let src = PackedBitVector::from_bits((0..200).map(|i| (i * 7) % 3 == 0), WordWidth::W64);
        for (start, len) in [(0, 0), (3, 61), (63, 2), (10, 130), (0, 200), (137, 63)] {
            let mut dst = PackedBitVector::from_bits([true, false, true], WordWidth::W64);
            dst.extend_from_range(&src, start, len);
            assert_eq!(dst.len(), 3 + len);
            for i in 0..len {
                assert_eq!(dst.get(3 + i), src.get(start + i));
            }
            assert!(dst.is_canonical());
        }
    }

    #[test]
    fn byte_round_trip_and_padding() {
        let v = PackedBitVector::from_bits((0..77).map(|i| i % 5 == 1), WordWidth::W128);
        let bytes = v.to_le_bytes();
        assert_eq!(bytes.len(), 10);
        assert_eq!(PackedBitVector::from_le_bytes(&bytes, 77, WordWidth::W128), v);

        let mut dirty = v.clone();
        dirty.raw_limbs_mut()[1] |= 1 << 40;
        assert!(!dirty.is_canonical());
        assert_eq!(dirty, v);
        assert_eq!(dirty.count_ones(), v.count_ones());
    }

    #[test]
    fn ones_and_zeros() {
        let o = PackedBitVector::ones(70, WordWidth::W32);
        assert!(o.is_canonical());
        assert_eq!(o.count_ones(), 70);
        assert_eq!(PackedBitVector::zeros(70, WordWidth::W32).count_ones(), 0);
    }
}
