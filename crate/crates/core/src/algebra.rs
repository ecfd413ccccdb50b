//! Clifford algebra signatures, blade bookkeeping and geometric products.
//!
//! Coefficients are always stored in the canonical blade order
//! `[1, e1, e2, (e3), e1e2, (e1e3), (e2e3), (e1e2e3)]`. In three dimensions the
//! second bivector slot holds `e1e3`; the `e3e1 = -e1e3` orientation only
//! appears where dual pairs are formed (see the transforms module).

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Default regulariser added to `‖q‖²` before normalising a quaternion filter.
pub const QUAT_EPS: f64 = 1e-12;

/// A signature `(p, q)`: `p` generators square to `+1`, `q` to `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Signature {
    p: u8,
    q: u8,
}

impl Signature {
    pub const CL01: Signature = Signature { p: 0, q: 1 };
    pub const CL20: Signature = Signature { p: 2, q: 0 };
    pub const CL02: Signature = Signature { p: 0, q: 2 };
    pub const CL30: Signature = Signature { p: 3, q: 0 };

    /// Supports `1 ≤ p + q ≤ 3`.
    pub fn new(p: u8, q: u8) -> Result<Self> {
        let n = p as usize + q as usize;
        if !(1..=3).contains(&n) {
            return Err(Error::UnsupportedSignature { p, q });
        }
        Ok(Self { p, q })
    }

    pub fn p(self) -> u8 {
        self.p
    }

    pub fn q(self) -> u8 {
        self.q
    }

    /// Dimension of the generating vector space.
    pub fn dim(self) -> usize {
        (self.p + self.q) as usize
    }

    pub fn blade_count(self) -> usize {
        1 << self.dim()
    }

    /// `e_{k+1}²` for the zero-based generator index `k`.
    pub fn square(self, k: usize) -> f64 {
        if k < self.p as usize {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cl({},{})", self.p, self.q)
    }
}

const MASKS_1: [u8; 2] = [0b0, 0b1];
const MASKS_2: [u8; 4] = [0b00, 0b01, 0b10, 0b11];
const MASKS_3: [u8; 8] = [0b000, 0b001, 0b010, 0b100, 0b011, 0b101, 0b110, 0b111];

/// Generator bitmasks of the basis blades in storage order.
pub fn blade_masks(n: usize) -> &'static [u8] {
    match n {
        1 => &MASKS_1,
        2 => &MASKS_2,
        3 => &MASKS_3,
        _ => panic!("blade_masks: unsupported dimension {n}"),
    }
}

/// A basis blade as a bit set over generators (bit `i` ⇔ `e_{i+1}`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Blade(pub u8);

impl Blade {
    pub fn grade(self) -> u32 {
        self.0.count_ones()
    }

    /// Position of this blade in storage order.
    pub fn index(self, n: usize) -> usize {
        blade_masks(n)
            .iter()
            .position(|&m| m == self.0)
            .expect("blade mask out of range for dimension")
    }

    pub fn from_index(i: usize, n: usize) -> Self {
        Blade(blade_masks(n)[i])
    }

    pub fn name(self) -> String {
        if self.0 == 0 {
            return "1".into();
        }
        let digits: String = (0..8)
            .filter(|b| self.0 & (1 << b) != 0)
            .map(|b| char::from(b'1' + b as u8))
            .collect();
        format!("e{digits}")
    }
}

/// Product of two basis blades: `(result mask, sign)`.
///
/// The sign is `(-1)^t` for the `t` transpositions needed to sort the
/// concatenated generator list, times `e_k²` for every generator that cancels.
pub fn blade_product(sig: Signature, a: Blade, b: Blade) -> (Blade, f64) {
    let mut swaps = 0u32;
    for j in 0..8 {
        if b.0 & (1 << j) != 0 {
            swaps += (a.0 >> (j + 1)).count_ones();
        }
    }
    let mut sign = if swaps % 2 == 0 { 1.0 } else { -1.0 };
    let common = a.0 & b.0;
    for k in 0..8 {
        if common & (1 << k) != 0 {
            sign *= sig.square(k);
        }
    }
    (Blade(a.0 ^ b.0), sign)
}

/// One term `a[lhs]·b[rhs]` contributing with `sign` to output blade `out`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductTerm {
    pub lhs: usize,
    pub rhs: usize,
    pub out: usize,
    pub sign: f64,
}

const fn t(lhs: usize, rhs: usize, out: usize, sign: f64) -> ProductTerm {
    ProductTerm { lhs, rhs, out, sign }
}

/// The 16 terms of a four-blade product.
pub type Cl2Table = [ProductTerm; 16];

/// Cl(2,0), grouped by output blade.
pub const CL20_PRODUCT: Cl2Table = [
    t(0, 0, 0, 1.0),
    t(1, 1, 0, 1.0),
    t(2, 2, 0, 1.0),
    t(3, 3, 0, -1.0),
    t(0, 1, 1, 1.0),
    t(1, 0, 1, 1.0),
    t(2, 3, 1, -1.0),
    t(3, 2, 1, 1.0),
    t(0, 2, 2, 1.0),
    t(1, 3, 2, 1.0),
    t(2, 0, 2, 1.0),
    t(3, 1, 2, -1.0),
    t(0, 3, 3, 1.0),
    t(1, 2, 3, 1.0),
    t(2, 1, 3, -1.0),
    t(3, 0, 3, 1.0),
];

/// Cl(0,2), grouped by output blade.
pub const CL02_PRODUCT: Cl2Table = [
    t(0, 0, 0, 1.0),
    t(1, 1, 0, -1.0),
    t(2, 2, 0, -1.0),
    t(3, 3, 0, -1.0),
    t(0, 1, 1, 1.0),
    t(1, 0, 1, 1.0),
    t(2, 3, 1, 1.0),
    t(3, 2, 1, -1.0),
    t(0, 2, 2, 1.0),
    t(1, 3, 2, -1.0),
    t(2, 0, 2, 1.0),
    t(3, 1, 2, 1.0),
    t(0, 3, 3, 1.0),
    t(1, 2, 3, 1.0),
    t(2, 1, 3, -1.0),
    t(3, 0, 3, 1.0),
];

/// The specialised table for a two-dimensional signature.
pub fn product_table_2d(sig: Signature) -> Result<&'static Cl2Table> {
    match (sig.p, sig.q) {
        (2, 0) => Ok(&CL20_PRODUCT),
        (0, 2) => Ok(&CL02_PRODUCT),
        (p, q) => Err(Error::UnsupportedSignature { p, q }),
    }
}

/// Table-driven four-blade product.
#[inline]
pub fn gp2_with(table: &Cl2Table, a: &[f64; 4], b: &[f64; 4]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for term in table {
        out[term.out] += term.sign * a[term.lhs] * b[term.rhs];
    }
    out
}

/// Multiplication table of a signature, computed from the generator relations.
#[derive(Clone, Debug)]
pub struct BladeTable {
    signature: Signature,
    blades: usize,
    entries: Vec<(usize, f64)>,
}

impl BladeTable {
    pub fn new(signature: Signature) -> Self {
        let n = signature.dim();
        let nb = signature.blade_count();
        let mut entries = Vec::with_capacity(nb * nb);
        for i in 0..nb {
            for j in 0..nb {
                let (blade, sign) =
                    blade_product(signature, Blade::from_index(i, n), Blade::from_index(j, n));
                entries.push((blade.index(n), sign));
            }
        }
        Self {
            signature,
            blades: nb,
            entries,
        }
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn blade_count(&self) -> usize {
        self.blades
    }

    /// `(result blade index, sign)` of `blade_i · blade_j`.
    pub fn entry(&self, i: usize, j: usize) -> (usize, f64) {
        self.entries[i * self.blades + j]
    }

    pub fn terms(&self) -> Vec<ProductTerm> {
        let mut out = Vec::with_capacity(self.entries.len());
        for i in 0..self.blades {
            for j in 0..self.blades {
                let (k, s) = self.entry(i, j);
                out.push(t(i, j, k, s));
            }
        }
        out
    }

    /// Generic geometric product over all blade pairs.
    pub fn product(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        assert_eq!(a.len(), self.blades);
        assert_eq!(b.len(), self.blades);
        let mut out = vec![0.0; self.blades];
        for i in 0..self.blades {
            if a[i] == 0.0 {
                continue;
            }
            for j in 0..self.blades {
                let (k, s) = self.entry(i, j);
                out[k] += s * a[i] * b[j];
            }
        }
        out
    }
}

/// Builds the table for `Cl(p,q)`; only `p + q ≤ 3` is supported.
pub fn build_blade_table(p: u8, q: u8) -> Result<BladeTable> {
    Ok(BladeTable::new(Signature::new(p, q)?))
}

/// A multivector of a two-dimensional algebra: `[a0, a1, a2, a12]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Multivector2(pub [f64; 4]);

/// A multivector of Cl(3,0): `[a0, a1, a2, a3, a12, a13, a23, a123]`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Multivector3(pub [f64; 8]);

macro_rules! impl_mv_ops {
    ($ty:ident, $n:expr) => {
        impl $ty {
            pub const ZERO: $ty = $ty([0.0; $n]);

            pub fn scalar(s: f64) -> Self {
                let mut c = [0.0; $n];
                c[0] = s;
                $ty(c)
            }

            pub fn basis(i: usize) -> Self {
                let mut c = [0.0; $n];
                c[i] = 1.0;
                $ty(c)
            }

            pub fn coeffs(&self) -> &[f64; $n] {
                &self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }

            pub fn max_abs_diff(&self, other: &Self) -> f64 {
                self.0
                    .iter()
                    .zip(other.0.iter())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            }
        }

        impl Index<usize> for $ty {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }

        impl IndexMut<usize> for $ty {
            fn index_mut(&mut self, i: usize) -> &mut f64 {
                &mut self.0[i]
            }
        }

        impl Add for $ty {
            type Output = $ty;
            fn add(mut self, rhs: $ty) -> $ty {
                for (a, b) in self.0.iter_mut().zip(rhs.0) {
                    *a += b;
                }
                self
            }
        }

        impl Sub for $ty {
            type Output = $ty;
            fn sub(mut self, rhs: $ty) -> $ty {
                for (a, b) in self.0.iter_mut().zip(rhs.0) {
                    *a -= b;
                }
                self
            }
        }

        impl Neg for $ty {
            type Output = $ty;
            fn neg(mut self) -> $ty {
                self.0.iter_mut().for_each(|a| *a = -*a);
                self
            }
        }

        impl Mul<f64> for $ty {
            type Output = $ty;
            fn mul(mut self, s: f64) -> $ty {
                self.0.iter_mut().for_each(|a| *a *= s);
                self
            }
        }
    };
}

impl_mv_ops!(Multivector2, 4);
impl_mv_ops!(Multivector3, 8);

impl Multivector2 {
    pub fn new(a0: f64, a1: f64, a2: f64, a12: f64) -> Self {
        Multivector2([a0, a1, a2, a12])
    }
}

/// Geometric product in Cl(2,0) or Cl(0,2).
pub fn geometric_product_2d(
    a: &Multivector2,
    b: &Multivector2,
    signature: Signature,
) -> Result<Multivector2> {
    let table = product_table_2d(signature)?;
    Ok(Multivector2(gp2_with(table, &a.0, &b.0)))
}

/// Geometric product in Cl(3,0), written out term by term.
pub fn geometric_product_3d(a: &Multivector3, b: &Multivector3) -> Multivector3 {
    let [a0, a1, a2, a3, a12, a13, a23, a123] = a.0;
    let [b0, b1, b2, b3, b12, b13, b23, b123] = b.0;
    Multivector3([
        a0 * b0 + a1 * b1 + a2 * b2 + a3 * b3 - a12 * b12 - a13 * b13 - a23 * b23 - a123 * b123,
        a0 * b1 + a1 * b0 - a2 * b12 - a3 * b13 + a12 * b2 + a13 * b3 - a23 * b123 - a123 * b23,
        a0 * b2 + a1 * b12 + a2 * b0 - a3 * b23 - a12 * b1 + a13 * b123 + a23 * b3 + a123 * b13,
        a0 * b3 + a1 * b13 + a2 * b23 + a3 * b0 - a12 * b123 - a13 * b1 - a23 * b2 - a123 * b12,
        a0 * b12 + a1 * b2 - a2 * b1 + a3 * b123 + a12 * b0 - a13 * b23 + a23 * b13 + a123 * b3,
        a0 * b13 + a1 * b3 - a2 * b123 - a3 * b1 + a12 * b23 + a13 * b0 - a23 * b12 - a123 * b2,
        a0 * b23 + a1 * b123 + a2 * b3 - a3 * b2 - a12 * b13 + a13 * b12 + a23 * b0 + a123 * b1,
        a0 * b123 + a1 * b23 - a2 * b13 + a3 * b12 + a12 * b3 - a13 * b2 + a23 * b1 + a123 * b0,
    ])
}

/// `a* = a · i_{p+q}` for coefficients in storage order.
pub fn dual(a: &[f64], signature: Signature) -> Result<Vec<f64>> {
    let nb = signature.blade_count();
    if a.len() != nb {
        return Err(Error::BladeCount {
            expected: nb,
            got: a.len(),
        });
    }
    let table = BladeTable::new(signature);
    let mut pseudo = vec![0.0; nb];
    pseudo[nb - 1] = 1.0;
    Ok(table.product(a, &pseudo))
}

impl Multivector2 {
    pub fn dual(&self, signature: Signature) -> Result<Multivector2> {
        geometric_product_2d(self, &Multivector2::basis(3), signature)
    }
}

impl Multivector3 {
    pub fn dual(&self) -> Multivector3 {
        geometric_product_3d(self, &Multivector3::basis(7))
    }
}

/// Splits the geometric product of two plane vectors into `(⟨x,y⟩, x∧y)`.
pub fn vector_inner_wedge(x: [f64; 2], y: [f64; 2]) -> (f64, f64) {
    (x[0] * y[0] + x[1] * y[1], x[0] * y[1] - x[1] * y[0])
}

/// `w0 + w1 î + w2 ĵ + w3 k̂`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Quaternion {
    pub w0: f64,
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
}

impl Quaternion {
    pub fn new(w0: f64, w1: f64, w2: f64, w3: f64) -> Self {
        Self { w0, w1, w2, w3 }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.w0, self.w1, self.w2, self.w3]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn norm_sqr(self) -> f64 {
        self.w0 * self.w0 + self.w1 * self.w1 + self.w2 * self.w2 + self.w3 * self.w3
    }

    pub fn norm(self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn conj(self) -> Self {
        Self::new(self.w0, -self.w1, -self.w2, -self.w3)
    }

    /// `q / sqrt(‖q‖² + eps)`.
    pub fn normalized(self, eps: f64) -> Result<Self> {
        let s = self.norm_sqr() + eps;
        if s <= 0.0 {
            return Err(Error::ZeroQuaternion);
        }
        let inv = 1.0 / s.sqrt();
        Ok(Self::new(self.w0 * inv, self.w1 * inv, self.w2 * inv, self.w3 * inv))
    }

    /// Coefficients carried over unchanged onto `(1, e1, e2, e1e2)` of Cl(0,2).
    pub fn to_multivector(self) -> Multivector2 {
        Multivector2(self.to_array())
    }

    pub fn from_multivector(m: &Multivector2) -> Self {
        Self::from_array(m.0)
    }
}

/// Hamilton product.
pub fn quaternion_product(a: Quaternion, b: Quaternion) -> Quaternion {
    Quaternion::new(
        a.w0 * b.w0 - a.w1 * b.w1 - a.w2 * b.w2 - a.w3 * b.w3,
        a.w0 * b.w1 + a.w1 * b.w0 + a.w2 * b.w3 - a.w3 * b.w2,
        a.w0 * b.w2 - a.w1 * b.w3 + a.w2 * b.w0 + a.w3 * b.w1,
        a.w0 * b.w3 + a.w1 * b.w2 - a.w2 * b.w1 + a.w3 * b.w0,
    )
}

impl Mul for Quaternion {
    type Output = Quaternion;
    fn mul(self, rhs: Quaternion) -> Quaternion {
        quaternion_product(self, rhs)
    }
}

/// Rotation matrix of an already normalised quaternion, acting on the
/// `(vector₁, vector₂, bivector)` slots.
pub fn rotation_matrix_unit(u: [f64; 4]) -> [[f64; 3]; 3] {
    let [a, b, c, d] = u;
    [
        [
            1.0 - 2.0 * (c * c + d * d),
            2.0 * (b * c - a * d),
            2.0 * (b * d + a * c),
        ],
        [
            2.0 * (b * c + a * d),
            1.0 - 2.0 * (b * b + d * d),
            2.0 * (c * d - a * b),
        ],
        [
            2.0 * (b * d - a * c),
            2.0 * (c * d + a * b),
            1.0 - 2.0 * (b * b + c * c),
        ],
    ]
}

/// Pulls a cotangent on the matrix of [`rotation_matrix_unit`] back onto `u`.
pub fn rotation_matrix_unit_vjp(u: [f64; 4], g: &[[f64; 3]; 3]) -> [f64; 4] {
    let [a, b, c, d] = u;
    let mut ga = 0.0;
    let mut gb = 0.0;
    let mut gc = 0.0;
    let mut gd = 0.0;
    // row 0
    gc += -4.0 * c * g[0][0];
    gd += -4.0 * d * g[0][0];
    gb += 2.0 * c * g[0][1];
    gc += 2.0 * b * g[0][1];
    ga += -2.0 * d * g[0][1];
    gd += -2.0 * a * g[0][1];
    gb += 2.0 * d * g[0][2];
    gd += 2.0 * b * g[0][2];
    ga += 2.0 * c * g[0][2];
    gc += 2.0 * a * g[0][2];
    // row 1
    gb += 2.0 * c * g[1][0];
    gc += 2.0 * b * g[1][0];
    ga += 2.0 * d * g[1][0];
    gd += 2.0 * a * g[1][0];
    gb += -4.0 * b * g[1][1];
    gd += -4.0 * d * g[1][1];
    gc += 2.0 * d * g[1][2];
    gd += 2.0 * c * g[1][2];
    ga += -2.0 * b * g[1][2];
    gb += -2.0 * a * g[1][2];
    // row 2
    gb += 2.0 * d * g[2][0];
    gd += 2.0 * b * g[2][0];
    ga += -2.0 * c * g[2][0];
    gc += -2.0 * a * g[2][0];
    gc += 2.0 * d * g[2][1];
    gd += 2.0 * c * g[2][1];
    ga += 2.0 * b * g[2][1];
    gb += 2.0 * a * g[2][1];
    gb += -4.0 * b * g[2][2];
    gc += -4.0 * c * g[2][2];
    [ga, gb, gc, gd]
}

/// Normalises `q` by `sqrt(‖q‖² + epsilon)` and builds its rotation matrix.
pub fn quaternion_rotation_matrix(q: Quaternion, epsilon: f64) -> Result<[[f64; 3]; 3]> {
    if q.norm_sqr() == 0.0 && epsilon == 0.0 {
        return Err(Error::ZeroQuaternion);
    }
    let u = q.normalized(epsilon)?;
    Ok(rotation_matrix_unit(u.to_array()))
}
