//! Multivector fields on regular grids.
//!
//! Data is blade-major: `[blade][channel][spatial...]`, row-major in the
//! spatial axes, so every `(blade, channel)` plane is a contiguous slice.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::algebra::Signature;
use crate::error::{Error, Result};

/// Row-major strides of a shape.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Copies `src` (shape `dims`) into `dst` so that `dst[(x + off) mod N] = src[x]`.
pub fn shift_plane(src: &[f64], dst: &mut [f64], dims: &[usize], offsets: &[isize]) {
    let st = strides(dims);
    let shift: Vec<usize> = dims
        .iter()
        .zip(offsets)
        .map(|(&n, &o)| o.rem_euclid(n as isize) as usize)
        .collect();
    for (flat, &v) in src.iter().enumerate() {
        let mut rem = flat;
        let mut out = 0;
        for a in 0..dims.len() {
            let i = rem / st[a];
            rem %= st[a];
            out += ((i + shift[a]) % dims[a]) * st[a];
        }
        dst[out] = v;
    }
}

/// A real multi-channel grid, `[channel][spatial...]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RealGrid {
    pub channels: usize,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl RealGrid {
    pub fn new(channels: usize, dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = channels * dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "grid data has {} values, shape needs {n}",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            dims,
            data,
        })
    }

    pub fn zeros(channels: usize, dims: Vec<usize>) -> Self {
        let n = channels * dims.iter().product::<usize>();
        Self {
            channels,
            dims,
            data: vec![0.0; n],
        }
    }
}

/// Multivector-valued feature maps over a 2D or 3D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct MultivectorField {
    signature: Signature,
    channels: usize,
    dims: Vec<usize>,
    spacing: Vec<f64>,
    data: Vec<f64>,
}

impl MultivectorField {
    pub fn zeros(signature: Signature, channels: usize, dims: &[usize]) -> Result<Self> {
        check_shape(channels, dims)?;
        let n = signature.blade_count() * channels * dims.iter().product::<usize>();
        Ok(Self {
            signature,
            channels,
            dims: dims.to_vec(),
            spacing: vec![1.0; dims.len()],
            data: vec![0.0; n],
        })
    }

    pub fn from_data(
        signature: Signature,
        channels: usize,
        dims: &[usize],
        data: Vec<f64>,
    ) -> Result<Self> {
        check_shape(channels, dims)?;
        let n = signature.blade_count() * channels * dims.iter().product::<usize>();
        if data.len() != n {
            return Err(Error::Shape(format!(
                "field data has {} values, shape needs {n}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at flat index {i}")));
        }
        Ok(Self {
            signature,
            channels,
            dims: dims.to_vec(),
            spacing: vec![1.0; dims.len()],
            data,
        })
    }

    pub fn with_spacing(mut self, spacing: &[f64]) -> Result<Self> {
        if spacing.len() != self.dims.len() {
            return Err(Error::Shape("spacing needs one entry per spatial axis".into()));
        }
        self.spacing = spacing.to_vec();
        Ok(self)
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn blades(&self) -> usize {
        self.signature.blade_count()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn spatial_len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, blade: usize, channel: usize) -> &[f64] {
        let n = self.spatial_len();
        let off = (blade * self.channels + channel) * n;
        &self.data[off..off + n]
    }

    pub fn plane_mut(&mut self, blade: usize, channel: usize) -> &mut [f64] {
        let n = self.spatial_len();
        let off = (blade * self.channels + channel) * n;
        &mut self.data[off..off + n]
    }

    /// Coefficients of the multivector at one grid point.
    pub fn at(&self, channel: usize, flat: usize) -> Vec<f64> {
        (0..self.blades())
            .map(|b| self.plane(b, channel)[flat])
            .collect()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.signature == other.signature
            && self.channels == other.channels
            && self.dims == other.dims
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if !self.same_shape(other) {
            return Err(Error::Shape("field shapes differ".into()));
        }
        let mut out = self.clone();
        for (a, b) in out.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `‖self − other‖₂ / ‖other‖₂` (absolute when `other` is zero).
    pub fn rel_l2(&self, other: &Self) -> f64 {
        let num: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = other.data.iter().map(|b| b * b).sum();
        if den == 0.0 {
            num.sqrt()
        } else {
            (num / den).sqrt()
        }
    }

    /// Periodic shift: `out(x + t) = in(x)`.
    pub fn circular_shift(&self, offsets: &[isize]) -> Result<Self> {
        if offsets.len() != self.dims.len() {
            return Err(Error::Shape("one offset per spatial axis".into()));
        }
        let mut out = self.clone();
        let n = self.spatial_len();
        for (src, dst) in self.data.chunks(n).zip(out.data.chunks_mut(n)) {
            shift_plane(src, dst, &self.dims, offsets);
        }
        Ok(out)
    }

    /// Extends every spatial axis by `margin` wrap-around cells on both sides.
    pub fn pad_periodic(&self, margin: &[usize]) -> Result<Self> {
        if margin.len() != self.dims.len() {
            return Err(Error::Shape("one margin per spatial axis".into()));
        }
        let new_dims: Vec<usize> = self
            .dims
            .iter()
            .zip(margin)
            .map(|(n, m)| n + 2 * m)
            .collect();
        let ost = strides(&new_dims);
        let ist = strides(&self.dims);
        let n_out: usize = new_dims.iter().product();
        let n_in = self.spatial_len();
        let mut data = Vec::with_capacity(self.blades() * self.channels * n_out);
        for src in self.data.chunks(n_in) {
            for flat in 0..n_out {
                let mut rem = flat;
                let mut idx = 0;
                for a in 0..new_dims.len() {
                    let i = rem / ost[a];
                    rem %= ost[a];
                    let n = self.dims[a] as isize;
                    let j = (i as isize - margin[a] as isize).rem_euclid(n) as usize;
                    idx += j * ist[a];
                }
                data.push(src[idx]);
            }
        }
        Ok(Self {
            signature: self.signature,
            channels: self.channels,
            dims: new_dims,
            spacing: self.spacing.clone(),
            data,
        })
    }
}

fn check_shape(channels: usize, dims: &[usize]) -> Result<()> {
    if channels == 0 {
        return Err(Error::Shape("channel count must be at least 1".into()));
    }
    if !(2..=3).contains(&dims.len()) {
        return Err(Error::Shape(format!(
            "fields have 2 or 3 spatial axes, got {}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::Shape("spatial axes must be non-empty".into()));
    }
    Ok(())
}

/// A named physical field placed in one blade slot, optionally negated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PackEntry {
    pub name: String,
    pub blade: usize,
    #[serde(default = "one")]
    pub sign: f64,
}

fn one() -> f64 {
    1.0
}

/// Injective assignment of physical fields to blades.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldPacking {
    entries: Vec<PackEntry>,
}

impl FieldPacking {
    pub fn new(entries: Vec<PackEntry>) -> Result<Self> {
        let mut seen = Vec::new();
        for e in &entries {
            if e.sign != 1.0 && e.sign != -1.0 {
                return Err(Error::Invalid(format!("sign of {} must be ±1", e.name)));
            }
            if seen.contains(&e.blade) {
                return Err(Error::DuplicateBlade(e.blade));
            }
            seen.push(e.blade);
        }
        Ok(Self { entries })
    }

    pub fn from_pairs(pairs: &[(&str, usize)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(name, blade)| PackEntry {
                    name: name.to_string(),
                    blade,
                    sign: 1.0,
                })
                .collect(),
        )
    }

    /// Scalar `s` in the scalar blade, velocity in the vector blades.
    pub fn scalar_velocity_2d() -> Self {
        Self::from_pairs(&[("scalar", 0), ("velocity_x", 1), ("velocity_y", 2)])
            .expect("static packing")
    }

    /// `F = D + H·i₃`: `D` in e1,e2,e3; `Hx→e2e3`, `Hy→−e1e3`, `Hz→e1e2`.
    pub fn maxwell_3d() -> Self {
        let e = |name: &str, blade, sign| PackEntry {
            name: name.into(),
            blade,
            sign,
        };
        Self::new(vec![
            e("d_x", 1, 1.0),
            e("d_y", 2, 1.0),
            e("d_z", 3, 1.0),
            e("h_x", 6, 1.0),
            e("h_y", 5, -1.0),
            e("h_z", 4, 1.0),
        ])
        .expect("static packing")
    }

    pub fn entries(&self) -> &[PackEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mapped_blades(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.blade).collect()
    }

    pub fn blade_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.blade)
    }

    pub fn validate(&self, signature: Signature) -> Result<()> {
        let nb = signature.blade_count();
        match self.entries.iter().find(|e| e.blade >= nb) {
            Some(e) => Err(Error::BladeCount {
                expected: nb,
                got: e.blade + 1,
            }),
            None => Ok(()),
        }
    }
}

/// Places named grids into blade slots. Packing entries without a grid and
/// all unmapped blades stay zero.
pub fn pack(
    fields: &BTreeMap<String, RealGrid>,
    packing: &FieldPacking,
    signature: Signature,
    channels: usize,
    dims: &[usize],
) -> Result<MultivectorField> {
    packing.validate(signature)?;
    let mut out = MultivectorField::zeros(signature, channels, dims)?;
    for (name, grid) in fields {
        let entry = packing
            .entries
            .iter()
            .find(|e| &e.name == name)
            .ok_or_else(|| Error::UnknownField(name.clone()))?;
        if grid.channels != channels || grid.dims != dims {
            return Err(Error::Shape(format!(
                "grid {name} has shape {}x{:?}, expected {channels}x{dims:?}",
                grid.channels, grid.dims
            )));
        }
        let n = out.spatial_len();
        for c in 0..channels {
            let dst = out.plane_mut(entry.blade, c);
            for (d, s) in dst.iter_mut().zip(&grid.data[c * n..(c + 1) * n]) {
                *d = entry.sign * s;
            }
        }
    }
    if let Some(i) = out.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("packed value at flat index {i}")));
    }
    Ok(out)
}

/// Reads every mapped blade back out as a named grid.
pub fn unpack(field: &MultivectorField, packing: &FieldPacking) -> Result<BTreeMap<String, RealGrid>> {
    packing.validate(field.signature())?;
    let n = field.spatial_len();
    let mut out = BTreeMap::new();
    for e in &packing.entries {
        let mut data = Vec::with_capacity(field.channels() * n);
        for c in 0..field.channels() {
            data.extend(field.plane(e.blade, c).iter().map(|v| e.sign * v));
        }
        out.insert(
            e.name.clone(),
            RealGrid {
                channels: field.channels(),
                dims: field.dims().to_vec(),
                data,
            },
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(sig: Signature, c: usize, dims: &[usize]) -> MultivectorField {
        let n = sig.blade_count() * c * dims.iter().product::<usize>();
        MultivectorField::from_data(sig, c, dims, (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn shift_examples() {
        let f = ramp(Signature::CL20, 2, &[4, 3]);
        assert_eq!(f.circular_shift(&[0, 0]).unwrap(), f);
        assert_eq!(f.circular_shift(&[4, -3]).unwrap(), f);
        let g = f.circular_shift(&[1, 0]).unwrap();
        assert_eq!(g.plane(0, 0)[3], f.plane(0, 0)[0]);
        let ab = f.circular_shift(&[1, 2]).unwrap().circular_shift(&[2, 2]).unwrap();
        assert_eq!(ab, f.circular_shift(&[3, 4]).unwrap());
    }

    #[test]
    fn pad_examples() {
        let f = ramp(Signature::CL20, 1, &[3, 2]);
        assert_eq!(f.pad_periodic(&[0, 0]).unwrap(), f);
        let p = f.pad_periodic(&[1, 1]).unwrap();
        assert_eq!(p.dims(), &[5, 4]);
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(p.plane(2, 0)[(i + 1) * 4 + j + 1], f.plane(2, 0)[i * 2 + j]);
            }
        }
        let full = f.pad_periodic(&[3, 0]).unwrap();
        assert_eq!(full.dims(), &[9, 2]);
        assert_eq!(&full.plane(0, 0)[0..6], f.plane(0, 0));
    }

    #[test]
    fn pack_scalar_velocity() {
        let dims = [2, 2];
        let mut m = BTreeMap::new();
        m.insert("scalar".to_string(), RealGrid::new(1, dims.to_vec(), vec![1.0; 4]).unwrap());
        m.insert("velocity_x".to_string(), RealGrid::new(1, dims.to_vec(), vec![2.0; 4]).unwrap());
        m.insert("velocity_y".to_string(), RealGrid::new(1, dims.to_vec(), vec![3.0; 4]).unwrap());
        let f = pack(&m, &FieldPacking::scalar_velocity_2d(), Signature::CL20, 1, &dims).unwrap();
        assert_eq!(f.at(0, 0), vec![1.0, 2.0, 3.0, 0.0]);
        assert_eq!(unpack(&f, &FieldPacking::scalar_velocity_2d()).unwrap(), m);
    }

    #[test]
    fn pack_errors() {
        assert!(matches!(
            FieldPacking::from_pairs(&[("a", 1), ("b", 1)]),
            Err(Error::DuplicateBlade(1))
        ));
        let mut m = BTreeMap::new();
        m.insert("scalar".to_string(), RealGrid::zeros(1, vec![3, 2]));
        let e = pack(&m, &FieldPacking::scalar_velocity_2d(), Signature::CL20, 1, &[2, 2]);
        assert!(matches!(e, Err(Error::Shape(_))));
        let empty = pack(&BTreeMap::new(), &FieldPacking::default(), Signature::CL20, 1, &[2, 2]).unwrap();
        assert!(empty.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn maxwell_bivector_orientation() {
        let p = FieldPacking::maxwell_3d();
        let dims = [1, 1, 1];
        let mut m = BTreeMap::new();
        m.insert("h_y".to_string(), RealGrid::new(1, dims.to_vec(), vec![2.0]).unwrap());
        let f = pack(&m, &p, Signature::CL30, 1, &dims).unwrap();
        // e2·i₃ = −e1e3
        assert_eq!(f.at(0, 0)[5], -2.0);
    }
}
