//! Symbolic blade products by index-list sorting.

/// Basis blades of an `n`-dimensional algebra as ascending index lists
/// (1-based), ordered by grade and then lexicographically.
pub fn canonical_blades(n: usize) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = Vec::new();
    for grade in 0..=n {
        let mut combo: Vec<u8> = (1..=grade as u8).collect();
        loop {
            out.push(combo.clone());
            // advance to the next combination in lexicographic order
            let mut i = grade;
            let mut advanced = false;
            while i > 0 {
                i -= 1;
                if (combo[i] as usize) < n - (grade - 1 - i) {
                    combo[i] += 1;
                    for k in i + 1..grade {
                        combo[k] = combo[k - 1] + 1;
                    }
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
    }
    out
}

/// Multiplies two basis blades given as index lists.
///
/// The concatenated list is bubble-sorted, each adjacent swap contributing a
/// factor −1, then adjacent equal indices are contracted with `e_k² = +1` for
/// `k ≤ p` and `−1` otherwise.
pub fn symbolic_product(p: usize, lhs: &[u8], rhs: &[u8]) -> (Vec<u8>, i8) {
    let mut word: Vec<u8> = lhs.iter().chain(rhs.iter()).copied().collect();
    let mut sign: i8 = 1;
    let len = word.len();
    for pass in 0..len {
        for i in 0..len.saturating_sub(1 + pass) {
            if word[i] > word[i + 1] {
                word.swap(i, i + 1);
                sign = -sign;
            }
        }
    }
    let mut reduced: Vec<u8> = Vec::with_capacity(len);
    let mut i = 0;
    while i < word.len() {
        if i + 1 < word.len() && word[i] == word[i + 1] {
            if word[i] as usize > p {
                sign = -sign;
            }
            i += 2;
        } else {
            reduced.push(word[i]);
            i += 1;
        }
    }
    (reduced, sign)
}

/// Full multiplication table of an algebra, computed symbolically.
#[derive(Debug, Clone)]
pub struct SymbolicBladeProduct {
    pub p: usize,
    pub q: usize,
    pub blades: Vec<Vec<u8>>,
    /// `(i, j, result index, sign)` for every ordered blade pair.
    pub entries: Vec<(usize, usize, usize, i8)>,
}

impl SymbolicBladeProduct {
    pub fn new(p: usize, q: usize) -> Self {
        let n = p + q;
        let blades = canonical_blades(n);
        let mut entries = Vec::with_capacity(blades.len() * blades.len());
        for (i, a) in blades.iter().enumerate() {
            for (j, b) in blades.iter().enumerate() {
                let (word, sign) = symbolic_product(p, a, b);
                let k = blades
                    .iter()
                    .position(|c| *c == word)
                    .expect("product of basis blades is a basis blade");
                entries.push((i, j, k, sign));
            }
        }
        Self { p, q, blades, entries }
    }

    pub fn entry(&self, i: usize, j: usize) -> (usize, i8) {
        let (_, _, k, s) = self.entries[i * self.blades.len() + j];
        (k, s)
    }

    /// Human-readable blade name, e.g. `"e13"`, `"1"`.
    pub fn name(&self, i: usize) -> String {
        let b = &self.blades[i];
        if b.is_empty() {
            "1".to_string()
        } else {
            let digits: String = b.iter().map(|d| d.to_string()).collect();
            format!("e{digits}")
        }
    }
}

/// Geometric product by summing over every blade pair.
pub fn oracle_gp(p: usize, q: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
    let table = SymbolicBladeProduct::new(p, q);
    oracle_gp_with(&table, a, b)
}

/// Same as [`oracle_gp`] with a prebuilt table.
pub fn oracle_gp_with(table: &SymbolicBladeProduct, a: &[f64], b: &[f64]) -> Vec<f64> {
    let nb = table.blades.len();
    assert_eq!(a.len(), nb);
    assert_eq!(b.len(), nb);
    let mut out = vec![0.0; nb];
    for &(i, j, k, s) in &table.entries {
        out[k] += f64::from(s) * a[i] * b[j];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_3d() {
        let b = canonical_blades(3);
        let names: Vec<Vec<u8>> = vec![
            vec![],
            vec![1],
            vec![2],
            vec![3],
            vec![1, 2],
            vec![1, 3],
            vec![2, 3],
            vec![1, 2, 3],
        ];
        assert_eq!(b, names);
    }

    #[test]
    fn anticommuting_vectors() {
        assert_eq!(symbolic_product(2, &[2], &[1]), (vec![1, 2], -1));
        assert_eq!(symbolic_product(2, &[1, 2], &[1, 2]), (vec![], -1));
        assert_eq!(symbolic_product(0, &[1], &[1]), (vec![], -1));
        assert_eq!(symbolic_product(3, &[1], &[2, 3]), (vec![1, 2, 3], 1));
    }
}
