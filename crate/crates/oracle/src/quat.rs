//! Quaternions as plain `[w, x, y, z]` arrays.

/// Hamilton product with `i·j = k`, `j·k = i`, `k·i = j`.
pub fn hamilton(a: [f64; 4], b: [f64; 4]) -> [f64; 4] {
    let [a0, a1, a2, a3] = a;
    let [b0, b1, b2, b3] = b;
    [
        a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
        a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
        a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
        a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
    ]
}

/// Vector part of `q v q⁻¹`.
pub fn rotate_vector(q: [f64; 4], v: [f64; 3]) -> [f64; 3] {
    let n2: f64 = q.iter().map(|c| c * c).sum();
    let inv = [q[0] / n2, -q[1] / n2, -q[2] / n2, -q[3] / n2];
    let r = hamilton(hamilton(q, [0.0, v[0], v[1], v[2]]), inv);
    [r[1], r[2], r[3]]
}
