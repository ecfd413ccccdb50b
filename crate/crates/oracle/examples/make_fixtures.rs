//! Regenerates `fixtures/`: CLF1 inputs with JSON sidecars holding oracle outputs.
//!
//! `cargo run -p clifford-oracle --example make_fixtures`

use std::fs;
use std::path::Path;

use clifford_core::algebra::Signature;
use clifford_core::datagen::{write_clf, Provenance, TrajectorySet};
use clifford_core::fields::FieldPacking;
use clifford_core::layers::Dtype;
use clifford_oracle::{oracle_conv, oracle_dft, oracle_gp, Padding};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

const SEED: u64 = 20240;

fn fill(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// One trajectory of one frame carrying every blade of `f`.
fn field_set(sig: Signature, channels: usize, dims: &[usize], f: Vec<f64>, name: &str) -> TrajectorySet {
    let names: Vec<String> = (0..sig.blade_count()).map(|b| format!("b{b}")).collect();
    let pairs: Vec<(&str, usize)> = names.iter().enumerate().map(|(b, n)| (n.as_str(), b)).collect();
    TrajectorySet {
        signature: sig,
        packing: FieldPacking::from_pairs(&pairs).unwrap(),
        channels,
        dims: dims.to_vec(),
        dx: dims.iter().map(|&d| 1.0 / d as f64).collect(),
        dt: 1.0,
        trajectories: 1,
        steps: 1,
        dtype: Dtype::F64,
        provenance: Provenance { generator: format!("fixture:{name}"), params: json!({}), seed: SEED },
        data: f,
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_fixture(dir: &Path, name: &str, sig: Signature, cin: usize, cout: usize, dims: &[usize], kdims: &[usize], padding: Padding, rng: &mut ChaCha8Rng) {
    let nb = sig.blade_count();
    let npix: usize = dims.iter().product();
    let taps: usize = kdims.iter().product();
    let f = fill(nb * cin * npix, rng);
    let w = fill(nb * cout * cin * taps, rng);
    let y = oracle_conv(sig.p() as usize, sig.q() as usize, &f, cin, dims, &w, cout, kdims, padding);
    write_clf(&dir.join(format!("{name}.clf")), &field_set(sig, cin, dims, f, name)).unwrap();
    let side = json!({
        "signature": [sig.p(), sig.q()],
        "c_in": cin,
        "c_out": cout,
        "kdims": kdims,
        "padding": if padding == Padding::Periodic { "periodic" } else { "zero" },
        "weights": w,
        "expected": y,
    });
    fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(&side).unwrap()).unwrap();
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    let mut gp = serde_json::Map::new();
    for (p, q) in [(2usize, 0usize), (0, 2), (3, 0)] {
        let nb = 1 << (p + q);
        let cases: Vec<_> = (0..16)
            .map(|_| {
                let a = fill(nb, &mut rng);
                let b = fill(nb, &mut rng);
                let ab = oracle_gp(p, q, &a, &b);
                json!({ "a": a, "b": b, "ab": ab })
            })
            .collect();
        gp.insert(format!("cl{p}{q}"), json!(cases));
    }
    fs::write(dir.join("gp.json"), serde_json::to_string_pretty(&gp).unwrap()).unwrap();

    let mut dft = Vec::new();
    for dims in [vec![6usize, 8], vec![4, 4, 4]] {
        let n: usize = dims.iter().product();
        let (re, im) = (fill(n, &mut rng), fill(n, &mut rng));
        let (fre, fim) = oracle_dft(&re, &im, &dims, false);
        dft.push(json!({ "dims": dims, "re": re, "im": im, "expected_re": fre, "expected_im": fim }));
    }
    fs::write(dir.join("dft.json"), serde_json::to_string_pretty(&dft).unwrap()).unwrap();

    conv_fixture(&dir, "conv2d_cl20", Signature::CL20, 2, 3, &[8, 8], &[3, 3], Padding::Periodic, &mut rng);
    conv_fixture(&dir, "conv2d_cl02", Signature::new(0, 2).unwrap(), 1, 2, &[6, 5], &[3, 5], Padding::Zero, &mut rng);
    conv_fixture(&dir, "conv3d_cl30", Signature::CL30, 2, 2, &[4, 4, 4], &[3, 3, 3], Padding::Periodic, &mut rng);
    println!("fixtures written to {}", dir.display());
}
