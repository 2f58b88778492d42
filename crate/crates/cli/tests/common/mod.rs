//! Helpers shared by the CLI integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use std::process::Command;

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

/// Runs the binary; returns (exit code, stdout, stderr).
pub fn ipcc(args: &[&str], cwd: &Path) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ipcc")).args(args).current_dir(cwd).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

/// A population draw: two genotype indicators, a 0–4 age-category trend and smoking.
fn draw_x(rng: &mut ChaCha8Rng) -> [f64; 4] {
    [
        (rng.gen::<f64>() < 0.55) as u8 as f64,
        (rng.gen::<f64>() < 0.45) as u8 as f64,
        rng.gen_range(0..5) as f64,
        (rng.gen::<f64>() < 0.4) as u8 as f64,
    ]
}

/// Seeded case-control sample with incident and prevalent cases. Cases are
/// drawn by rejection from the population with weight exp(xβ) (times the
/// mean backward time μ(x) for prevalent cases); backward times follow an
/// exponential hazard truncated at ξ = 30.
pub fn usrts_like_csv(seed: u64, n0: usize, n1: usize, n2: usize) -> String {
    let beta = [0.3, 0.2, 0.25, 0.15];
    let (rate, zeta, xi) = (0.08, [0.2, -0.4], 30.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lin = |x: &[f64; 4]| beta.iter().zip(x).map(|(b, v)| b * v).sum::<f64>();
    let psi = |x: &[f64; 4]| rate * (zeta[0] * x[2] + zeta[1] * x[3]).exp();
    let mu = |x: &[f64; 4]| -(-psi(x) * xi).exp_m1() / psi(x);
    let max_w1 = beta.iter().map(|b| b.max(0.0) * 4.0).sum::<f64>().exp();
    let max_w2 = max_w1 * xi;
    let mut s = String::from("group,backward_time,rs2981582,rs889312,age_trend,smoker\n");
    let row = |s: &mut String, g: u8, a: Option<f64>, x: &[f64; 4]| {
        let a = a.map(|v| format!("{v:.6}")).unwrap_or_default();
        s.push_str(&format!("{g},{a},{},{},{},{}\n", x[0], x[1], x[2], x[3]));
    };
    for _ in 0..n0 {
        let x = draw_x(&mut rng);
        row(&mut s, 0, None, &x);
    }
    let mut k = 0;
    while k < n1 {
        let x = draw_x(&mut rng);
        if rng.gen::<f64>() < lin(&x).exp() / max_w1 {
            row(&mut s, 1, None, &x);
            k += 1;
        }
    }
    k = 0;
    while k < n2 {
        let x = draw_x(&mut rng);
        if rng.gen::<f64>() < lin(&x).exp() * mu(&x) / max_w2 {
            // Inverse CDF of the exponential truncated at ξ.
            let u: f64 = rng.gen();
            let a = -(1.0 - u * (1.0 - (-psi(&x) * xi).exp())).ln() / psi(&x);
            row(&mut s, 2, Some(a), &x);
            k += 1;
        }
    }
    s
}
