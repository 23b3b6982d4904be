//! Spectral radius tables for the toy model's mean-field recursions.

use particle_em::io::fmt_f64;
use particle_em::oracles::spectral_report;
use std::fmt::Write as _;

pub const HEADER: &str = "d_x,h,rho_g,rho_n,rho_m";

/// `steps` evenly spaced values from `h_min` to `h_max` inclusive. A single
/// step gives `[h_min]`.
pub fn h_grid(h_min: f64, h_max: f64, steps: usize) -> Vec<f64> {
    match steps {
        0 => Vec::new(),
        1 => vec![h_min],
        _ => (0..steps)
            .map(|i| h_min + (h_max - h_min) * i as f64 / (steps - 1) as f64)
            .collect(),
    }
}

pub fn csv(d_x: usize, hs: &[f64]) -> String {
    let mut s = format!("{HEADER}\n");
    for &h in hs {
        let r = spectral_report(d_x, h);
        writeln!(s, "{d_x},{},{},{},{}", fmt_f64(h), fmt_f64(r.rho_g), fmt_f64(r.rho_n), fmt_f64(r.rho_m)).unwrap();
    }
    s
}
