//! Straight-line metric references, written independently of the library.
#![allow(dead_code)]

use runoff::tensor::RngStream;

pub fn pair(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = RngStream::new(seed);
    let obs: Vec<f64> = (0..n).map(|_| rng.exponential(3.0) + rng.uniform(0.0, 0.2)).collect();
    let sim = obs.iter().map(|o| (o * rng.uniform(0.6, 1.4) + rng.gaussian(0.0, 0.3)).max(0.0)).collect();
    (obs, sim)
}

pub fn ref_nse(o: &[f64], s: &[f64]) -> f64 {
    let n = o.len() as f64;
    let mut mean = 0.0;
    for v in o {
        mean += v / n;
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..o.len() {
        num += (o[i] - s[i]).powi(2);
        den += (o[i] - mean).powi(2);
    }
    1.0 - num / den
}

pub fn ref_kge(o: &[f64], s: &[f64]) -> (f64, f64, f64, f64) {
    let n = o.len() as f64;
    let mo = o.iter().sum::<f64>() / n;
    let ms = s.iter().sum::<f64>() / n;
    let so = (o.iter().map(|v| (v - mo).powi(2)).sum::<f64>() / n).sqrt();
    let ss = (s.iter().map(|v| (v - ms).powi(2)).sum::<f64>() / n).sqrt();
    let cov = o.iter().zip(s).map(|(a, b)| (a - mo) * (b - ms)).sum::<f64>() / n;
    let r = cov / (so * ss);
    let (alpha, beta) = (ss / so, ms / mo);
    (1.0 - ((r - 1.0).powi(2) + (alpha - 1.0).powi(2) + (beta - 1.0).powi(2)).sqrt(), r, alpha, beta)
}

pub fn ascending(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

pub fn ref_fhv(o: &[f64], s: &[f64], h: f64) -> f64 {
    let k = ((h * o.len() as f64) as usize).max(1);
    let (o, s) = (ascending(o), ascending(s));
    let top_o: f64 = o.iter().rev().take(k).sum();
    let top_s: f64 = s.iter().rev().take(k).sum();
    (top_s - top_o) / top_o * 100.0
}

pub fn ref_flv(o: &[f64], s: &[f64], l: f64, floor: f64) -> f64 {
    let k = ((l * o.len() as f64) as usize).max(1);
    let low = |x: &[f64]| -> Vec<f64> {
        let v: Vec<f64> = x.iter().map(|v| if *v < floor { floor } else { *v }).collect();
        ascending(&v).into_iter().take(k).map(f64::ln).collect()
    };
    let (lo, ls) = (low(o), low(s));
    let qo: f64 = lo.iter().map(|v| v - lo[0]).sum();
    let qs: f64 = ls.iter().map(|v| v - ls[0]).sum();
    (qo - qs) / qo * 100.0
}
