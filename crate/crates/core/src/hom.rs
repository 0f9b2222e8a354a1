//! Two-photon interference at a balanced coupler.
//!
//! Partial distinguishability uses a binary decomposition: each photon
//! entering port 2 is "matched" (same mode as port 1, interferes) with
//! probability M, otherwise orthogonal. Matched photons go through an
//! exact two-port Fock calculation; orthogonal ones split independently.
//! This is exact for single cross-pairs, which dominate the dip, and the
//! coincidence probability is linear in M by construction.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Fock truncation: tail probability beyond 3 photons per port is below
/// mu^4 at the operating points.
pub const MAX_PHOTONS_PER_PORT: u32 = 3;

/// Gaussian mode overlap M(dt) = intrinsic * exp(-dt^2 / (2 sigma^2)).
pub fn overlap(delta_t_ps: f64, sigma_ps: f64, intrinsic_max: f64) -> f64 {
    debug_assert!(sigma_ps > 0.0 && (0.0..=1.0).contains(&intrinsic_max));
    intrinsic_max * (-delta_t_ps * delta_t_ps / (2.0 * sigma_ps * sigma_ps)).exp()
}

fn binom(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// Joint output distribution of a two-port Fock state (m, n) on a 50:50
/// coupler: P(p, m+n-p) for p = 0..m+n.
fn two_port_output(m: u32, n: u32) -> Vec<f64> {
    let total = m + n;
    let mut probs = vec![0.0; total as usize + 1];
    for p in 0..=total {
        // c_p = sum_{i+l=p} C(m,i) C(n,l) (-1)^(n-l)
        let mut c = 0.0;
        for i in 0..=m.min(p) {
            let l = p - i;
            if l > n {
                continue;
            }
            let sign = if (n - l) % 2 == 0 { 1.0 } else { -1.0 };
            c += binom(m, i) * binom(n, l) * sign;
        }
        let q = total - p;
        probs[p as usize] =
            c * c * factorial(p) * factorial(q) / (factorial(m) * factorial(n) * 2f64.powi(total as i32));
    }
    probs
}

/// Detector response for each coupler output: threshold click with
/// efficiency `eta` and dark probability `dark`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OutputDetector {
    pub eta: f64,
    pub dark: f64,
}

impl OutputDetector {
    pub const IDEAL: OutputDetector = OutputDetector { eta: 1.0, dark: 0.0 };

    fn click_prob(&self, photons: u32) -> f64 {
        1.0 - (1.0 - self.dark) * (1.0 - self.eta).powi(photons as i32)
    }
}

/// Probability that both output detectors click, for `n1` photons in port
/// 1 and `n2` in port 2 with mode overlap `m`. Accepts vacuum (returns
/// the dark-coincidence probability), so the simulator can use it for the
/// blocked-source acquisitions.
pub fn coincidence_click_prob(
    n1: u32,
    n2: u32,
    m: f64,
    d1: OutputDetector,
    d2: OutputDetector,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&m) {
        return Err(Error::domain(format!("overlap must be in [0,1], got {m}")));
    }
    if n1 > MAX_PHOTONS_PER_PORT || n2 > MAX_PHOTONS_PER_PORT {
        return Err(Error::domain(format!(
            "photon numbers beyond truncation {MAX_PHOTONS_PER_PORT}: ({n1}, {n2})"
        )));
    }
    let mut total = 0.0;
    // k matched photons from port 2 interfere with all of port 1.
    for k in 0..=n2 {
        let w = binom(n2, k) * m.powi(k as i32) * (1.0 - m).powi((n2 - k) as i32);
        if w == 0.0 {
            continue;
        }
        let interfering = two_port_output(n1, k);
        let j = n2 - k; // orthogonal photons, each splitting 50:50
        let mut p_both = 0.0;
        for (p, &wp) in interfering.iter().enumerate() {
            if wp == 0.0 {
                continue;
            }
            let q = (n1 + k) as usize - p;
            for r in 0..=j {
                let wr = binom(j, r) / 2f64.powi(j as i32);
                let x1 = p as u32 + r;
                let x2 = q as u32 + (j - r);
                p_both += wp * wr * d1.click_prob(x1) * d2.click_prob(x2);
            }
        }
        total += w * p_both;
    }
    Ok(total)
}

/// Coincidence probability with ideal threshold detectors on both
/// outputs. Requires at least one input photon.
pub fn bs_coincidence_prob(n1: u32, n2: u32, m: f64) -> Result<f64> {
    if n1 + n2 == 0 {
        return Err(Error::domain("bs_coincidence_prob requires n1 + n2 >= 1"));
    }
    coincidence_click_prob(n1, n2, m, OutputDetector::IDEAL, OutputDetector::IDEAL)
}

/// Counts from one delay point of a four-fold interference scan: raw,
/// source-1-blocked, source-2-blocked and both-blocked acquisitions of
/// equal duration. Values are expected counts from the conditional
/// estimator, so they are real-valued.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FoldCounts {
    pub delta_t_ps: f64,
    pub c_raw: f64,
    pub c_n1: f64,
    pub c_n2: f64,
    pub c_d: f64,
}

/// Net four-fold coincidence: raw minus the two single-source noise
/// acquisitions, plus the dark acquisition (subtracted twice otherwise).
/// Statistical fluctuations can make this negative; it is not clamped.
pub fn noise_correct(fc: &FoldCounts) -> f64 {
    fc.c_raw - fc.c_n1 - fc.c_n2 + fc.c_d
}

/// Gaussian-dip fit result.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VisibilityFit {
    /// V = 1 - C_min / C_baseline.
    pub visibility: f64,
    pub baseline: f64,
    pub dip_min: f64,
    pub sigma_ps: f64,
}

/// Fits counts(dt) = B - A exp(-dt^2/(2 sigma^2)) by least squares
/// (linear in B, A for fixed sigma; golden-section over sigma) and
/// returns V = A/B. Fails when the fitted baseline is not positive.
pub fn visibility(points: &[(f64, f64)]) -> Result<VisibilityFit> {
    if points.len() < 3 {
        return Err(Error::domain("visibility fit needs at least 3 delay points"));
    }
    let span = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);

    let solve = |sigma: f64| -> (f64, f64, f64) {
        // Least squares for counts = B - A g, g = exp(-dt^2/(2 sigma^2)).
        let n = points.len() as f64;
        let (mut sg, mut sgg, mut sc, mut scg) = (0.0, 0.0, 0.0, 0.0);
        for &(dt, c) in points {
            let g = (-dt * dt / (2.0 * sigma * sigma)).exp();
            sg += g;
            sgg += g * g;
            sc += c;
            scg += c * g;
        }
        // Normal equations of c = B - A g:
        //   n B  - sg A  = sc
        //   sg B - sgg A = scg
        let det = n * sgg - sg * sg;
        if det.abs() < 1e-12 {
            return (sc / n, 0.0, f64::INFINITY);
        }
        let bb = (sc * sgg - sg * scg) / det;
        let aa = (sc * sg - n * scg) / det;
        let mut sse = 0.0;
        for &(dt, c) in points {
            let g = (-dt * dt / (2.0 * sigma * sigma)).exp();
            let r = c - (bb - aa * g);
            sse += r * r;
        }
        (bb, aa, sse)
    };

    // Coarse log-scan then golden-section refinement over sigma.
    let mut best = (span / 4.0, f64::INFINITY);
    let mut s = span / 50.0;
    while s <= span * 2.0 {
        let (_, _, sse) = solve(s);
        if sse < best.1 {
            best = (s, sse);
        }
        s *= 1.3;
    }
    let phi = 0.618_033_988_749_894_8;
    let (mut lo, mut hi) = (best.0 / 1.3, best.0 * 1.3);
    for _ in 0..60 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if solve(m1).2 < solve(m2).2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let sigma = 0.5 * (lo + hi);
    let (b, a, _) = solve(sigma);
    if !(b > 0.0) {
        return Err(Error::domain(format!("visibility undefined: fitted baseline {b} <= 0")));
    }
    let a = a.max(0.0);
    Ok(VisibilityFit { visibility: a / b, baseline: b, dip_min: b - a, sigma_ps: sigma })
}
