use super::skeleton::BinaryImage;
use super::{LineSegment, P};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HoughParams {
    pub rho_res: f64,
    pub theta_res_deg: f64,
    pub vote_threshold: u32,
    /// Largest gap along a line before a segment is split, pixels.
    pub max_gap: f64,
    /// Distance from a peak line within which pixels support it, pixels.
    pub support_tol: f64,
    pub min_length: f64,
}

impl Default for HoughParams {
    fn default() -> Self {
        Self { rho_res: 1.0, theta_res_deg: 1.0, vote_threshold: 20, max_gap: 8.0, support_tol: 1.5, min_length: 10.0 }
    }
}

/// `(ρ, θ)` vote counts over `θ ∈ [0, π)`. Pixel `(x, y)` sits at
/// `(x + 0.5, y + 0.5)` and votes for `ρ = x cos θ + y sin θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulator {
    pub rho_res: f64,
    pub theta_res: f64,
    pub rho_max: f64,
    pub n_rho: usize,
    pub n_theta: usize,
    pub votes: Vec<u32>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize, rho_res: f64, theta_res_deg: f64) -> Self {
        let half = ((width as f64).hypot(height as f64) / rho_res).ceil();
        let rho_max = half * rho_res;
        let n_rho = 2 * half as usize + 1;
        let n_theta = (180.0 / theta_res_deg).round() as usize;
        Self { rho_res, theta_res: theta_res_deg.to_radians(), rho_max, n_rho, n_theta, votes: vec![0; n_rho * n_theta] }
    }

    pub fn theta(&self, t: usize) -> f64 {
        t as f64 * self.theta_res
    }

    pub fn rho(&self, r: usize) -> f64 {
        r as f64 * self.rho_res - self.rho_max
    }

    pub fn rho_bin(&self, rho: f64) -> usize {
        ((rho + self.rho_max) / self.rho_res).round() as usize
    }

    pub fn theta_bin(&self, theta: f64) -> usize {
        ((theta / self.theta_res).round() as usize) % self.n_theta
    }

    pub fn at(&self, r: usize, t: usize) -> u32 {
        self.votes[t * self.n_rho + r]
    }

    pub fn vote(&mut self, p: P) {
        for t in 0..self.n_theta {
            let th = self.theta(t);
            let r = self.rho_bin(p.0 * th.cos() + p.1 * th.sin());
            self.votes[t * self.n_rho + r] += 1;
        }
    }

    pub fn from_image(img: &BinaryImage, rho_res: f64, theta_res_deg: f64) -> Self {
        let mut acc = Self::new(img.width(), img.height(), rho_res, theta_res_deg);
        for (x, y) in img.points() {
            acc.vote((x as f64 + 0.5, y as f64 + 0.5));
        }
        acc
    }

    /// Neighbour across `θ = 0 ≡ π` flips the sign of `ρ`.
    fn neighbour(&self, r: usize, t: usize, dr: isize, dt: isize) -> Option<(usize, usize)> {
        let mut t2 = t as isize + dt;
        let mut r2 = r as isize + dr;
        if t2 < 0 || t2 >= self.n_theta as isize {
            t2 = t2.rem_euclid(self.n_theta as isize);
            r2 = (self.n_rho as isize - 1) - r2;
        }
        (r2 >= 0 && r2 < self.n_rho as isize).then_some((r2 as usize, t2 as usize))
    }

    /// Cells at or above `threshold` that dominate their 3×3 neighbourhood.
    /// Plateaus keep their first cell in scan order.
    pub fn peaks(&self, threshold: u32) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let key = |r: usize, t: usize| t * self.n_rho + r;
        for t in 0..self.n_theta {
            for r in 0..self.n_rho {
                let v = self.at(r, t);
                if v < threshold.max(1) {
                    continue;
                }
                let mut is_peak = true;
                'nb: for dt in -1..=1 {
                    for dr in -1..=1 {
                        if dt == 0 && dr == 0 {
                            continue;
                        }
                        if let Some((r2, t2)) = self.neighbour(r, t, dr, dt) {
                            let w = self.at(r2, t2);
                            if w > v || (w == v && key(r2, t2) < key(r, t)) {
                                is_peak = false;
                                break 'nb;
                            }
                        }
                    }
                }
                if is_peak {
                    out.push((r, t));
                }
            }
        }
        out.sort_by_key(|&(r, t)| std::cmp::Reverse(self.at(r, t)));
        out
    }
}

/// Total-least-squares line through `pts`: `(centroid, unit direction)`.
pub(crate) fn fit_line(pts: &[P]) -> (P, P) {
    let weighted: Vec<(P, f64)> = pts.iter().map(|&p| (p, 1.0)).collect();
    fit_line_weighted(&weighted)
}

pub(crate) fn fit_line_weighted(pts: &[(P, f64)]) -> (P, P) {
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let cx = pts.iter().map(|(p, w)| w * p.0).sum::<f64>() / total;
    let cy = pts.iter().map(|(p, w)| w * p.1).sum::<f64>() / total;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (p, w) in pts {
        let (dx, dy) = (p.0 - cx, p.1 - cy);
        sxx += w * dx * dx;
        sxy += w * dx * dy;
        syy += w * dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    ((cx, cy), (angle.cos(), angle.sin()))
}

/// Standard Hough transform with 3×3 peak suppression. Each peak's
/// supporting pixels are split into runs at gaps above `max_gap`; every
/// run is refit by least squares. Votes are the peak cell's count.
pub fn hough_lines(skel: &BinaryImage, params: &HoughParams) -> Vec<LineSegment> {
    let acc = Accumulator::from_image(skel, params.rho_res, params.theta_res_deg);
    let pts: Vec<P> = skel.points().map(|(x, y)| (x as f64 + 0.5, y as f64 + 0.5)).collect();
    let mut out = Vec::new();
    for (r, t) in acc.peaks(params.vote_threshold) {
        let (rho, theta) = (acc.rho(r), acc.theta(t));
        let (c, s) = (theta.cos(), theta.sin());
        let mut support: Vec<(f64, P)> = pts
            .iter()
            .filter(|p| (p.0 * c + p.1 * s - rho).abs() <= params.support_tol)
            .map(|&p| (-p.0 * s + p.1 * c, p))
            .collect();
        support.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut start = 0;
        for i in 1..=support.len() {
            if i < support.len() && support[i].0 - support[i - 1].0 <= params.max_gap {
                continue;
            }
            let run: Vec<P> = support[start..i].iter().map(|s| s.1).collect();
            start = i;
            if run.len() < 2 {
                continue;
            }
            let seg = LineSegment::fit(&run, acc.at(r, t), (rho, theta));
            if seg.length() >= params.min_length {
                out.push(seg);
            }
        }
    }
    out
}
