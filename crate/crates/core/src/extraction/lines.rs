use super::hough::fit_line_weighted;
use super::{LineSegment, P};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MergeParams {
    pub angle_tol_deg: f64,
    /// Perpendicular offset tolerance, pixels.
    pub dist_tol: f64,
    /// Largest end-to-end gap bridged inside a group, pixels.
    pub gap_tol: f64,
}

impl Default for MergeParams {
    fn default() -> Self {
        Self { angle_tol_deg: 3.0, dist_tol: 4.0, gap_tol: 15.0 }
    }
}

/// Undirected angle between two segments, `[0, π/2]`.
pub fn angle_between(a: &LineSegment, b: &LineSegment) -> f64 {
    let (da, db) = (a.direction(), b.direction());
    (da.0 * db.0 + da.1 * db.1).abs().min(1.0).acos()
}

fn similar(a: &LineSegment, b: &LineSegment, p: &MergeParams) -> bool {
    angle_between(a, b) <= p.angle_tol_deg.to_radians()
        && a.distance_to_line(b.midpoint()) <= p.dist_tol
        && b.distance_to_line(a.midpoint()) <= p.dist_tol
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut r = i;
    while parent[r] != r {
        r = parent[r];
    }
    let mut j = i;
    while parent[j] != r {
        let next = parent[j];
        parent[j] = r;
        j = next;
    }
    r
}

/// Support-weighted fit over the endpoints of `segs`, spanning all of them.
fn fuse(segs: &[&LineSegment]) -> LineSegment {
    let anchor = segs.iter().max_by_key(|s| s.support).expect("non-empty group");
    let ref_dir = anchor.direction();
    let mut pts: Vec<(P, f64)> = Vec::new();
    for s in segs {
        let w = s.support.max(1) as f64;
        pts.push((s.p0, w));
        pts.push((s.p1, w));
    }
    let (c, mut d) = fit_line_weighted(&pts);
    if d.0 * ref_dir.0 + d.1 * ref_dir.1 < 0.0 {
        d = (-d.0, -d.1);
    }
    let ts = segs.iter().flat_map(|s| [s.p0, s.p1]).map(|p| (p.0 - c.0) * d.0 + (p.1 - c.1) * d.1);
    let (lo, hi) = ts.fold((f64::INFINITY, f64::NEG_INFINITY), |a, t| (a.0.min(t), a.1.max(t)));
    let mut out = LineSegment::from_endpoints((c.0 + lo * d.0, c.1 + lo * d.1), (c.0 + hi * d.0, c.1 + hi * d.1));
    out.votes = segs.iter().map(|s| s.votes).max().unwrap_or(0);
    out.support = segs.iter().map(|s| s.support).sum();
    out.peak = anchor.peak;
    out.category = anchor.category;
    out
}

/// Groups lines that agree in direction and offset, then replaces every
/// chain whose consecutive gaps are within `gap_tol` by one fitted segment.
pub fn merge_lines(lines: &[LineSegment], params: &MergeParams) -> Vec<LineSegment> {
    let n = lines.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if similar(&lines[i], &lines[j], params) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }

    let mut out = Vec::new();
    for g in groups {
        let anchor = g.iter().copied().max_by_key(|&i| lines[i].support).expect("non-empty");
        let d = lines[anchor].direction();
        let o = lines[anchor].p0;
        let proj = |p: P| (p.0 - o.0) * d.0 + (p.1 - o.1) * d.1;
        let mut spans: Vec<(f64, f64, usize)> = g
            .iter()
            .map(|&i| {
                let (a, b) = (proj(lines[i].p0), proj(lines[i].p1));
                (a.min(b), a.max(b), i)
            })
            .collect();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut chain: Vec<&LineSegment> = vec![&lines[spans[0].2]];
        let mut reach = spans[0].1;
        for &(lo, hi, i) in &spans[1..] {
            if lo - reach <= params.gap_tol {
                chain.push(&lines[i]);
                reach = reach.max(hi);
            } else {
                out.push(fuse(&chain));
                chain = vec![&lines[i]];
                reach = hi;
            }
        }
        out.push(fuse(&chain));
    }
    out.sort_by(|a, b| b.length().total_cmp(&a.length()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(a: P, b: P) -> LineSegment {
        let mut s = LineSegment::from_endpoints(a, b);
        s.support = 10;
        s
    }

    #[test]
    fn touching_collinear_segments_merge() {
        let out = merge_lines(&[seg((0.0, 5.0), (20.0, 5.0)), seg((20.0, 5.0), (50.0, 5.0))], &MergeParams::default());
        assert_eq!(out.len(), 1);
        assert!((out[0].length() - 50.0).abs() < 1e-6);
    }

    #[test]
    fn distant_parallels_stay_apart() {
        let params = MergeParams { dist_tol: 5.0, ..Default::default() };
        let out = merge_lines(&[seg((0.0, 5.0), (50.0, 5.0)), seg((0.0, 55.0), (50.0, 55.0))], &params);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn far_gap_splits_chain() {
        let params = MergeParams { gap_tol: 5.0, ..Default::default() };
        let out = merge_lines(&[seg((0.0, 5.0), (10.0, 5.0)), seg((30.0, 5.0), (50.0, 5.0))], &params);
        assert_eq!(out.len(), 2);
    }
}
