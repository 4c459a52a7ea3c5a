//! Complex polynomials in descending-power form: `coeffs[0]·x^m + … + coeffs[m]`.

use crate::linalg::{CMatrix, C64};

/// Characteristic polynomial `det(λI − A)` together with the adjugate
/// expansion `adj(λI − A) = Σₖ Bₖ λ^{n−1−k}` (Faddeev–LeVerrier).
pub struct CharPoly {
    /// Monic, degree n.
    pub coeffs: Vec<C64>,
    /// `B₀ = I, …, B_{n−1}`.
    pub adjugate: Vec<CMatrix>,
}

pub fn faddeev_leverrier(a: &CMatrix) -> CharPoly {
    let n = a.nrows();
    let ident = CMatrix::identity(n, n);
    let mut coeffs = vec![C64::new(1.0, 0.0)];
    let mut adjugate = Vec::with_capacity(n);
    let mut b = ident.clone();
    for k in 1..=n {
        let ab = a * &b;
        let ck = -ab.trace() / k as f64;
        coeffs.push(ck);
        adjugate.push(b);
        b = ab + &ident * ck;
    }
    CharPoly { coeffs, adjugate }
}

pub fn eval(coeffs: &[C64], x: C64) -> C64 {
    coeffs.iter().fold(C64::new(0.0, 0.0), |acc, &c| acc * x + c)
}

fn derivative(coeffs: &[C64]) -> Vec<C64> {
    let m = coeffs.len().saturating_sub(1);
    coeffs[..m]
        .iter()
        .enumerate()
        .map(|(k, &c)| c * (m - k) as f64)
        .collect()
}

pub fn mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = vec![C64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// `a − b`, right-aligned on the constant term.
pub fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    let len = a.len().max(b.len());
    let mut out = vec![C64::new(0.0, 0.0); len];
    for (k, &x) in a.iter().rev().enumerate() {
        out[len - 1 - k] += x;
    }
    for (k, &y) in b.iter().rev().enumerate() {
        out[len - 1 - k] -= y;
    }
    out
}

/// All roots via Aberth–Ehrlich iteration, Newton polishing, and averaging
/// of tight clusters (the cluster mean of a multiple root is accurate to
/// working precision even when the individual members are not).
pub fn roots(coeffs: &[C64]) -> Vec<C64> {
    let mut start = 0;
    while start < coeffs.len() && coeffs[start] == C64::new(0.0, 0.0) {
        start += 1;
    }
    let lead = match coeffs.get(start) {
        Some(&l) => l,
        None => return Vec::new(),
    };
    let p: Vec<C64> = coeffs[start..].iter().map(|&c| c / lead).collect();
    let m = p.len() - 1;
    match m {
        0 => return Vec::new(),
        1 => return vec![-p[1]],
        _ => {}
    }
    let dp = derivative(&p);

    // Cauchy bound for the initial circle.
    let radius = 1.0 + p[1..].iter().map(|c| c.norm()).fold(0.0, f64::max);
    let scale = radius.min(
        p[1..]
            .iter()
            .enumerate()
            .map(|(k, c)| c.norm().powf(1.0 / (k + 1) as f64))
            .fold(0.0, f64::max)
            .max(1e-3),
    );
    let mut z: Vec<C64> = (0..m)
        .map(|k| C64::from_polar(scale, 2.0 * std::f64::consts::PI * k as f64 / m as f64 + 0.4))
        .collect();

    for _ in 0..500 {
        let mut biggest = 0.0f64;
        for i in 0..m {
            let pv = eval(&p, z[i]);
            if pv == C64::new(0.0, 0.0) {
                continue;
            }
            let ratio = pv / eval(&dp, z[i]);
            let repulse: C64 = (0..m)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d == C64::new(0.0, 0.0) {
                        C64::new(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let w = ratio / (C64::new(1.0, 0.0) - ratio * repulse);
            if w.is_finite() {
                z[i] -= w;
                biggest = biggest.max(w.norm() / (1.0 + z[i].norm()));
            }
        }
        if biggest < 1e-15 {
            break;
        }
    }

    for zi in z.iter_mut() {
        for _ in 0..3 {
            let d = eval(&dp, *zi);
            if d.norm() < 1e-300 {
                break;
            }
            let step = eval(&p, *zi) / d;
            if !step.is_finite() {
                break;
            }
            let cand = *zi - step;
            if eval(&p, cand).norm() <= eval(&p, *zi).norm() {
                *zi = cand;
            } else {
                break;
            }
        }
    }

    average_clusters(&mut z, &p);
    z
}

/// Perturbation of a k-fold root under rounding scales like ε^{1/k}.
fn cluster_tol(k: usize, scale: f64) -> f64 {
    2.0 * 1e-15f64.powf(1.0 / k as f64) * (1.0 + scale)
}

fn diameter(z: &[C64], members: &[usize]) -> f64 {
    let mut d = 0.0f64;
    for &a in members {
        for &b in members {
            d = d.max((z[a] - z[b]).norm());
        }
    }
    d
}

fn single_linkage(z: &[C64], members: &[usize], tol: f64) -> Vec<Vec<usize>> {
    let mut assigned = vec![false; members.len()];
    let mut groups = Vec::new();
    for s in 0..members.len() {
        if assigned[s] {
            continue;
        }
        assigned[s] = true;
        let mut group = vec![members[s]];
        let mut k = 0;
        while k < group.len() {
            let a = z[group[k]];
            for (t, &m) in members.iter().enumerate() {
                if !assigned[t] && (z[m] - a).norm() <= tol {
                    assigned[t] = true;
                    group.push(m);
                }
            }
            k += 1;
        }
        groups.push(group);
    }
    groups
}

fn split_clusters(z: &[C64], members: Vec<usize>, level: usize, out: &mut Vec<Vec<usize>>) {
    if members.len() == 1 || level < 2 {
        out.extend(members.into_iter().map(|m| vec![m]));
        return;
    }
    let scale = members.iter().map(|&m| z[m].norm()).fold(0.0, f64::max);
    for group in single_linkage(z, &members, cluster_tol(level, scale)) {
        let k = group.len();
        if k == 1 || (k <= level && diameter(z, &group) <= cluster_tol(k, scale)) {
            out.push(group);
        } else {
            split_clusters(z, group, (level - 1).min(k - 1).max(1), out);
        }
    }
}

/// Replaces each tight cluster of k roots by its mean, then polishes the
/// mean with Newton on the (k−1)-th derivative, where a k-fold root is simple.
fn average_clusters(z: &mut [C64], p: &[C64]) {
    let n = z.len();
    let mut clusters = Vec::new();
    split_clusters(z, (0..n).collect(), n, &mut clusters);
    for members in clusters.into_iter().filter(|m| m.len() > 1) {
        let k = members.len();
        let mut mean = members.iter().map(|&j| z[j]).sum::<C64>() / k as f64;
        let mut dk = p.to_vec();
        for _ in 1..k {
            dk = derivative(&dk);
        }
        let ddk = derivative(&dk);
        let limit = cluster_tol(k, mean.norm());
        for _ in 0..3 {
            let step = eval(&dk, mean) / eval(&ddk, mean);
            if !step.is_finite() || step.norm() > limit {
                break;
            }
            mean -= step;
        }
        for &j in &members {
            z[j] = mean;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, from_real_rows, spectrum_distance};

    fn from_roots(r: &[C64]) -> Vec<C64> {
        r.iter()
            .fold(vec![c(1.0, 0.0)], |acc, &x| mul(&acc, &[c(1.0, 0.0), -x]))
    }

    #[test]
    fn recovers_distinct_complex_roots() {
        let r = [c(1.0, 2.0), c(-0.5, 0.1), c(3.0, -1.0), c(0.0, 0.7), c(-2.0, -2.0)];
        let found = roots(&from_roots(&r));
        assert!(spectrum_distance(&r, &found) < 1e-12);
    }

    #[test]
    fn double_root_is_accurate_after_cluster_averaging() {
        let r = [c(1.0, 0.0), c(1.0, 0.0), c(-2.0, 0.5)];
        let found = roots(&from_roots(&r));
        assert!(spectrum_distance(&r, &found) < 1e-12, "{found:?}");
    }

    #[test]
    fn leverrier_matches_trace_and_determinant() {
        let a = from_real_rows(&[&[2.0, 1.0, 0.0], &[0.0, 3.0, 1.0], &[1.0, 0.0, 4.0]]);
        let cp = faddeev_leverrier(&a);
        assert!((cp.coeffs[1] + a.trace()).norm() < 1e-12);
        // (-1)^n det(A) for n = 3
        assert!((cp.coeffs[3] + a.determinant()).norm() < 1e-12);
    }

    #[test]
    fn adjugate_expansion_at_a_point() {
        let a = from_real_rows(&[&[2.0, 1.0], &[-1.0, 3.0]]);
        let cp = faddeev_leverrier(&a);
        let lam = c(0.3, 0.2);
        let shifted = CMatrix::identity(2, 2) * lam - &a;
        let adj = &cp.adjugate[0] * lam + &cp.adjugate[1];
        let expect = shifted.clone().try_inverse().unwrap() * shifted.determinant();
        assert!(crate::linalg::max_abs(&(adj - expect)) < 1e-12);
    }

    #[test]
    fn linear_and_constant_cases() {
        assert_eq!(roots(&[c(2.0, 0.0), c(-4.0, 0.0)]), vec![c(2.0, 0.0)]);
        assert!(roots(&[c(5.0, 0.0)]).is_empty());
        assert_eq!(roots(&[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]), vec![c(-1.0, 0.0)]);
    }
}
