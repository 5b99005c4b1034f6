#![allow(dead_code)]

/// Best objective over every vertex of the transportation polytope with row
/// sums `a`, column sums `b` and weights `w` (row-major). Vertices are the
/// spanning trees of the complete bipartite graph whose forced cell values
/// are non-negative.
pub fn vertex_optimum(a: &[f64], b: &[f64], w: &[f64]) -> f64 {
    let (m, n) = (a.len(), b.len());
    let cells = m * n;
    let k = m + n - 1;
    let tol = 1e-9 * a.iter().sum::<f64>().max(1.0);
    let mut best = f64::NEG_INFINITY;
    let mut chosen = Vec::with_capacity(k);
    subsets(cells, k, 0, &mut chosen, &mut |set| {
        if let Some(x) = tree_values(set, a, b, n) {
            if x.iter().all(|&(_, v)| v >= -tol) {
                let obj: f64 = x.iter().map(|&(c, v)| v * w[c]).sum();
                best = best.max(obj);
            }
        }
    });
    best
}

fn subsets(total: usize, k: usize, start: usize, chosen: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if chosen.len() == k {
        f(chosen);
        return;
    }
    for c in start..total {
        if total - c < k - chosen.len() {
            break;
        }
        chosen.push(c);
        subsets(total, k, c + 1, chosen, f);
        chosen.pop();
    }
}

/// Cell values forced by a spanning tree, or `None` when the cells contain a
/// cycle. Leaves are peeled one at a time.
fn tree_values(set: &[usize], a: &[f64], b: &[f64], n: usize) -> Option<Vec<(usize, f64)>> {
    let m = a.len();
    let mut parent: Vec<usize> = (0..m + n).collect();
    fn find(p: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while p[r] != r {
            r = p[r];
        }
        p[x] = r;
        r
    }
    for &c in set {
        let (i, j) = (c / n, m + c % n);
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri == rj {
            return None;
        }
        parent[ri] = rj;
    }
    let mut rest: Vec<f64> = a.iter().chain(b).copied().collect();
    let mut degree = vec![0usize; m + n];
    for &c in set {
        degree[c / n] += 1;
        degree[m + c % n] += 1;
    }
    let mut done = vec![false; set.len()];
    let mut out = Vec::with_capacity(set.len());
    for _ in 0..set.len() {
        let (e, leaf) = set
            .iter()
            .enumerate()
            .filter(|(e, _)| !done[*e])
            .find_map(|(e, &c)| {
                let (i, j) = (c / n, m + c % n);
                if degree[i] == 1 {
                    Some((e, i))
                } else if degree[j] == 1 {
                    Some((e, j))
                } else {
                    None
                }
            })?;
        let c = set[e];
        let (i, j) = (c / n, m + c % n);
        let other = if leaf == i { j } else { i };
        let v = rest[leaf];
        rest[leaf] = 0.0;
        rest[other] -= v;
        degree[i] -= 1;
        degree[j] -= 1;
        done[e] = true;
        out.push((c, v));
    }
    Some(out)
}

/// Balanced integer marginals no larger than 100.
pub fn integer_marginals(rng: &mut impl rand::Rng, m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    loop {
        let r: Vec<u32> = (0..m).map(|_| rng.random_range(0..=100)).collect();
        let total: u32 = r.iter().sum();
        if total > 100 * n as u32 {
            continue;
        }
        let mut c = vec![0u32; n];
        for _ in 0..total {
            loop {
                let j = rng.random_range(0..n);
                if c[j] < 100 {
                    c[j] += 1;
                    break;
                }
            }
        }
        return (r.into_iter().map(f64::from).collect(), c.into_iter().map(f64::from).collect());
    }
}
