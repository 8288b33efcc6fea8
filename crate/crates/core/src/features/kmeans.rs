use rand::Rng as _;

use crate::util::Rng;

pub const MAX_LLOYD_ITERS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every Lloyd iteration, starting with the seeding.
    pub history: Vec<f64>,
}

fn d2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// k-means++ seeding: each new center is drawn with probability
/// proportional to its squared distance from the nearest chosen center.
fn seed_centers(points: &[[f64; 2]], k: usize, rng: &mut Rng) -> Vec<[f64; 2]> {
    let mut centers = vec![points[rng.random_range(0..points.len())]];
    let mut best: Vec<f64> = points.iter().map(|&p| d2(p, centers[0])).collect();
    while centers.len() < k {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut chosen = best.len() - 1;
            for (i, &w) in best.iter().enumerate() {
                if r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            // Rounding can land the draw on a zero-weight point.
            if best[chosen] == 0.0 {
                chosen = best.iter().rposition(|&w| w > 0.0).expect("positive total");
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = points[pick];
        centers.push(c);
        for (b, &p) in best.iter_mut().zip(points) {
            *b = b.min(d2(p, c));
        }
    }
    centers
}

fn assign(points: &[[f64; 2]], centers: &[[f64; 2]], out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (a, &p) in out.iter_mut().zip(points) {
        let mut bi = 0;
        let mut bd = f64::INFINITY;
        for (j, &c) in centers.iter().enumerate() {
            let d = d2(p, c);
            if d < bd {
                bd = d;
                bi = j;
            }
        }
        *a = bi;
        inertia += bd;
    }
    inertia
}

/// Lloyd's algorithm from k-means++ seeds, until assignments stop changing
/// or `MAX_LLOYD_ITERS` updates. A cluster that empties takes the point
/// farthest from its own centroid.
pub fn kmeans(points: &[[f64; 2]], k: usize, rng: &mut Rng) -> KMeans {
    assert!(!points.is_empty() && k >= 1, "kmeans needs points and k >= 1");
    let k = k.min(points.len());
    let mut centers = seed_centers(points, k, rng);
    let mut assignment = vec![0usize; points.len()];
    let mut inertia = assign(points, &centers, &mut assignment);
    let mut history = vec![inertia];
    for _ in 0..MAX_LLOYD_ITERS {
        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&a, &p) in assignment.iter().zip(points) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
            }
        }
        for j in 0..k {
            if counts[j] == 0 {
                let far = (0..points.len())
                    .filter(|&i| counts[assignment[i]] > 1)
                    .max_by(|&a, &b| {
                        let da = d2(points[a], centers[assignment[a]]);
                        let db = d2(points[b], centers[assignment[b]]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    });
                if let Some(i) = far {
                    counts[assignment[i]] -= 1;
                    centers[j] = points[i];
                    assignment[i] = j;
                    counts[j] = 1;
                }
            }
        }
        let mut next = assignment.clone();
        let new_inertia = assign(points, &centers, &mut next);
        let changed = next != assignment;
        assignment = next;
        inertia = new_inertia;
        history.push(inertia);
        if !changed {
            break;
        }
    }
    // Final centroids are the means of the final assignment.
    let mut sums = vec![[0.0f64; 2]; k];
    let mut counts = vec![0usize; k];
    for (&a, &p) in assignment.iter().zip(points) {
        sums[a][0] += p[0];
        sums[a][1] += p[1];
        counts[a] += 1;
    }
    for j in 0..k {
        if counts[j] > 0 {
            centers[j] = [sums[j][0] / counts[j] as f64, sums[j][1] / counts[j] as f64];
        }
    }
    inertia = points.iter().zip(&assignment).map(|(&p, &a)| d2(p, centers[a])).sum();
    KMeans {
        centroids: centers,
        assignment,
        inertia,
        history,
    }
}
