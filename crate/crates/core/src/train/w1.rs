//! Exact earth-mover distance between finite 1-D distributions.

use super::TrainError;

const MASS_TOL: f64 = 1e-9;
/// Largest support accepted by [`exact_w1`].
pub const MAX_SUPPORT: usize = 64;

/// Finite-support probability distribution on the real line.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    mass: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<f64>, mass: Vec<f64>) -> Result<Self, TrainError> {
        let invalid = |msg: String| Err(TrainError::InvalidDistribution(msg));
        if support.is_empty() || support.len() != mass.len() {
            return invalid(format!(
                "{} points with {} masses",
                support.len(),
                mass.len()
            ));
        }
        if support.len() > MAX_SUPPORT {
            return invalid(format!(
                "support of {} exceeds {MAX_SUPPORT}",
                support.len()
            ));
        }
        if support.iter().any(|x| !x.is_finite()) {
            return invalid("non-finite support point".into());
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return invalid("negative or non-finite mass".into());
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return invalid(format!("masses sum to {total}"));
        }
        Ok(Self { support, mass })
    }

    pub fn point_mass(x: f64) -> Self {
        Self {
            support: vec![x],
            mass: vec![1.0],
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.support[a].total_cmp(&self.support[b]));
        idx
    }
}

/// Mass moved from point `i` of the source to point `j` of the target,
/// indexed in the distributions' own (unsorted) order.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    rows: usize,
    cols: usize,
    matrix: Vec<f64>,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.matrix[i * self.cols..(i + 1) * self.cols].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> f64 {
        (0..self.rows).map(|i| self.get(i, j)).sum()
    }

    /// Total cost `sum gamma(i, j) |x_i - y_j|`.
    pub fn cost(&self, p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
        let mut total = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                total += self.get(i, j) * (p.support[i] - q.support[j]).abs();
            }
        }
        total
    }
}

/// Minimum transport cost under `|x - y|`, with an optimal plan.
///
/// Both supports are sorted and mass is matched greedily from the left
/// (north-west corner rule). For a cost that is a convex function of
/// `x - y` on the line, this monotone coupling is optimal.
pub fn exact_w1(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
) -> Result<(f64, TransportPlan), TrainError> {
    // Re-validate: the fields are private but a caller may have built the
    // distribution through `point_mass` with a non-finite point.
    DiscreteDistribution::new(p.support.clone(), p.mass.clone())?;
    DiscreteDistribution::new(q.support.clone(), q.mass.clone())?;
    let (po, qo) = (p.sorted_order(), q.sorted_order());
    let mut plan = TransportPlan {
        rows: p.len(),
        cols: q.len(),
        matrix: vec![0.0; p.len() * q.len()],
    };
    let (mut a, mut b) = (0usize, 0usize);
    let mut left_p = p.mass[po[0]];
    let mut left_q = q.mass[qo[0]];
    let mut cost = 0.0;
    loop {
        let (i, j) = (po[a], qo[b]);
        let moved = left_p.min(left_q);
        plan.matrix[i * plan.cols + j] += moved;
        cost += moved * (p.support[i] - q.support[j]).abs();
        left_p -= moved;
        left_q -= moved;
        // Advance whichever side is exhausted; ties advance both.
        let next_a = left_p <= 0.0 && a + 1 < po.len();
        let next_b = left_q <= 0.0 && b + 1 < qo.len();
        if !next_a && !next_b {
            // One side has run out entirely; remaining mass on the other
            // side is rounding residue (total masses agree to 1e-9).
            break;
        }
        if next_a {
            a += 1;
            left_p = p.mass[po[a]];
        }
        if next_b {
            b += 1;
            left_q = q.mass[qo[b]];
        }
    }
    Ok((cost, plan))
}

/// `∫ |F_p(x) - F_q(x)| dx`, the closed form of the 1-D transport cost.
/// Independent of [`exact_w1`] and used to cross-check it.
pub fn cdf_distance(p: &DiscreteDistribution, q: &DiscreteDistribution) -> f64 {
    let mut events: Vec<(f64, f64)> = p
        .support
        .iter()
        .zip(&p.mass)
        .map(|(&x, &m)| (x, m))
        .chain(q.support.iter().zip(&q.mass).map(|(&x, &m)| (x, -m)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for w in events.windows(2) {
        diff += w[0].1;
        total += diff.abs() * (w[1].0 - w[0].0);
    }
    total
}
