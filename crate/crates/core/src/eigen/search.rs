//! Local search for the united eigenvalue when exhaustive enumeration is
//! out of budget. The result is attained by an explicit model, so it bounds
//! the true minimum from above.

use nalgebra::DMatrix;
use rand::seq::index::sample;

use super::enumerate::Extremum;
use crate::error::{invalid, Result};
use crate::exec::Exec;
use crate::model::linalg::{min_eigenvalue, principal};
use crate::model::{is_full_rank, ModelIndex};
use crate::rng::{derive_seed, stream};

struct Scorer<'a> {
    x: &'a DMatrix<f64>,
    gram: DMatrix<f64>,
    base: Vec<usize>,
}

impl Scorer<'_> {
    /// `lambda_min` of the normalized united Gram, or `None` when `E` itself
    /// is rank deficient.
    fn score(&self, e: &[usize]) -> Option<f64> {
        let mut u: Vec<usize> = self.base.iter().chain(e).copied().collect();
        u.sort_unstable();
        let v = min_eigenvalue(&principal(&self.gram, &u)).max(0.0);
        if v < 1e-10 {
            let mut es = e.to_vec();
            es.sort_unstable();
            if !is_full_rank(self.x, &ModelIndex::from_sorted_unchecked(es)).full_rank {
                return None;
            }
        }
        Some(v)
    }
}

fn improve(scorer: &Scorer<'_>, comp: &[usize], mut e: Vec<usize>, mut value: f64) -> (f64, Vec<usize>) {
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for pos in 0..e.len() {
            for &j in comp {
                if e.contains(&j) {
                    continue;
                }
                let old = e[pos];
                e[pos] = j;
                if let Some(v) = scorer.score(&e) {
                    if v < value - 1e-15 && best.is_none_or(|(bv, _, _)| v < bv) {
                        best = Some((v, pos, j));
                    }
                }
                e[pos] = old;
            }
        }
        match best {
            Some((v, pos, j)) => {
                e[pos] = j;
                value = v;
            }
            None => return (value, e),
        }
    }
}

/// Greedy construction followed by best-improvement swaps, from the greedy
/// start and from `restarts` random starts.
pub fn muev_search(
    x: &DMatrix<f64>,
    xi_star: &ModelIndex,
    t: usize,
    restarts: usize,
    seed: u64,
    exec: Exec,
) -> Result<Extremum> {
    let p = x.ncols();
    xi_star.check_within(p)?;
    let s = xi_star.len();
    if t < s || t == 0 {
        return invalid(format!("search needs 1 <= t and t >= |xi*| (t={t}, s={s})"));
    }
    let comp = xi_star.complement(p);
    let extra = (t - s).min(comp.len());
    let scorer = Scorer { x, gram: x.transpose() * x / x.nrows() as f64, base: xi_star.members().to_vec() };

    let mut greedy = Vec::with_capacity(extra);
    let mut value = if s > 0 { scorer.score(&[]).unwrap_or(0.0) } else { f64::INFINITY };
    for _ in 0..extra {
        let mut pick: Option<(f64, usize)> = None;
        for &j in &comp {
            if greedy.contains(&j) {
                continue;
            }
            greedy.push(j);
            if let Some(v) = scorer.score(&greedy) {
                if pick.is_none_or(|(bv, _)| v < bv) {
                    pick = Some((v, j));
                }
            }
            greedy.pop();
        }
        match pick {
            Some((v, j)) => {
                greedy.push(j);
                value = v;
            }
            None => break,
        }
    }
    let starts: Vec<Option<u64>> = std::iter::once(None).chain((0..restarts as u64).map(Some)).collect();
    let runs = exec.map(starts, |start| match start {
        None => improve(&scorer, &comp, greedy.clone(), value),
        Some(r) => {
            let mut rng = stream(derive_seed(seed, &[r]));
            let e: Vec<usize> = sample(&mut rng, comp.len(), greedy.len()).into_iter().map(|i| comp[i]).collect();
            match scorer.score(&e) {
                Some(v) => improve(&scorer, &comp, e, v),
                None => (f64::INFINITY, e),
            }
        }
    });
    let (value, mut e) =
        runs.into_iter().reduce(|a, b| if b.0 < a.0 { b } else { a }).expect("greedy run always present");
    e.sort_unstable();
    Ok(Extremum { value, witness: ModelIndex::from_sorted_unchecked(e) })
}
