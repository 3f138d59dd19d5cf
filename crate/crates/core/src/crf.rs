//! Linear-chain CRF over `C` labels.
//!
//! The transition matrix is `(C + 2) x (C + 2)`; row/column `C` is the start
//! state and `C + 1` the stop state. `transitions[(i, j)]` scores moving from
//! label `i` to label `j`.

use crate::error::{Error, Result};
use crate::tensor::{log_sum_exp, Matrix};

pub fn start_state(num_labels: usize) -> usize {
    num_labels
}

pub fn stop_state(num_labels: usize) -> usize {
    num_labels + 1
}

fn check(emissions: &Matrix, transitions: &Matrix) -> Result<usize> {
    let c = emissions.cols();
    if transitions.shape() != (c + 2, c + 2) {
        return Err(Error::shape(
            "crf",
            format!(
                "transitions {:?} do not match {} labels",
                transitions.shape(),
                c
            ),
        ));
    }
    Ok(c)
}

fn check_labels(emissions: &Matrix, labels: &[usize]) -> Result<()> {
    if labels.len() != emissions.rows() {
        return Err(Error::LengthMismatch {
            what: "crf labels vs emissions",
            left: labels.len(),
            right: emissions.rows(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= emissions.cols()) {
        return Err(Error::OutOfRange {
            what: "crf label",
            index: bad,
            size: emissions.cols(),
        });
    }
    Ok(())
}

/// Unnormalized score of one label sequence.
pub fn sequence_score(emissions: &Matrix, transitions: &Matrix, labels: &[usize]) -> Result<f64> {
    let c = check(emissions, transitions)?;
    check_labels(emissions, labels)?;
    let mut prev = start_state(c);
    let mut s = 0.0;
    for (t, &y) in labels.iter().enumerate() {
        s += transitions.get(prev, y) + emissions.get(t, y);
        prev = y;
    }
    Ok(s + transitions.get(prev, stop_state(c)))
}

/// Forward log-scores `alpha[t][j]`: all prefixes ending in `j` at `t`.
fn forward(emissions: &Matrix, transitions: &Matrix, c: usize) -> Matrix {
    let n = emissions.rows();
    let mut alpha = Matrix::zeros(n, c);
    let mut buf = vec![0.0; c];
    for j in 0..c {
        alpha.set(0, j, transitions.get(start_state(c), j) + emissions.get(0, j));
    }
    for t in 1..n {
        for j in 0..c {
            for (i, b) in buf.iter_mut().enumerate() {
                *b = alpha.get(t - 1, i) + transitions.get(i, j);
            }
            alpha.set(t, j, log_sum_exp(&buf) + emissions.get(t, j));
        }
    }
    alpha
}

/// Backward log-scores `beta[t][i]`: all suffixes after `i` at `t`, including stop.
fn backward(emissions: &Matrix, transitions: &Matrix, c: usize) -> Matrix {
    let n = emissions.rows();
    let mut beta = Matrix::zeros(n, c);
    let mut buf = vec![0.0; c];
    for i in 0..c {
        beta.set(n - 1, i, transitions.get(i, stop_state(c)));
    }
    for t in (0..n - 1).rev() {
        for i in 0..c {
            for (j, b) in buf.iter_mut().enumerate() {
                *b = transitions.get(i, j) + emissions.get(t + 1, j) + beta.get(t + 1, j);
            }
            beta.set(t, i, log_sum_exp(&buf));
        }
    }
    beta
}

fn final_scores(alpha: &Matrix, transitions: &Matrix, c: usize) -> Vec<f64> {
    let last = alpha.rows() - 1;
    (0..c)
        .map(|j| alpha.get(last, j) + transitions.get(j, stop_state(c)))
        .collect()
}

/// `log Z`, the log-sum of scores over every label sequence.
pub fn log_partition(emissions: &Matrix, transitions: &Matrix) -> Result<f64> {
    let c = check(emissions, transitions)?;
    if emissions.rows() == 0 {
        return Ok(transitions.get(start_state(c), stop_state(c)));
    }
    let alpha = forward(emissions, transitions, c);
    Ok(log_sum_exp(&final_scores(&alpha, transitions, c)))
}

pub fn log_likelihood(emissions: &Matrix, transitions: &Matrix, labels: &[usize]) -> Result<f64> {
    Ok(sequence_score(emissions, transitions, labels)? - log_partition(emissions, transitions)?)
}

/// Per-position label marginals `P(y_t = j)`.
pub fn marginals(emissions: &Matrix, transitions: &Matrix) -> Result<Matrix> {
    let c = check(emissions, transitions)?;
    let n = emissions.rows();
    if n == 0 {
        return Ok(Matrix::zeros(0, c));
    }
    let alpha = forward(emissions, transitions, c);
    let beta = backward(emissions, transitions, c);
    let log_z = log_sum_exp(&final_scores(&alpha, transitions, c));
    Ok(Matrix::from_vec(
        n,
        c,
        alpha
            .data()
            .iter()
            .zip(beta.data())
            .map(|(a, b)| (a + b - log_z).exp())
            .collect(),
    ))
}

/// Highest-scoring label sequence. Ties resolve to the lowest label index at
/// every back-pointer and at the final state.
pub fn viterbi_decode(emissions: &Matrix, transitions: &Matrix) -> Result<(Vec<usize>, f64)> {
    let c = check(emissions, transitions)?;
    let n = emissions.rows();
    if n == 0 {
        return Ok((Vec::new(), transitions.get(start_state(c), stop_state(c))));
    }
    let mut score = Matrix::zeros(n, c);
    let mut back = vec![0usize; n * c];
    for j in 0..c {
        score.set(0, j, transitions.get(start_state(c), j) + emissions.get(0, j));
    }
    for t in 1..n {
        for j in 0..c {
            let mut best = 0;
            let mut best_s = f64::NEG_INFINITY;
            for i in 0..c {
                let s = score.get(t - 1, i) + transitions.get(i, j);
                if s > best_s {
                    best_s = s;
                    best = i;
                }
            }
            score.set(t, j, best_s + emissions.get(t, j));
            back[t * c + j] = best;
        }
    }
    let finals = final_scores(&score, transitions, c);
    let mut last = 0;
    for (j, &s) in finals.iter().enumerate() {
        if s > finals[last] {
            last = j;
        }
    }
    let best = finals[last];
    let mut path = vec![0; n];
    path[n - 1] = last;
    for t in (1..n).rev() {
        path[t - 1] = back[t * c + path[t]];
    }
    Ok((path, best))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrfGrad {
    pub loss: f64,
    pub emissions: Matrix,
    pub transitions: Matrix,
}

/// Negative log-likelihood and its gradients (expected minus observed counts).
pub fn nll_grad(emissions: &Matrix, transitions: &Matrix, labels: &[usize]) -> Result<CrfGrad> {
    let c = check(emissions, transitions)?;
    check_labels(emissions, labels)?;
    let n = emissions.rows();
    let mut g_e = Matrix::zeros(n, c);
    let mut g_t = Matrix::zeros(c + 2, c + 2);
    let (start, stop) = (start_state(c), stop_state(c));
    if n == 0 {
        return Ok(CrfGrad {
            loss: 0.0,
            emissions: g_e,
            transitions: g_t,
        });
    }
    let alpha = forward(emissions, transitions, c);
    let beta = backward(emissions, transitions, c);
    let log_z = log_sum_exp(&final_scores(&alpha, transitions, c));

    for t in 0..n {
        for j in 0..c {
            g_e.set(t, j, (alpha.get(t, j) + beta.get(t, j) - log_z).exp());
        }
    }
    for j in 0..c {
        g_t.set(start, j, g_e.get(0, j));
        g_t.set(j, stop, g_e.get(n - 1, j));
    }
    for t in 1..n {
        for i in 0..c {
            let a = alpha.get(t - 1, i);
            for j in 0..c {
                let p = (a + transitions.get(i, j) + emissions.get(t, j) + beta.get(t, j) - log_z).exp();
                g_t.data_mut()[i * (c + 2) + j] += p;
            }
        }
    }

    let gold = sequence_score(emissions, transitions, labels)?;
    let mut prev = start;
    for (t, &y) in labels.iter().enumerate() {
        g_e.data_mut()[t * c + y] -= 1.0;
        g_t.data_mut()[prev * (c + 2) + y] -= 1.0;
        prev = y;
    }
    g_t.data_mut()[prev * (c + 2) + stop] -= 1.0;

    Ok(CrfGrad {
        loss: log_z - gold,
        emissions: g_e,
        transitions: g_t,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn all_sequences(n: usize, c: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..c).map(move |y| {
                        let mut q = p.clone();
                        q.push(y);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn random(n: usize, c: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (
            Matrix::uniform(n, c, 2.0, &mut rng),
            Matrix::uniform(c + 2, c + 2, 2.0, &mut rng),
        )
    }

    #[test]
    fn partition_matches_enumeration() {
        for (n, c, seed) in [(1, 3, 1), (3, 2, 2), (4, 3, 3)] {
            let (e, t) = random(n, c, seed);
            let scores: Vec<f64> = all_sequences(n, c)
                .iter()
                .map(|y| sequence_score(&e, &t, y).unwrap())
                .collect();
            assert!((log_partition(&e, &t).unwrap() - log_sum_exp(&scores)).abs() < 1e-9);
        }
    }

    #[test]
    fn viterbi_matches_enumeration() {
        let (e, t) = random(4, 3, 7);
        let best = all_sequences(4, 3)
            .into_iter()
            .map(|y| (sequence_score(&e, &t, &y).unwrap(), y))
            .fold((f64::NEG_INFINITY, vec![]), |a, b| if b.0 > a.0 { b } else { a });
        let (path, score) = viterbi_decode(&e, &t).unwrap();
        assert_eq!(path, best.1);
        assert!((score - best.0).abs() < 1e-9);
    }

    #[test]
    fn viterbi_ties_take_lowest_index() {
        let e = Matrix::zeros(3, 4);
        let t = Matrix::zeros(6, 6);
        assert_eq!(viterbi_decode(&e, &t).unwrap().0, vec![0, 0, 0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (e, t) = random(4, 3, 11);
        let labels = [2, 0, 1, 1];
        let g = nll_grad(&e, &t, &labels).unwrap();
        let nll = |e: &Matrix, t: &Matrix| -log_likelihood(e, t, &labels).unwrap();
        let h = 1e-5;
        for i in 0..e.len() {
            let mut p = e.clone();
            p.data_mut()[i] += h;
            let mut m = e.clone();
            m.data_mut()[i] -= h;
            let num = (nll(&p, &t) - nll(&m, &t)) / (2.0 * h);
            assert!((num - g.emissions.data()[i]).abs() < 1e-7);
        }
        for i in 0..t.len() {
            let mut p = t.clone();
            p.data_mut()[i] += h;
            let mut m = t.clone();
            m.data_mut()[i] -= h;
            let num = (nll(&e, &p) - nll(&e, &m)) / (2.0 * h);
            assert!((num - g.transitions.data()[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn marginals_sum_to_one() {
        let (e, t) = random(5, 4, 3);
        let m = marginals(&e, &t).unwrap();
        for r in 0..5 {
            assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_shapes() {
        let e = Matrix::zeros(2, 3);
        assert!(log_partition(&e, &Matrix::zeros(3, 3)).is_err());
        assert!(sequence_score(&e, &Matrix::zeros(5, 5), &[0]).is_err());
        assert!(sequence_score(&e, &Matrix::zeros(5, 5), &[0, 3]).is_err());
    }
}
