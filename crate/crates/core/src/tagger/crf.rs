//! Linear-chain CRF over the B/I/O tag set.

use rand::Rng;

use super::TaggerError;
use crate::corpus::BioTag;
use crate::neural::{logsumexp, Matrix, Params};

pub const NUM_TAGS: usize = 3;

const B: usize = 0;
const I: usize = 1;
const O: usize = 2;

/// `transitions[(i, j)]` scores tag `j` following tag `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrfLayer {
    pub transitions: Matrix,
    pub start: Matrix,
    pub end: Matrix,
}

impl CrfLayer {
    pub fn zeros() -> Self {
        Self {
            transitions: Matrix::zeros(NUM_TAGS, NUM_TAGS),
            start: Matrix::zeros(NUM_TAGS, 1),
            end: Matrix::zeros(NUM_TAGS, 1),
        }
    }

    /// Uniform in [-0.1, 0.1].
    pub fn new(rng: &mut impl Rng) -> Self {
        let mut crf = Self::zeros();
        for (_, m) in crf.params_mut() {
            for x in m.data_mut() {
                *x = rng.gen_range(-0.1..=0.1);
            }
        }
        crf
    }

    pub fn transition(&self, from: usize, to: usize) -> f64 {
        self.transitions.get(from, to)
    }

    pub fn start_score(&self, tag: usize) -> f64 {
        self.start.get(tag, 0)
    }

    pub fn end_score(&self, tag: usize) -> f64 {
        self.end.get(tag, 0)
    }
}

impl Params for CrfLayer {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![
            ("transitions".into(), &self.transitions),
            ("start".into(), &self.start),
            ("end".into(), &self.end),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Matrix)> {
        vec![
            ("transitions".into(), &mut self.transitions),
            ("start".into(), &mut self.start),
            ("end".into(), &mut self.end),
        ]
    }
}

fn check(emissions: &[Vec<f64>]) -> Result<(), TaggerError> {
    if emissions.is_empty() {
        return Err(TaggerError::EmptySequence);
    }
    match emissions.iter().find(|row| row.len() != NUM_TAGS) {
        Some(row) => Err(TaggerError::EmissionWidth(row.len())),
        None => Ok(()),
    }
}

/// Unmasked score of one tag path: start + emissions + transitions + end.
pub fn path_score(emissions: &[Vec<f64>], crf: &CrfLayer, tags: &[usize]) -> f64 {
    let mut s = crf.start_score(tags[0]) + crf.end_score(tags[tags.len() - 1]);
    for (t, &tag) in tags.iter().enumerate() {
        s += emissions[t][tag];
        if t > 0 {
            s += crf.transition(tags[t - 1], tag);
        }
    }
    s
}

fn forward(emissions: &[Vec<f64>], crf: &CrfLayer) -> Vec<[f64; NUM_TAGS]> {
    let mut alpha = Vec::with_capacity(emissions.len());
    alpha.push(std::array::from_fn(|j| crf.start_score(j) + emissions[0][j]));
    for em in &emissions[1..] {
        let prev: &[f64; NUM_TAGS] = alpha.last().unwrap();
        let next = std::array::from_fn(|j| {
            let terms: [f64; NUM_TAGS] = std::array::from_fn(|i| prev[i] + crf.transition(i, j));
            em[j] + logsumexp(&terms)
        });
        alpha.push(next);
    }
    alpha
}

fn backward(emissions: &[Vec<f64>], crf: &CrfLayer) -> Vec<[f64; NUM_TAGS]> {
    let n = emissions.len();
    let mut beta = vec![[0.0; NUM_TAGS]; n];
    beta[n - 1] = std::array::from_fn(|i| crf.end_score(i));
    for t in (0..n - 1).rev() {
        let next = beta[t + 1];
        beta[t] = std::array::from_fn(|i| {
            let terms: [f64; NUM_TAGS] =
                std::array::from_fn(|j| crf.transition(i, j) + emissions[t + 1][j] + next[j]);
            logsumexp(&terms)
        });
    }
    beta
}

fn log_z(alpha: &[[f64; NUM_TAGS]], crf: &CrfLayer) -> f64 {
    let last = alpha.last().unwrap();
    let terms: [f64; NUM_TAGS] = std::array::from_fn(|j| last[j] + crf.end_score(j));
    logsumexp(&terms)
}

/// Log-sum-exp of all path scores, by the forward algorithm.
pub fn crf_log_partition(emissions: &[Vec<f64>], crf: &CrfLayer) -> Result<f64, TaggerError> {
    check(emissions)?;
    Ok(log_z(&forward(emissions, crf), crf))
}

fn gold_indices(emissions: &[Vec<f64>], gold: &[BioTag]) -> Result<Vec<usize>, TaggerError> {
    if gold.len() != emissions.len() {
        return Err(TaggerError::LengthMismatch {
            tokens: emissions.len(),
            tags: gold.len(),
        });
    }
    Ok(gold.iter().map(|t| t.index()).collect())
}

/// Negative log-likelihood of the gold path.
pub fn crf_nll(emissions: &[Vec<f64>], crf: &CrfLayer, gold: &[BioTag]) -> Result<f64, TaggerError> {
    check(emissions)?;
    let tags = gold_indices(emissions, gold)?;
    Ok(crf_log_partition(emissions, crf)? - path_score(emissions, crf, &tags))
}

/// NLL plus its gradients: CRF parameter gradients are added into `grad`,
/// emission gradients (`marginal - gold indicator`) are returned.
pub fn crf_nll_backward(
    emissions: &[Vec<f64>],
    crf: &CrfLayer,
    gold: &[BioTag],
    grad: &mut CrfLayer,
) -> Result<(f64, Vec<Vec<f64>>), TaggerError> {
    check(emissions)?;
    let tags = gold_indices(emissions, gold)?;
    let n = emissions.len();
    let alpha = forward(emissions, crf);
    let beta = backward(emissions, crf);
    let z = log_z(&alpha, crf);
    let loss = z - path_score(emissions, crf, &tags);

    let mut d_em = vec![vec![0.0; NUM_TAGS]; n];
    for t in 0..n {
        for j in 0..NUM_TAGS {
            d_em[t][j] = (alpha[t][j] + beta[t][j] - z).exp();
        }
    }
    for j in 0..NUM_TAGS {
        let s = grad.start.get(j, 0);
        grad.start.set(j, 0, s + d_em[0][j]);
        let e = grad.end.get(j, 0);
        grad.end.set(j, 0, e + d_em[n - 1][j]);
    }
    for t in 1..n {
        for i in 0..NUM_TAGS {
            for j in 0..NUM_TAGS {
                let p = (alpha[t - 1][i] + crf.transition(i, j) + emissions[t][j] + beta[t][j] - z)
                    .exp();
                let g = grad.transitions.get(i, j);
                grad.transitions.set(i, j, g + p);
            }
        }
    }
    for (t, &tag) in tags.iter().enumerate() {
        d_em[t][tag] -= 1.0;
        if t > 0 {
            let g = grad.transitions.get(tags[t - 1], tag);
            grad.transitions.set(tags[t - 1], tag, g - 1.0);
        }
    }
    let s = grad.start.get(tags[0], 0);
    grad.start.set(tags[0], 0, s - 1.0);
    let e = grad.end.get(tags[n - 1], 0);
    grad.end.set(tags[n - 1], 0, e - 1.0);
    Ok((loss, d_em))
}

/// Transition score with the decode-time mask (`O -> I` forbidden).
fn masked_transition(crf: &CrfLayer, from: usize, to: usize) -> f64 {
    if from == O && to == I {
        f64::NEG_INFINITY
    } else {
        crf.transition(from, to)
    }
}

/// Best well-formed path. Ties go to the lowest tag index at every step of
/// the backtrace.
pub fn viterbi_decode(emissions: &[Vec<f64>], crf: &CrfLayer) -> Result<Vec<BioTag>, TaggerError> {
    check(emissions)?;
    let n = emissions.len();
    let mut score: [f64; NUM_TAGS] = std::array::from_fn(|j| {
        if j == I {
            f64::NEG_INFINITY
        } else {
            crf.start_score(j) + emissions[0][j]
        }
    });
    let mut back = vec![[0usize; NUM_TAGS]; n];
    for t in 1..n {
        let mut next = [f64::NEG_INFINITY; NUM_TAGS];
        for j in 0..NUM_TAGS {
            let mut best = f64::NEG_INFINITY;
            let mut arg = 0;
            for (i, s) in score.iter().enumerate() {
                let cand = s + masked_transition(crf, i, j);
                if cand > best {
                    best = cand;
                    arg = i;
                }
            }
            next[j] = best + emissions[t][j];
            back[t][j] = arg;
        }
        score = next;
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = B;
    for (j, s) in score.iter().enumerate() {
        let cand = s + crf.end_score(j);
        if cand > best {
            best = cand;
            last = j;
        }
    }
    let mut path = vec![last; n];
    for t in (1..n).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok(path
        .into_iter()
        .map(|i| BioTag::from_index(i).expect("tag index below NUM_TAGS"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::is_well_formed;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_paths(n: usize) -> Vec<Vec<usize>> {
        let mut out = vec![vec![]];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..NUM_TAGS).map(move |j| {
                        let mut q = p.clone();
                        q.push(j);
                        q
                    })
                })
                .collect();
        }
        out
    }

    fn random_case(rng: &mut ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, CrfLayer) {
        let em = (0..n)
            .map(|_| (0..NUM_TAGS).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut crf = CrfLayer::zeros();
        for (_, m) in crf.params_mut() {
            for x in m.data_mut() {
                *x = rng.gen_range(-2.0..2.0);
            }
        }
        (em, crf)
    }

    #[test]
    fn single_step_partition() {
        let crf = CrfLayer::zeros();
        let z = crf_log_partition(&[vec![0.0; 3]], &crf).unwrap();
        assert!((z - 3f64.ln()).abs() < 1e-12);
        let z = crf_log_partition(&[vec![1.0, -2.0, 0.5]], &crf).unwrap();
        assert!((z - logsumexp(&[1.0, -2.0, 0.5])).abs() < 1e-12);
        for gold in [BioTag::B, BioTag::I, BioTag::O] {
            let nll = crf_nll(&[vec![0.0; 3]], &crf, &[gold]).unwrap();
            assert!((nll - 3f64.ln()).abs() < 1e-12);
        }
        assert!(matches!(crf_log_partition(&[], &crf), Err(TaggerError::EmptySequence)));
    }

    #[test]
    fn confident_gold_has_small_nll() {
        let crf = CrfLayer::zeros();
        let em = vec![vec![20.0, 0.0, 0.0], vec![0.0, 20.0, 0.0], vec![0.0, 0.0, 20.0]];
        let nll = crf_nll(&em, &crf, &[BioTag::B, BioTag::I, BioTag::O]).unwrap();
        assert!((0.0..0.01).contains(&nll));
        assert!(matches!(
            crf_nll(&em, &crf, &[BioTag::B]),
            Err(TaggerError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn viterbi_small_cases() {
        let crf = CrfLayer::zeros();
        assert_eq!(viterbi_decode(&[vec![0.5, 0.1, 0.2]], &crf).unwrap(), vec![BioTag::B]);
        let flat = vec![vec![0.0; 3]; 4];
        assert_eq!(viterbi_decode(&flat, &crf).unwrap(), vec![BioTag::B; 4]);
        // I is the best emission at the start but masked there
        assert_eq!(viterbi_decode(&[vec![0.0, 5.0, 1.0]], &crf).unwrap(), vec![BioTag::O]);
    }

    #[test]
    fn brute_force_agreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=6 {
            let (em, crf) = random_case(&mut rng, n);
            let paths = all_paths(n);
            let scores: Vec<f64> = paths.iter().map(|p| path_score(&em, &crf, p)).collect();
            let z = crf_log_partition(&em, &crf).unwrap();
            assert!((z - logsumexp(&scores)).abs() < 1e-8);
            let total: f64 = scores.iter().map(|s| (s - z).exp()).sum();
            assert!((total - 1.0).abs() < 1e-8);

            let gold: Vec<BioTag> = paths[7 % paths.len()]
                .iter()
                .map(|&i| BioTag::from_index(i).unwrap())
                .collect();
            let nll = crf_nll(&em, &crf, &gold).unwrap();
            assert!((nll - (z - scores[7 % paths.len()])).abs() < 1e-8);
        }
    }

    #[test]
    fn analytic_gradients_match_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (em, crf) = random_case(&mut rng, 4);
        let gold = [BioTag::O, BioTag::B, BioTag::I, BioTag::O];
        let mut grad = CrfLayer::zeros();
        let (_, d_em) = crf_nll_backward(&em, &crf, &gold, &mut grad).unwrap();
        let h = 1e-5;
        for t in 0..em.len() {
            for j in 0..NUM_TAGS {
                let mut up = em.clone();
                up[t][j] += h;
                let mut down = em.clone();
                down[t][j] -= h;
                let num = (crf_nll(&up, &crf, &gold).unwrap() - crf_nll(&down, &crf, &gold).unwrap())
                    / (2.0 * h);
                assert!((num - d_em[t][j]).abs() < 1e-7);
            }
        }
        let names: Vec<String> = crf.params().into_iter().map(|(n, _)| n).collect();
        for (p, name) in names.iter().enumerate() {
            let len = crf.params()[p].1.data().len();
            for k in 0..len {
                let mut up = crf.clone();
                up.params_mut()[p].1.data_mut()[k] += h;
                let mut down = crf.clone();
                down.params_mut()[p].1.data_mut()[k] -= h;
                let num = (crf_nll(&em, &up, &gold).unwrap() - crf_nll(&em, &down, &gold).unwrap())
                    / (2.0 * h);
                let ana = grad.params()[p].1.data()[k];
                assert!((num - ana).abs() < 1e-7, "{name}[{k}]: {num} vs {ana}");
            }
        }
    }

    proptest! {
        #[test]
        fn viterbi_is_masked_argmax(seed in 0u64..500, n in 1usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (em, crf) = random_case(&mut rng, n);
            let decoded = viterbi_decode(&em, &crf).unwrap();
            prop_assert!(is_well_formed(&decoded));
            let best = all_paths(n)
                .into_iter()
                .filter(|p| {
                    let tags: Vec<BioTag> = p.iter().map(|&i| BioTag::from_index(i).unwrap()).collect();
                    is_well_formed(&tags)
                })
                .map(|p| path_score(&em, &crf, &p))
                .fold(f64::NEG_INFINITY, f64::max);
            let idx: Vec<usize> = decoded.iter().map(|t| t.index()).collect();
            prop_assert!((path_score(&em, &crf, &idx) - best).abs() < 1e-9);
        }

        #[test]
        fn position_shift_invariance(seed in 0u64..500, c in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (em, crf) = random_case(&mut rng, 4);
            let mut shifted = em.clone();
            shifted[2].iter_mut().for_each(|x| *x += c);
            let gold = [BioTag::B, BioTag::I, BioTag::O, BioTag::O];
            let z0 = crf_log_partition(&em, &crf).unwrap();
            let z1 = crf_log_partition(&shifted, &crf).unwrap();
            prop_assert!((z1 - z0 - c).abs() < 1e-9);
            let d = crf_nll(&em, &crf, &gold).unwrap() - crf_nll(&shifted, &crf, &gold).unwrap();
            prop_assert!(d.abs() < 1e-9);
            prop_assert_eq!(viterbi_decode(&em, &crf).unwrap(), viterbi_decode(&shifted, &crf).unwrap());
        }

        #[test]
        fn partition_dominates_paths(seed in 0u64..500, n in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (em, crf) = random_case(&mut rng, n);
            let z = crf_log_partition(&em, &crf).unwrap();
            for p in all_paths(n) {
                prop_assert!(z >= path_score(&em, &crf, &p));
            }
        }
    }
}
