//! Response logs drawn from a known multidimensional logistic model, for
//! recovery experiments and fixtures.

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{QEntry, ResponseLog};
use crate::numerics::{stable_sigmoid, Matrix};
use crate::rng::{seeded, sub_seed};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub students: usize,
    pub exercises: usize,
    pub concepts: usize,
    pub logs_per_student: usize,
    /// Probability that an exercise covers a second concept.
    pub second_concept_rate: f64,
    /// Spread of each student's log-normal concept preference; 0 spreads
    /// practice evenly.
    pub exposure_skew: f64,
    /// True abilities and difficulties are uniform on `[-range, range]`.
    pub range: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            students: 200,
            exercises: 400,
            concepts: 10,
            logs_per_student: 80,
            second_concept_rate: 0.3,
            exposure_skew: 1.0,
            range: 2.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub logs: Vec<ResponseLog>,
    pub q: Vec<QEntry>,
    /// True abilities, `students x concepts`.
    pub abilities: Matrix,
    /// True difficulties, `exercises x concepts`.
    pub difficulties: Matrix,
}

pub fn student_id(i: usize) -> String {
    format!("s{i:04}")
}

pub fn exercise_id(j: usize) -> String {
    format!("e{j:04}")
}

pub fn concept_id(l: usize) -> String {
    format!("c{l:02}")
}

/// Correct-answer probability `sigmoid(sum over covered l of (a_l - b_l))`.
pub fn true_probability(ability: &[f64], difficulty: &[f64], covered: &[usize]) -> f64 {
    stable_sigmoid(covered.iter().map(|&l| ability[l] - difficulty[l]).sum())
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if spec.students == 0 || spec.concepts == 0 || spec.exercises < spec.concepts {
        return Err(Error::Invalid(
            "synthetic data needs students, concepts, and at least one exercise per concept".into(),
        ));
    }
    if spec.logs_per_student > spec.exercises {
        return Err(Error::Invalid("logs_per_student exceeds the exercise count".into()));
    }
    let mut rng = seeded(sub_seed(spec.seed, "synthetic"));
    let uniform = |rng: &mut crate::rng::Rng| rng.random_range(-spec.range..=spec.range);
    let k = spec.concepts;

    let mut covered: Vec<Vec<usize>> = Vec::with_capacity(spec.exercises);
    let mut by_primary = vec![Vec::new(); k];
    for j in 0..spec.exercises {
        let primary = j % k;
        by_primary[primary].push(j);
        let mut c = vec![primary];
        if k > 1 && rng.random::<f64>() < spec.second_concept_rate {
            let other = (primary + rng.random_range(1..k)) % k;
            c.push(other);
        }
        covered.push(c);
    }
    let mut abilities = Matrix::zeros(spec.students, k);
    abilities.as_mut_slice().iter_mut().for_each(|a| *a = uniform(&mut rng));
    let mut difficulties = Matrix::zeros(spec.exercises, k);
    difficulties.as_mut_slice().iter_mut().for_each(|b| *b = uniform(&mut rng));

    let mut logs = Vec::with_capacity(spec.students * spec.logs_per_student);
    for i in 0..spec.students {
        let weights: Vec<f64> = (0..k)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (spec.exposure_skew * g).exp()
            })
            .collect();
        let pick = WeightedIndex::new(&weights).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut answered = vec![false; spec.exercises];
        for _ in 0..spec.logs_per_student {
            let concept = pick.sample(&mut rng);
            let open: Vec<usize> = by_primary[concept].iter().copied().filter(|&j| !answered[j]).collect();
            let j = match open.choose(&mut rng) {
                Some(&j) => j,
                None => {
                    let rest: Vec<usize> = (0..spec.exercises).filter(|&j| !answered[j]).collect();
                    *rest.choose(&mut rng).expect("logs_per_student <= exercises")
                }
            };
            answered[j] = true;
            let p = true_probability(abilities.row(i), difficulties.row(j), &covered[j]);
            let score = u8::from(rng.random::<f64>() < p);
            logs.push(ResponseLog::new(student_id(i), exercise_id(j), score));
        }
    }
    let q = covered
        .iter()
        .enumerate()
        .flat_map(|(j, c)| c.iter().map(move |&l| QEntry::new(exercise_id(j), concept_id(l))))
        .collect();
    Ok(SyntheticData {
        logs,
        q,
        abilities,
        difficulties,
    })
}
