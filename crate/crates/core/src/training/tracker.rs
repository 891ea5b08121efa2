use serde::{Deserialize, Serialize};

/// Cumulative correct/total prediction counts per (student, cell). A cell is
/// a concept, or the whole student when tracking a scalar ability.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectnessTracker {
    cols: usize,
    correct: Vec<u32>,
    total: Vec<u32>,
}

impl CorrectnessTracker {
    pub fn new(students: usize, cols: usize) -> Self {
        Self {
            cols,
            correct: vec![0; students * cols],
            total: vec![0; students * cols],
        }
    }

    /// Cells per student: K, or 1 for a scalar ability.
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn students(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.total.len() / self.cols
        }
    }

    /// Column used for `concept`; scalar trackers map everything to 0.
    pub fn cell_col(&self, concept: usize) -> usize {
        if self.cols == 1 {
            0
        } else {
            concept
        }
    }

    /// Records one prediction for `student` on an exercise covering
    /// `concepts`. Correct means `(prob >= 0.5) == (label == 1)`.
    pub fn update(&mut self, student: usize, concepts: &[usize], prob: f64, label: u8) {
        let hit = u32::from((prob >= 0.5) == (label == 1));
        if self.cols == 1 {
            self.bump(student * self.cols, hit);
        } else {
            for &c in concepts {
                self.bump(student * self.cols + c, hit);
            }
        }
    }

    fn bump(&mut self, cell: usize, hit: u32) {
        self.total[cell] += 1;
        self.correct[cell] += hit;
    }

    pub fn total(&self, student: usize, col: usize) -> u32 {
        self.total[student * self.cols + col]
    }

    pub fn correct(&self, student: usize, col: usize) -> u32 {
        self.correct[student * self.cols + col]
    }

    /// Correct-prediction frequency, `None` for a cell with no data.
    pub fn frequency(&self, student: usize, col: usize) -> Option<f64> {
        let t = self.total(student, col);
        (t > 0).then(|| f64::from(self.correct(student, col)) / f64::from(t))
    }

    pub fn validate(&self) -> bool {
        self.correct.len() == self.total.len()
            && self.correct.iter().zip(&self.total).all(|(c, t)| c <= t)
    }
}
