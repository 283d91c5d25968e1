use std::collections::HashMap;

use nalgebra::DVector;

use crate::sampling::EvaluatedPoint;

/// Every point evaluated during a run, keyed by exact coordinates.
#[derive(Debug, Clone, Default)]
pub struct History {
    points: Vec<EvaluatedPoint>,
    index: HashMap<Vec<u64>, usize>,
}

fn key(x: &DVector<f64>) -> Vec<u64> {
    // Adding 0.0 folds -0.0 into +0.0.
    x.iter().map(|v| (v + 0.0).to_bits()).collect()
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &EvaluatedPoint {
        &self.points[i]
    }

    pub fn points(&self) -> &[EvaluatedPoint] {
        &self.points
    }

    pub fn find(&self, x: &DVector<f64>) -> Option<usize> {
        self.index.get(&key(x)).copied()
    }

    /// Stores a point, replacing any entry at the same coordinates.
    pub fn insert(&mut self, point: EvaluatedPoint) -> usize {
        match self.find(&point.x) {
            Some(i) => {
                self.points[i] = point;
                i
            }
            None => {
                self.index.insert(key(&point.x), self.points.len());
                self.points.push(point);
                self.points.len() - 1
            }
        }
    }

    /// Coordinates in insertion order.
    pub fn locations(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.points.iter().map(|p| &p.x)
    }
}
