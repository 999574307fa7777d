use super::NnError;

/// Dense row-major `f32` array.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self, NnError> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Vec<usize>, value: f32) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![value; n],
        }
    }

    /// Stacks equally shaped samples along a new leading batch axis.
    pub fn stack(samples: &[Tensor]) -> Result<Self, NnError> {
        let first = samples
            .first()
            .ok_or_else(|| NnError::ShapeMismatch("cannot stack zero samples".into()))?;
        let mut data = Vec::with_capacity(first.len() * samples.len());
        for s in samples {
            if s.shape != first.shape {
                return Err(NnError::ShapeMismatch(format!(
                    "stack of {:?} and {:?}",
                    first.shape, s.shape
                )));
            }
            data.extend_from_slice(&s.data);
        }
        let mut shape = Vec::with_capacity(first.shape.len() + 1);
        shape.push(samples.len());
        shape.extend_from_slice(&first.shape);
        Ok(Self { shape, data })
    }

    /// Joins batches `[N_i, ...]` with equal sample shapes into one batch.
    pub fn concat(batches: &[&Tensor]) -> Result<Self, NnError> {
        let first = batches
            .first()
            .filter(|b| !b.shape.is_empty())
            .ok_or_else(|| NnError::ShapeMismatch("nothing to concatenate".into()))?;
        let mut n = 0;
        let mut data = Vec::with_capacity(batches.iter().map(|b| b.len()).sum());
        for b in batches {
            if b.shape.is_empty() || b.shape[1..] != first.shape[1..] {
                return Err(NnError::ShapeMismatch(format!(
                    "concatenating {:?} with {:?}",
                    first.shape, b.shape
                )));
            }
            n += b.shape[0];
            data.extend_from_slice(&b.data);
        }
        let mut shape = first.shape.clone();
        shape[0] = n;
        Ok(Self { shape, data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading (batch) extent.
    pub fn batch(&self) -> usize {
        self.shape.first().copied().unwrap_or(0)
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self, NnError> {
        if shape.iter().product::<usize>() != self.data.len() {
            return Err(NnError::ShapeMismatch(format!(
                "cannot reshape {:?} to {shape:?}",
                self.shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f32 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Mean over all elements, accumulated in `f64`.
    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }
}
