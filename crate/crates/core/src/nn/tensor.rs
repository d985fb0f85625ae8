use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Format(format!(
                "shape {shape:?} needs {expected} values, found {}",
                values.len()
            )));
        }
        Ok(Self { shape, values })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Packs equal-length series into a `[batch, time, 1]` tensor.
    pub fn from_series<S: AsRef<[f64]>>(series: &[S]) -> Result<Self> {
        let t = series.first().map_or(0, |s| s.as_ref().len());
        let mut values = Vec::with_capacity(series.len() * t);
        for s in series {
            let s = s.as_ref();
            if s.len() != t {
                return Err(Error::Usage(format!(
                    "series lengths differ: {} vs {t}",
                    s.len()
                )));
            }
            values.extend_from_slice(s);
        }
        Ok(Self {
            shape: vec![series.len(), t, 1],
            values,
        })
    }

    pub fn from_rows<S: AsRef<[f64]>>(rows: &[S]) -> Result<Self> {
        let d = rows.first().map_or(0, |s| s.as_ref().len());
        let mut values = Vec::with_capacity(rows.len() * d);
        for r in rows {
            let r = r.as_ref();
            if r.len() != d {
                return Err(Error::Usage("row lengths differ".into()));
            }
            values.extend_from_slice(r);
        }
        Ok(Self {
            shape: vec![rows.len(), d],
            values,
        })
    }
}

/// Batch activation laid out as `[batch, time, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Act {
    pub batch: usize,
    pub time: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Act {
    pub fn zeros(batch: usize, time: usize, channels: usize) -> Self {
        Self {
            batch,
            time,
            channels,
            data: vec![0.0; batch * time * channels],
        }
    }

    pub fn per_sample(&self) -> usize {
        self.time * self.channels
    }
    /// Accepts `[B]`, `[B, F]` (one position) or `[B, T, C]`.
    /// Accepts `[B]`, `[B, T]` (one channel) or `[B, T, C]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let (batch, time, channels) = match t.shape.as_slice() {
            [b] => (*b, 1, 1),
            [b, features] => (*b, 1, *features),
            [b, time, c] => (*b, *time, *c),
            other => {
                return Err(Error::Usage(format!(
                    "inputs must have rank 1 to 3, got shape {other:?}"
                )))
            }
        };
        if batch * time * channels != t.values.len() {
            return Err(Error::Usage("tensor shape and value count disagree".into()));
        }
        Ok(Self {
            batch,
            time,
            channels,
            data: t.values.clone(),
        })
    }

    pub fn into_tensor(self) -> Tensor {
        Tensor {
            shape: vec![self.batch, self.time, self.channels],
            values: self.data,
        }
    }

    pub fn stack(a: &Act, b: &Act) -> Result<Act> {
        if (a.time, a.channels) != (b.time, b.channels) {
            return Err(Error::Usage("branch inputs have different shapes".into()));
        }
        let mut data = Vec::with_capacity(a.data.len() + b.data.len());
        data.extend_from_slice(&a.data);
        data.extend_from_slice(&b.data);
        Ok(Act {
            batch: a.batch + b.batch,
            time: a.time,
            channels: a.channels,
            data,
        })
    }

    /// Splits the first `n` samples from the rest.
    pub fn split(mut self, n: usize) -> (Act, Act) {
        let cut = n * self.per_sample();
        let rest = self.data.split_off(cut);
        let second = Act {
            batch: self.batch - n,
            time: self.time,
            channels: self.channels,
            data: rest,
        };
        self.batch = n;
        (self, second)
    }
}
