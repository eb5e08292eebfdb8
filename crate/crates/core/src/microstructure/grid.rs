/// Real values on a regular grid, axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub dims: Vec<usize>,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(dims.iter().product::<usize>(), values.len());
        Self { dims, values }
    }

    pub fn zeros(dims: Vec<usize>) -> Self {
        let n = dims.iter().product();
        Self {
            dims,
            values: vec![0.0; n],
        }
    }

    pub fn index(&self, ijk: &[usize]) -> usize {
        linear_index(&self.dims, ijk)
    }

    pub fn get(&self, ijk: &[usize]) -> f64 {
        self.values[self.index(ijk)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.values.len() as f64
    }
}

pub(crate) fn linear_index(dims: &[usize], ijk: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (d, &i) in dims.iter().zip(ijk) {
        debug_assert!(i < *d);
        idx += i * stride;
        stride *= d;
    }
    idx
}

/// Inverse of [`linear_index`].
pub(crate) fn unravel(dims: &[usize], mut idx: usize) -> Vec<usize> {
    dims.iter()
        .map(|&d| {
            let i = idx % d;
            idx /= d;
            i
        })
        .collect()
}
