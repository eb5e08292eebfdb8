use rand::Rng;

use crate::error::{Error, Result};
use crate::macro_model::LayoutAssignment;
use crate::rng::RandomStream;

/// `count` independent layouts, every element drawn uniformly from the
/// catalog. The same stream always gives the same list.
pub fn sample_layouts(catalog_size: usize, elements: usize, count: usize, stream: RandomStream) -> Result<Vec<LayoutAssignment>> {
    if catalog_size == 0 || elements == 0 {
        return Err(Error::Parameter(format!(
            "cannot sample layouts of {elements} elements from {catalog_size} catalog entries"
        )));
    }
    let mut rng = stream.rng();
    Ok((0..count)
        .map(|_| LayoutAssignment {
            entries: (0..elements).map(|_| rng.random_range(0..catalog_size)).collect(),
        })
        .collect())
}

/// Every layout of `elements` elements over `catalog_size` entries, in
/// lexicographic order with the first element varying slowest.
pub fn enumerate_layouts(catalog_size: usize, elements: usize) -> Result<Vec<LayoutAssignment>> {
    let total = u32::try_from(elements)
        .ok()
        .and_then(|e| catalog_size.checked_pow(e))
        .filter(|&t| t <= 1 << 20)
        .ok_or_else(|| Error::Parameter(format!("{catalog_size}^{elements} layouts are too many to enumerate")))?;
    Ok((0..total)
        .map(|mut code| {
            let mut entries = vec![0; elements];
            for e in (0..elements).rev() {
                entries[e] = code % catalog_size;
                code /= catalog_size;
            }
            LayoutAssignment { entries }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_entry_catalog_gives_zero_layouts() {
        let l = sample_layouts(1, 12, 4, RandomStream::new(3, 9)).unwrap();
        assert_eq!(l.len(), 4);
        assert!(l.iter().all(|l| l.entries.iter().all(|&e| e == 0)));
    }

    #[test]
    fn reproducible_and_fresh() {
        let s = RandomStream::new(3, 9);
        assert_eq!(sample_layouts(50, 30, 3, s).unwrap(), sample_layouts(50, 30, 3, s).unwrap());
        let a = sample_layouts(50, 30, 2, s).unwrap();
        assert_ne!(a[0], a[1]);
        assert_ne!(a, sample_layouts(50, 30, 2, RandomStream::new(3, 10)).unwrap());
    }

    #[test]
    fn enumeration_is_complete() {
        let all = enumerate_layouts(3, 2).unwrap();
        assert_eq!(all.len(), 9);
        assert_eq!(all[5].entries, vec![1, 2]);
        let set: std::collections::HashSet<_> = all.iter().map(|l| l.entries.clone()).collect();
        assert_eq!(set.len(), 9);
        assert!(enumerate_layouts(200, 100).is_err());
    }
}
