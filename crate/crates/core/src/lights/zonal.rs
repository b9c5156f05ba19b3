use serde::{Deserialize, Serialize};

use super::raster::{BrightnessGrid, CountryMask};
use super::LightsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZonalStats {
    pub sum: f64,
    pub mean: f64,
    /// Population standard deviation over the masked cells.
    pub std: f64,
}

/// Sum, mean and population std of the cells inside `mask`, accumulated in
/// f64 in row-major order.
pub fn zonal_stats(grid: &BrightnessGrid, mask: &CountryMask) -> Result<ZonalStats, LightsError> {
    if (grid.width, grid.height) != (mask.width, mask.height) {
        return Err(LightsError::Format(format!(
            "grid is {}x{}, mask for {} is {}x{}",
            grid.width, grid.height, mask.country, mask.width, mask.height
        )));
    }
    let cells = || {
        grid.values
            .iter()
            .zip(&mask.cells)
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v as f64)
    };
    let n = cells().count();
    if n == 0 {
        return Err(LightsError::EmptyMask(mask.country.clone()));
    }
    let sum: f64 = cells().sum();
    let mean = sum / n as f64;
    let var = cells().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    Ok(ZonalStats {
        sum,
        mean,
        std: var.sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_examples() {
        let g = BrightnessGrid::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let full = CountryMask::new("X", 2, 2, vec![true; 4]).unwrap();
        let s = zonal_stats(&g, &full).unwrap();
        assert_eq!((s.sum, s.mean), (10.0, 2.5));
        assert!((s.std - 1.25f64.sqrt()).abs() < 1e-15);

        let one = BrightnessGrid::new(2, 1, vec![7.0, 3.0]).unwrap();
        let m = CountryMask::new("X", 2, 1, vec![true, false]).unwrap();
        let s = zonal_stats(&one, &m).unwrap();
        assert_eq!((s.sum, s.mean, s.std), (7.0, 7.0, 0.0));
    }

    #[test]
    fn empty_mask_and_shape_mismatch() {
        let g = BrightnessGrid::new(2, 1, vec![1.0, 2.0]).unwrap();
        let empty = CountryMask::new("X", 2, 1, vec![false, false]).unwrap();
        assert!(matches!(zonal_stats(&g, &empty), Err(LightsError::EmptyMask(_))));
        let wrong = CountryMask::new("X", 1, 2, vec![true, true]).unwrap();
        assert!(zonal_stats(&g, &wrong).is_err());
    }

    proptest! {
        #[test]
        fn disjoint_masks_add(values in prop::collection::vec(0.0f32..100.0, 64), split in prop::collection::vec(0u8..3, 64)) {
            let g = BrightnessGrid::new(8, 8, values).unwrap();
            let a = CountryMask::new("A", 8, 8, split.iter().map(|&s| s == 1).collect()).unwrap();
            let b = CountryMask::new("B", 8, 8, split.iter().map(|&s| s == 2).collect()).unwrap();
            let ab = CountryMask::new("AB", 8, 8, split.iter().map(|&s| s != 0).collect()).unwrap();
            prop_assume!(a.count() > 0 && b.count() > 0);
            let (sa, sb, sab) = (zonal_stats(&g, &a).unwrap(), zonal_stats(&g, &b).unwrap(), zonal_stats(&g, &ab).unwrap());
            prop_assert!((sab.sum - (sa.sum + sb.sum)).abs() <= 1e-12 * sab.sum.max(1.0));
        }
    }
}
