//! Ten summary statistics used for the heart-rate and motion modalities.

use crate::error::{Error, Result};
use crate::model::{AxisSeries, FeatureVector, Modality, TimeSeries};

pub const STAT10_NAMES: [&str; 10] = [
    "mean", "median", "max", "min", "p25", "p75", "std", "range", "skewness", "kurtosis",
];

/// Percentile by linear interpolation between closest ranks (`rank = q·(n−1)`).
/// `sorted` must be ascending and non-empty.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// mean, median, max, min, p25, p75, std, range, skewness, excess kurtosis.
/// Standard deviation is the population one; skewness and kurtosis are 0
/// when the series has no spread.
pub fn stat10(series: &[f64]) -> Result<[f64; 10]> {
    if series.is_empty() {
        return Err(Error::invalid("stat10 of an empty series"));
    }
    let n = series.len() as f64;
    let mut sorted = series.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = series.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in series {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    let sd = m2.sqrt();
    let (skew, kurt) = if m2 > 0.0 {
        (m3 / (m2 * sd), m4 / (m2 * m2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let min = sorted[0];
    let max = *sorted.last().unwrap();
    Ok([
        mean,
        percentile_sorted(&sorted, 0.5),
        max,
        min,
        percentile_sorted(&sorted, 0.25),
        percentile_sorted(&sorted, 0.75),
        sd,
        max - min,
        skew,
        kurt,
    ])
}

pub fn magnitude(xyz: &[[f64; 3]]) -> Vec<f64> {
    xyz.iter()
        .map(|p| (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt())
        .collect()
}

pub fn physio_features(hr: &TimeSeries) -> Result<FeatureVector> {
    if hr.is_empty() {
        return Err(Error::invalid("no heart-rate samples left after filtering"));
    }
    FeatureVector::new(Modality::Physio, stat10(&hr.v)?.to_vec())
}

/// stat10 of the accelerometer magnitude followed by stat10 of the gyroscope
/// magnitude (20 values).
pub fn movement_features(accel: &AxisSeries, gyro: &AxisSeries) -> Result<FeatureVector> {
    if accel.is_empty() || gyro.is_empty() {
        return Err(Error::invalid(format!(
            "movement needs both sensors (accel {} samples, gyro {} samples)",
            accel.len(),
            gyro.len()
        )));
    }
    let mut values = stat10(&magnitude(&accel.xyz))?.to_vec();
    values.extend(stat10(&magnitude(&gyro.xyz))?);
    FeatureVector::new(Modality::Movement, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn stat10_one_to_five() {
        let s = stat10(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let expect = [3.0, 3.0, 5.0, 1.0, 2.0, 4.0, 2f64.sqrt(), 4.0, 0.0, -1.3];
        for (got, want) in s.iter().zip(expect) {
            assert!(close(*got, want), "{s:?}");
        }
    }

    #[test]
    fn stat10_degenerate() {
        assert_eq!(stat10(&[4.5; 7]).unwrap(), [4.5, 4.5, 4.5, 4.5, 4.5, 4.5, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(stat10(&[7.0]).unwrap(), [7.0, 7.0, 7.0, 7.0, 7.0, 7.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(stat10(&[]).is_err());
    }

    #[test]
    fn physio_percentiles() {
        let hr = TimeSeries::new(vec![0.0, 1.0, 2.0], vec![55.0, 60.0, 65.0]).unwrap();
        let f = physio_features(&hr).unwrap();
        assert_eq!(f.dim(), 10);
        assert!(close(f.values[4], 57.5));
        assert!(close(f.values[5], 62.5));

        let flat = TimeSeries::new(vec![0.0, 1.0], vec![60.0, 60.0]).unwrap();
        let f = physio_features(&flat).unwrap();
        assert_eq!((f.values[0], f.values[6]), (60.0, 0.0));
        assert!(physio_features(&TimeSeries::default()).is_err());
    }

    #[test]
    fn magnitude_examples() {
        assert_eq!(magnitude(&[[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]]), vec![5.0, 0.0]);
    }

    #[test]
    fn movement_dimension_and_missing_sensor() {
        let a = AxisSeries {
            t: vec![0.0, 0.02],
            xyz: vec![[0.0, 0.0, 9.81], [0.0, 0.1, 9.8]],
        };
        let f = movement_features(&a, &a).unwrap();
        assert_eq!(f.dim(), 20);
        assert!(movement_features(&a, &AxisSeries::default()).is_err());
    }
}
