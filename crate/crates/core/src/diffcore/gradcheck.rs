use std::collections::BTreeMap;

use super::{DenseArray, ParamStore};
use crate::error::{Error, Result};

/// Step used for central differences.
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic − numeric| / max(1, |numeric|)` over all coordinates.
    pub max_rel_error: f64,
    /// Parameter and flat index where that error occurred.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares the analytic gradient returned by `f` against central finite
/// differences at `point`, coordinate by coordinate.
///
/// `f` returns the scalar value and the analytic gradient per parameter;
/// parameters missing from the gradient map are taken to have zero gradient.
pub fn grad_check<F>(point: &ParamStore, f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore) -> Result<(f64, BTreeMap<String, DenseArray>)>,
{
    let (_, analytic) = f(point)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, worst: None, coordinates: 0 };
    let mut probe = point.clone();
    for (name, value) in point.iter() {
        let base = value.clone();
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus.data_mut()[i] += FD_STEP;
            probe.set(name, plus)?;
            let (fp, _) = f(&probe)?;
            let mut minus = base.clone();
            minus.data_mut()[i] -= FD_STEP;
            probe.set(name, minus)?;
            let (fm, _) = f(&probe)?;
            probe.set(name, base.clone())?;

            let numeric = (fp - fm) / (2.0 * FD_STEP);
            let a = analytic.get(name).map_or(0.0, |g| g.data()[i]);
            if !numeric.is_finite() || !a.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at {name}[{i}]")));
            }
            let err = (a - numeric).abs() / numeric.abs().max(1.0);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;

    #[test]
    fn sum_of_params_has_unit_gradient() {
        let mut p = ParamStore::new(0);
        p.insert("a", DenseArray::vector(vec![0.3, -1.2, 4.0]).unwrap()).unwrap();
        p.insert("b", DenseArray::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap()).unwrap();
        let report = grad_check(&p, |p| {
            let mut tape = Tape::new();
            let a = tape.param(p, "a")?;
            let b = tape.param(p, "b")?;
            let (sa, sb) = (tape.sum(a), tape.sum(b));
            let total = tape.add(sa, sb)?;
            let g = tape.backward(total)?;
            for (_, grad) in g.params() {
                assert!(grad.data().iter().all(|&v| v == 1.0));
            }
            Ok((tape.value(total).data()[0], g.into_params()))
        })
        .unwrap();
        assert!(report.max_rel_error < 1e-9);
        assert_eq!(report.coordinates, 7);
    }
}
