//! Capacity series, sliding-window samples and leave-one-battery-out splits.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Matrix;

/// One battery's capacity (Ah) per cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitySeries {
    battery_id: String,
    cycles: Vec<u32>,
    capacities: Vec<f64>,
}

impl CapacitySeries {
    pub fn new(battery_id: impl Into<String>, cycles: Vec<u32>, capacities: Vec<f64>) -> Result<Self> {
        let battery_id = battery_id.into();
        let invalid = |reason: String| Error::InvalidSeries { id: battery_id.clone(), reason };
        if cycles.len() != capacities.len() {
            return Err(invalid(format!("{} cycles but {} capacities", cycles.len(), capacities.len())));
        }
        if let Some(i) = cycles.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "cycle {} follows {} (cycles must strictly increase)",
                cycles[i + 1],
                cycles[i]
            )));
        }
        if cycles.first() == Some(&0) {
            return Err(invalid("cycle numbers must be positive".into()));
        }
        if let Some(c) = capacities.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            return Err(invalid(format!("capacity {c} is not a positive finite number")));
        }
        Ok(CapacitySeries { battery_id, cycles, capacities })
    }

    pub fn battery_id(&self) -> &str {
        &self.battery_id
    }

    pub fn cycles(&self) -> &[u32] {
        &self.cycles
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn len(&self) -> usize {
        self.cycles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cycles.is_empty()
    }
}

/// `w` consecutive capacities and the capacity of the following cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub battery_id: String,
    pub window: Vec<f64>,
    pub target: f64,
    pub target_cycle: u32,
}

/// All `len - w` full windows of a series in chronological order.
pub fn build_windows(series: &CapacitySeries, w: usize) -> Result<Vec<WindowSample>> {
    if w == 0 || series.len() <= w {
        return Err(Error::InsufficientData {
            id: series.battery_id.clone(),
            len: series.len(),
            window: w,
        });
    }
    Ok((w..series.len())
        .map(|t| WindowSample {
            battery_id: series.battery_id.clone(),
            window: series.capacities[t - w..t].to_vec(),
            target: series.capacities[t],
            target_cycle: series.cycles[t],
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_battery_id: String,
    pub train_battery_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub spec: SplitSpec,
    pub train: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

/// Holds out `test_id`; training windows come from every other series.
pub fn loocv_split(series: &[CapacitySeries], test_id: &str, w: usize) -> Result<Split> {
    let Some(test_series) = series.iter().find(|s| s.battery_id == test_id) else {
        let known: Vec<&str> = series.iter().map(|s| s.battery_id.as_str()).collect();
        return Err(Error::UnknownBattery {
            id: test_id.into(),
            known: known.join(", "),
        });
    };
    if series.len() < 2 {
        return Err(Error::Config("leave-one-out needs at least two batteries".into()));
    }
    let mut train = Vec::new();
    let mut train_ids = Vec::new();
    for s in series.iter().filter(|s| s.battery_id != test_id) {
        train.extend(build_windows(s, w)?);
        train_ids.push(s.battery_id.clone());
    }
    Ok(Split {
        spec: SplitSpec {
            test_battery_id: test_id.into(),
            train_battery_ids: train_ids,
        },
        train,
        test: build_windows(test_series, w)?,
    })
}

/// Stacks windows into a `B×w` matrix and collects their targets.
pub fn to_batch<'a>(samples: impl IntoIterator<Item = &'a WindowSample>) -> Result<(Matrix, Vec<f64>)> {
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut targets = Vec::new();
    for s in samples {
        rows.push(&s.window);
        targets.push(s.target);
    }
    Ok((Matrix::from_rows(&rows)?, targets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(id: &str, values: &[f64]) -> CapacitySeries {
        CapacitySeries::new(id, (1..=values.len() as u32).collect(), values.to_vec()).unwrap()
    }

    #[test]
    fn windows_of_five_with_three() {
        let s = series("B1", &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let w = build_windows(&s, 3).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].window, [1.0, 2.0, 3.0]);
        assert_eq!(w[0].target, 4.0);
        assert_eq!(w[0].target_cycle, 4);
        assert_eq!(w[1].window, [2.0, 3.0, 4.0]);
        assert_eq!(w[1].target, 5.0);
    }

    #[test]
    fn window_equal_to_length_is_insufficient() {
        let s = series("B1", &[1.0, 2.0, 3.0]);
        let err = build_windows(&s, 3).unwrap_err();
        assert_eq!(err, Error::InsufficientData { id: "B1".into(), len: 3, window: 3 });
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains('3') && msg.contains('4'));
    }

    #[test]
    fn series_validation() {
        assert!(CapacitySeries::new("x", vec![1, 1], vec![1.0, 1.0]).is_err());
        assert!(CapacitySeries::new("x", vec![2, 1], vec![1.0, 1.0]).is_err());
        assert!(CapacitySeries::new("x", vec![1, 2], vec![1.0, 0.0]).is_err());
        assert!(CapacitySeries::new("x", vec![1], vec![1.0, 2.0]).is_err());
        assert!(CapacitySeries::new("x", vec![0, 1], vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn split_counts_and_ids() {
        let ids = ["B0005", "B0006", "B0007", "B0018"];
        let all: Vec<_> = ids
            .iter()
            .enumerate()
            .map(|(i, id)| series(id, &vec![1.5; 10 + i]))
            .collect();
        let split = loocv_split(&all, "B0005", 4).unwrap();
        assert_eq!(split.spec.train_battery_ids, ["B0006", "B0007", "B0018"]);
        assert_eq!(split.test.len(), 6);
        assert_eq!(split.train.len(), 7 + 8 + 9);
        assert!(split.train.iter().all(|s| s.battery_id != "B0005"));

        let two = [series("a", &[1.0; 9]), series("b", &[1.0; 12])];
        let split = loocv_split(&two, "b", 5).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (4, 7));
    }

    #[test]
    fn unknown_id_lists_known_ones() {
        let all = [series("B0005", &[1.0; 5]), series("B0006", &[1.0; 5])];
        match loocv_split(&all, "B9999", 2).unwrap_err() {
            Error::UnknownBattery { id, known } => {
                assert_eq!(id, "B9999");
                assert_eq!(known, "B0005, B0006");
            }
            other => panic!("{other:?}"),
        }
    }
}
