use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantify::QuantMetrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricError {
    pub metric: String,
    pub relative: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub errors: Vec<MetricError>,
    pub max: f64,
    pub mean: f64,
}

impl ErrorReport {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.errors.iter().find(|e| e.metric == metric).map(|e| e.relative)
    }
}

fn relative(recovered: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        recovered.abs()
    } else {
        (recovered - truth).abs() / truth.abs()
    }
}

/// Relative error of every metric populated in `truth`. The depth class
/// counts 0 when it matches and 1 otherwise. A metric present on only one
/// side is a contract error.
pub fn evaluate(recovered: &QuantMetrics, truth: &QuantMetrics) -> Result<ErrorReport> {
    let mut errors = Vec::new();
    let numeric = [
        ("area_m2", recovered.area_m2, truth.area_m2),
        ("length_m", recovered.length_m, truth.length_m),
        (
            "crack_density_pct",
            recovered.crack_density_pct,
            truth.crack_density_pct,
        ),
    ];
    for (name, r, t) in numeric {
        match (r, t) {
            (Some(r), Some(t)) => errors.push(MetricError {
                metric: name.into(),
                relative: relative(r, t),
            }),
            (None, None) => {}
            _ => return Err(Error::Contract(format!("`{name}` populated on one side only"))),
        }
    }
    match (recovered.depth_class, truth.depth_class) {
        (Some(r), Some(t)) => errors.push(MetricError {
            metric: "depth_class".into(),
            relative: if r == t { 0.0 } else { 1.0 },
        }),
        (None, None) => {}
        _ => return Err(Error::Contract("`depth_class` populated on one side only".into())),
    }
    let max = errors.iter().map(|e| e.relative).fold(0.0, f64::max);
    let mean = if errors.is_empty() {
        0.0
    } else {
        errors.iter().map(|e| e.relative).sum::<f64>() / errors.len() as f64
    };
    Ok(ErrorReport { errors, max, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantify::DepthClass;

    fn area(a: f64) -> QuantMetrics {
        QuantMetrics {
            area_m2: Some(a),
            ..Default::default()
        }
    }

    #[test]
    fn examples() {
        let t = QuantMetrics {
            area_m2: Some(0.25),
            depth_class: Some(DepthClass::Deep),
            ..Default::default()
        };
        let r = evaluate(&t, &t).unwrap();
        assert_eq!((r.max, r.mean), (0.0, 0.0));
        assert!((evaluate(&area(0.26), &area(0.25)).unwrap().max - 0.04).abs() < 1e-12);
        assert_eq!(evaluate(&area(0.0), &area(0.25)).unwrap().get("area_m2"), Some(1.0));
        assert!(matches!(
            evaluate(&QuantMetrics::default(), &area(1.0)),
            Err(Error::Contract(_))
        ));
    }
}
