use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "epsilon")]
pub enum Direction {
    Increasing,
    Decreasing,
    /// Spread (max minus min) at most `epsilon`.
    FlatWithin(f64),
}

/// Expected shape of a metric over an ordered knob.
///
/// Directional trends require every consecutive step to move weakly in the
/// direction and the endpoints to differ by at least `min_margin`; `strict`
/// additionally forbids flat steps. Seed noise at desk scale makes the
/// endpoint margin the load-bearing part.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendAssertion {
    pub direction: Direction,
    pub min_margin: f64,
    #[serde(default)]
    pub strict: bool,
}

impl TrendAssertion {
    pub fn increasing(min_margin: f64) -> Self {
        Self {
            direction: Direction::Increasing,
            min_margin,
            strict: false,
        }
    }

    pub fn decreasing(min_margin: f64) -> Self {
        Self {
            direction: Direction::Decreasing,
            min_margin,
            strict: false,
        }
    }

    pub fn flat_within(epsilon: f64) -> Self {
        Self {
            direction: Direction::FlatWithin(epsilon),
            min_margin: 0.0,
            strict: false,
        }
    }

    pub fn strict(self) -> Self {
        Self {
            strict: true,
            ..self
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendEvidence {
    pub pass: bool,
    /// Last minus first value.
    pub endpoint_delta: f64,
    /// Consecutive differences.
    pub steps: Vec<f64>,
    pub message: String,
}

fn fmt_series(series: &[f64]) -> String {
    let parts: Vec<String> = series.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Checks `series` (ordered by knob) against `assertion`. Series shorter than
/// two points or with missing (non-finite) values are rejected.
pub fn assert_trend(series: &[f64], assertion: &TrendAssertion) -> Result<TrendEvidence> {
    if series.len() < 2 {
        return Err(Error::invalid(format!(
            "a trend needs at least two points, got {}",
            series.len()
        )));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::invalid(format!(
            "series value {i} is missing or non-finite"
        )));
    }
    if !(assertion.min_margin >= 0.0) {
        return Err(Error::invalid("trend margin must be non-negative"));
    }
    let steps: Vec<f64> = series.windows(2).map(|w| w[1] - w[0]).collect();
    let endpoint_delta = series[series.len() - 1] - series[0];
    let shown = fmt_series(series);
    let (pass, message) = match assertion.direction {
        Direction::FlatWithin(eps) => {
            if !(eps >= 0.0) {
                return Err(Error::invalid("flat tolerance must be non-negative"));
            }
            let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = series.iter().copied().fold(f64::INFINITY, f64::min);
            let spread = max - min;
            (
                spread <= eps,
                format!("{shown}: spread {spread:.4} vs allowed {eps}"),
            )
        }
        dir => {
            let sign = if dir == Direction::Increasing {
                1.0
            } else {
                -1.0
            };
            let against = steps.iter().position(|s| {
                let s = sign * s;
                if assertion.strict {
                    s <= 0.0
                } else {
                    s < 0.0
                }
            });
            let margin = sign * endpoint_delta;
            let name = if sign > 0.0 {
                "increasing"
            } else {
                "decreasing"
            };
            match against {
                Some(i) => (
                    false,
                    format!(
                        "{shown}: step {i} -> {} is not {name} ({:+.4})",
                        i + 1,
                        steps[i]
                    ),
                ),
                None => (
                    margin >= assertion.min_margin,
                    format!(
                        "{shown}: {name}, endpoint margin {margin:.4} vs required {}",
                        assertion.min_margin
                    ),
                ),
            }
        }
    };
    Ok(TrendEvidence {
        pass,
        endpoint_delta,
        steps,
        message,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictness_rejects_flat_steps() {
        let s = [3.0, 2.0, 2.0, 0.0];
        assert!(
            assert_trend(&s, &TrendAssertion::decreasing(1.0))
                .unwrap()
                .pass
        );
        assert!(
            !assert_trend(&s, &TrendAssertion::decreasing(1.0).strict())
                .unwrap()
                .pass
        );
        assert!(
            !assert_trend(&s, &TrendAssertion::decreasing(3.5))
                .unwrap()
                .pass
        );
    }
}
