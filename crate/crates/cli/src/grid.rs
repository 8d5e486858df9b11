use anyhow::{bail, Context, Result};

/// Parses `1,10,100` or an inclusive range `start:stop:step`.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    let parts: Vec<&str> = text.split(':').collect();
    let values = match parts.as_slice() {
        [start, stop, step] => {
            let (start, stop, step): (f64, f64, f64) = (
                start.trim().parse().with_context(|| format!("bad range start in {text:?}"))?,
                stop.trim().parse().with_context(|| format!("bad range stop in {text:?}"))?,
                step.trim().parse().with_context(|| format!("bad range step in {text:?}"))?,
            );
            if step.is_nan() || step <= 0.0 || stop < start {
                bail!("empty range {text:?}");
            }
            // Integer stepping avoids accumulating the step's rounding error.
            let n = ((stop - start) / step + 1e-9).floor() as usize;
            (0..=n).map(|k| start + k as f64 * step).collect()
        }
        [_] => text
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad number {v:?} in {text:?}"))
            })
            .collect::<Result<Vec<_>>>()?,
        _ => bail!("expected a comma list or start:stop:step, got {text:?}"),
    };
    if values.is_empty() || values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        bail!("grid values must be positive and finite: {text:?}");
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_and_range() {
        assert_eq!(parse_values("1, 10,100").unwrap(), vec![1.0, 10.0, 100.0]);
        let g = parse_values("0.05:10:0.05").unwrap();
        assert_eq!(g.len(), 200);
        assert!((g[199] - 10.0).abs() < 1e-12);
        assert!(parse_values("1:0:1").is_err());
        assert!(parse_values("0,1").is_err());
        assert!(parse_values("a").is_err());
    }
}
