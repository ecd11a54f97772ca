use crate::error::{CliError, Result};

/// Inclusive arithmetic grid from `"start:stop:step"`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Config(format!("grid `{text}` is not of the form start:stop:step")));
    }
    let mut v = [0.0; 3];
    for (x, p) in v.iter_mut().zip(&parts) {
        *x = p
            .trim()
            .parse()
            .ok()
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| CliError::Config(format!("grid `{text}`: bad number `{p}`")))?;
    }
    let [a, b, h] = v;
    if !(a < b) {
        return Err(CliError::Config(format!("grid `{text}`: start must be below stop")));
    }
    if !(h > 0.0) {
        return Err(CliError::Config(format!("grid `{text}`: step must be positive")));
    }
    let count = ((b - a) / h * (1.0 + 1e-12)).floor() as usize;
    if count > 10_000_000 {
        return Err(CliError::Config(format!("grid `{text}` has too many points")));
    }
    Ok((0..=count).map(|k| a + k as f64 * h).collect())
}

/// Comma-separated positive integers.
pub fn parse_list(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|p| {
            p.trim()
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .ok_or_else(|| CliError::Config(format!("list `{text}`: bad entry `{p}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inclusive_grids() {
        assert_eq!(parse_grid("0:1:0.5").unwrap(), vec![0.0, 0.5, 1.0]);
        let g = parse_grid("0.2:3.0:0.1").unwrap();
        assert_eq!(g.len(), 29);
        assert!((g[28] - 3.0).abs() < 1e-12);
        assert!(parse_grid("1:1:0.1").is_err());
        assert!(parse_grid("0:1:-1").is_err());
        assert!(parse_grid("0:x:1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert_eq!(parse_list("10,20, 40").unwrap(), vec![10, 20, 40]);
        assert!(parse_list("10,0").is_err());
    }
}
