//! Potential names accepted on the command line.
//!
//! - `gaussian`, `gaussian:a` for `a x²/2`
//! - `double-well` for `(x² - 1)²`
//! - `x2/2+<A>cos`, `quadratic-cosine:A` for `x²/2 + A cos x`
//! - `x2/2+x<p>`, `x2/2+<b>x<p>` for `x²/2 + b|x|^p`
//! - `quadratic-plus-power:a,b,p` for `a x²/2 + b|x|^p`

use mlsilab_core::{make_double_well, PotentialSpec};

use crate::CliError;

fn number(text: &str, name: &str) -> Result<f64, CliError> {
    text.trim().parse::<f64>().map_err(|_| CliError::Config(format!("potential `{name}`: cannot parse `{text}` as a number")))
}

fn build(name: &str) -> Result<PotentialSpec, CliError> {
    let bad = |e: mlsilab_core::Error| CliError::Config(format!("potential `{name}`: {e}"));
    let unknown = || {
        CliError::Config(format!(
            "unknown potential `{name}` (expected gaussian[:a], double-well, x2/2+<A>cos, x2/2+[b]x<p>, quadratic-cosine:A or quadratic-plus-power:a,b,p)"
        ))
    };
    let name = name.trim();
    match name {
        "gaussian" => return Ok(PotentialSpec::gaussian()),
        "double-well" => return Ok(make_double_well()),
        _ => {}
    }
    if let Some(a) = name.strip_prefix("gaussian:") {
        return PotentialSpec::gaussian_with(number(a, name)?).map_err(bad);
    }
    if let Some(a) = name.strip_prefix("quadratic-cosine:") {
        return PotentialSpec::quadratic_cosine(number(a, name)?).map_err(bad);
    }
    if let Some(rest) = name.strip_prefix("quadratic-plus-power:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(CliError::Config(format!("potential `{name}`: expected three parameters a,b,p")));
        }
        return PotentialSpec::quadratic_plus_power(number(parts[0], name)?, number(parts[1], name)?, number(parts[2], name)?)
            .map_err(bad);
    }
    if let Some(rest) = name.strip_prefix("x2/2+") {
        if let Some(a) = rest.strip_suffix("cos") {
            let a = if a.is_empty() { 1.0 } else { number(a, name)? };
            return PotentialSpec::quadratic_cosine(a).map_err(bad);
        }
        if let Some((b, p)) = rest.split_once('x') {
            let b = if b.is_empty() { 1.0 } else { number(b, name)? };
            return PotentialSpec::quadratic_plus_power(1.0, b, number(p, name)?).map_err(bad);
        }
    }
    Err(unknown())
}

/// Parse `name`, optionally widening its truncation window.
pub fn parse_potential(name: &str, halfwidth: Option<f64>) -> Result<PotentialSpec, CliError> {
    let spec = build(name)?;
    match halfwidth {
        Some(h) => spec.with_halfwidth(h).map_err(|e| CliError::Config(format!("potential `{name}`: {e}"))),
        None => Ok(spec),
    }
}
