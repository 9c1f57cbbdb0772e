use exmex::prelude::*;
use exmex::Differentiate;

use crate::error::CliError;

/// A scalar expression in the single variable `x`, such as `0.5*x^2` or
/// `-cos(x)`, together with its first derivative.
pub struct Expression {
    text: String,
    value: FlatEx<f64>,
    slope: FlatEx<f64>,
}

impl Expression {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let bad = |e: exmex::ExError| CliError::Config(format!("expression `{text}`: {e}"));
        let value = exmex::parse::<f64>(text).map_err(bad)?;
        match value.var_names() {
            [] => {}
            [x] if x == "x" => {}
            other => {
                return Err(CliError::Config(format!("expression `{text}` may only use the variable x, found {other:?}")));
            }
        }
        let slope = if value.var_names().is_empty() {
            exmex::parse::<f64>("0").map_err(bad)?
        } else {
            value.clone().partial(0).map_err(bad)?
        };
        Ok(Expression { text: text.to_string(), value, slope })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    fn call(&self, f: &FlatEx<f64>, x: f64) -> Result<f64, CliError> {
        let args: &[f64] = if f.var_names().is_empty() { &[] } else { &[x] };
        let y = f.eval(args).map_err(|e| CliError::Config(format!("expression `{}` at x = {x}: {e}", self.text)))?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(CliError::Config(format!("expression `{}` is not finite at x = {x}", self.text)))
        }
    }

    pub fn value(&self, x: f64) -> Result<f64, CliError> {
        self.call(&self.value, x)
    }

    pub fn derivative(&self, x: f64) -> Result<f64, CliError> {
        self.call(&self.slope, x)
    }

    pub fn sample(&self, nodes: &[f64]) -> Result<Vec<f64>, CliError> {
        nodes.iter().map(|&x| self.value(x)).collect()
    }

    pub fn sample_derivative(&self, nodes: &[f64]) -> Result<Vec<f64>, CliError> {
        nodes.iter().map(|&x| self.derivative(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_and_trig() {
        let e = Expression::parse("0.5*x^2 - cos(x)").unwrap();
        assert!((e.value(2.0).unwrap() - (2.0 - 2f64.cos())).abs() < 1e-14);
        assert!((e.derivative(2.0).unwrap() - (2.0 + 2f64.sin())).abs() < 1e-14);
    }

    #[test]
    fn constants_have_zero_slope() {
        let e = Expression::parse("3").unwrap();
        assert_eq!(e.value(1.0).unwrap(), 3.0);
        assert_eq!(e.derivative(1.0).unwrap(), 0.0);
    }

    #[test]
    fn foreign_variables_are_rejected() {
        assert!(matches!(Expression::parse("x*y"), Err(CliError::Config(_))));
        assert!(Expression::parse("x +* 2").is_err());
        assert!(Expression::parse("log(x)").unwrap().value(-1.0).is_err());
    }
}
