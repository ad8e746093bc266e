//! Text form of a scalar TLS problem: an optional `cbar2 <value>` line
//! (default 1) followed by one `value variance` pair per line.

use std::path::Path;

use rio_core::registration::ScalarTlsProblem;
use rio_core::Error;

pub fn parse(text: &str, origin: &Path) -> Result<ScalarTlsProblem, Error> {
    let mut cbar2 = None;
    let (mut values, mut variances) = (Vec::new(), Vec::new());
    let mut offset = 0u64;
    for raw in text.split_inclusive('\n') {
        let here = offset;
        offset += raw.len() as u64;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: String| Error::format(origin, here, msg);
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}")));
        match fields.as_slice() {
            ["cbar2", v] => {
                if cbar2.replace(num(v)?).is_some() {
                    return Err(bad("duplicate cbar2".into()));
                }
            }
            [x, var] => {
                values.push(num(x)?);
                variances.push(num(var)?);
            }
            _ => return Err(bad(format!("expected `value variance`, got {line:?}"))),
        }
    }
    ScalarTlsProblem::new(values, variances, cbar2.unwrap_or(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_pairs_and_bound() {
        let p = parse("# demo\ncbar2 0.5\n1.0 0.01\n1.1 0.01 # close\n", Path::new("p")).unwrap();
        assert_eq!(p.values, vec![1.0, 1.1]);
        assert_eq!(p.cbar2, 0.5);
    }

    #[test]
    fn reports_offsets() {
        let err = parse("1 1\n2\n", Path::new("p")).unwrap_err().to_string();
        assert!(err.contains("offset 4"), "{err}");
        assert!(parse("", Path::new("p")).is_err());
    }
}
