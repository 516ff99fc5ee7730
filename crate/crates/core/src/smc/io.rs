use std::io::{Read, Write};

use super::{outcome_index, DesignMatrix, SmcError, TargetDistribution};

fn csv_err(e: csv::Error) -> SmcError {
    SmcError::Invalid(format!("CSV: {e}"))
}

/// Observation CSV: header of formula names, then one row of 0/1 per observation.
pub fn read_observations(input: impl Read) -> Result<DesignMatrix, SmcError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
    let names: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut columns = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bits = rec
            .iter()
            .map(|v| match v {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(SmcError::Invalid(format!("observation row {}: `{other}` is not 0 or 1", i + 1))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        columns.push(bits);
    }
    DesignMatrix::new(names, columns)
}

pub fn write_observations(data: &DesignMatrix, out: impl Write) -> Result<(), SmcError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(data.names()).map_err(csv_err)?;
    for c in data.columns() {
        w.write_record(c.iter().map(|&b| if b { "1" } else { "0" })).map_err(csv_err)?;
    }
    w.flush().map_err(|e| SmcError::Invalid(e.to_string()))
}

/// Target CSV: `2^d` rows `bitstring,probability` with bit `i` the truth of
/// formula `i`, optionally preceded by a header. The sum must be within
/// `tol` of one.
pub fn read_target(input: impl Read, d: usize, tol: f64) -> Result<TargetDistribution, SmcError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(input);
    let mut probs = vec![0.0; 1 << d];
    let mut seen = vec![false; 1 << d];
    let mut rows = 0usize;
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        rows += 1;
        if rec.len() != 2 {
            return Err(SmcError::Invalid(format!("target row {rows}: expected `bitstring,probability`")));
        }
        let bits = &rec[0];
        // Optional header row.
        if rows == 1 && rec[1].parse::<f64>().is_err() {
            continue;
        }
        if bits.len() != d || !bits.chars().all(|c| c == '0' || c == '1') {
            return Err(SmcError::Invalid(format!(
                "target row {rows}: `{bits}` is not a bitstring of length {d} (one bit per formula)"
            )));
        }
        let j = outcome_index(&bits.chars().map(|c| c == '1').collect::<Vec<_>>());
        if seen[j] {
            return Err(SmcError::Invalid(format!("target row {rows}: outcome `{bits}` listed twice")));
        }
        seen[j] = true;
        probs[j] = rec[1]
            .parse()
            .map_err(|_| SmcError::Invalid(format!("target row {rows}: `{}` is not a probability", &rec[1])))?;
    }
    let listed = seen.iter().filter(|&&s| s).count();
    if listed != probs.len() {
        return Err(SmcError::Invalid(format!(
            "target lists {listed} outcomes, expected {} (2^{d})",
            probs.len()
        )));
    }
    TargetDistribution::with_tolerance(probs, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observations_round_trip() {
        let text = "p1,p2\n1,0\n0,0\n1,1\n";
        let d = read_observations(text.as_bytes()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.outcome_counts(), vec![1, 0, 1, 1]);
        let mut out = Vec::new();
        write_observations(&d, &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        assert!(read_observations("p1\n2\n".as_bytes()).is_err());
        assert!(read_observations("p1,p2\n1\n".as_bytes()).is_err());
    }

    #[test]
    fn target_parsing() {
        let t = read_target("outcome,probability\n00,0\n01,0.5\n10,0.5\n11,0\n".as_bytes(), 2, 1e-6).unwrap();
        assert_eq!(t.probs(), &[0.0, 0.5, 0.5, 0.0]);
        assert!(read_target("10,0.5\n01,0.5\n".as_bytes(), 2, 1e-6).is_err());
        assert!(read_target("00,0\n01,0.5\n10,0.4\n11,0\n".as_bytes(), 2, 1e-6).is_err());
        assert!(read_target("1,1.0\n".as_bytes(), 2, 1e-6).is_err());
        assert!(read_target("10,0.5\n10,0.5\n".as_bytes(), 2, 1e-6).is_err());
    }
}
