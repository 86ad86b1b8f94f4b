use std::io::Read;

use super::{SysidError, MIN_SAMPLES};
use crate::dynamics::Signal;

/// Paired input/output record on one time base.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentDataset {
    pub u: Signal,
    pub y: Signal,
    pub input_name: String,
    pub output_name: String,
}

impl IdentDataset {
    pub fn new(u: Signal, y: Signal) -> Result<Self, SysidError> {
        Self::named(u, y, "u", "y")
    }

    pub fn named(u: Signal, y: Signal, input: &str, output: &str) -> Result<Self, SysidError> {
        if !u.same_timebase(&y) {
            return Err(SysidError::Timebase);
        }
        if u.len() < MIN_SAMPLES {
            return Err(SysidError::TooShort { len: u.len() });
        }
        Ok(IdentDataset {
            u,
            y,
            input_name: input.into(),
            output_name: output.into(),
        })
    }

    /// Reads a CSV with a header naming a `t` column and the two channels.
    /// Header names may carry a `[units]` suffix, which is ignored.
    pub fn from_csv<R: Read>(reader: R, input: &str, output: &str) -> Result<Self, SysidError> {
        let data = |m: String| SysidError::Data(m);
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| data(e.to_string()))?.clone();
        let bare = |h: &str| h.split('[').next().unwrap_or(h).trim().to_string();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name || bare(h) == name)
                .ok_or_else(|| data(format!("no column named {name:?}")))
        };
        let (it, iu, iy) = (col("t")?, col(input)?, col(output)?);
        let mut tu = Vec::new();
        let mut ty = Vec::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| data(e.to_string()))?;
            let num = |i: usize| -> Result<f64, SysidError> {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| data(format!("row {}: column {} is not a number", n + 2, i + 1)))
            };
            let t = num(it)?;
            tu.push((t, num(iu)?));
            ty.push((t, num(iy)?));
        }
        let u = Signal::from_samples(&tu)?;
        let y = Signal::from_samples(&ty)?;
        Self::named(u, y, input, output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_named_columns() {
        let mut text = String::from("t[s],fuel[%],extra,n_hpt[rpm]\n");
        for k in 0..12 {
            text.push_str(&format!("{},{},0,{}\n", k as f64 * 0.5, k, 2 * k));
        }
        let ds = IdentDataset::from_csv(text.as_bytes(), "fuel", "n_hpt").unwrap();
        assert_eq!(ds.u.len(), 12);
        assert_eq!(ds.y.values()[3], 6.0);
        assert_eq!(ds.u.dt(), 0.5);
        assert!(IdentDataset::from_csv(text.as_bytes(), "fuel", "nope").is_err());
    }

    #[test]
    fn rejects_nonuniform_time() {
        let mut text = String::from("t,u,y\n");
        for k in 0..12 {
            let t = if k == 5 { 5.3 } else { k as f64 };
            text.push_str(&format!("{t},1,1\n"));
        }
        assert!(IdentDataset::from_csv(text.as_bytes(), "u", "y").is_err());
    }
}
