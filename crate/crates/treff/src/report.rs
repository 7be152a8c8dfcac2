//! Tabular output of evaluation summaries.

use std::io::Write;

use treff_core::episodes::EvalSummary;

pub const CSV_HEADER: [&str; 6] = ["method", "n", "k", "episodes", "mean_acc", "std_err"];

/// Writes one CSV row per summary under a fixed header.
pub fn write_csv<W: Write>(out: W, summaries: &[EvalSummary]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for s in summaries {
        w.write_record([
            s.method.clone(),
            s.n_way.to_string(),
            s.k_shot.to_string(),
            s.episodes.to_string(),
            s.mean_accuracy.to_string(),
            s.std_error.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(summaries: &[EvalSummary]) -> String {
    let mut buf = Vec::new();
    write_csv(&mut buf, summaries).expect("writing to memory");
    String::from_utf8(buf).expect("csv output is UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;
    use treff_core::episodes::{EvalSetup, Method};

    #[test]
    fn header_and_rows() {
        let setup = EvalSetup::new(5, 2, 2, 0);
        let s = EvalSummary::from_accuracies(Method::Proto, &setup, vec![0.5, 1.0]);
        let text = to_csv_string(&[s]);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("method,n,k,episodes,mean_acc,std_err"));
        assert_eq!(lines.next(), Some("proto,5,2,2,0.75,0.25"));
        assert_eq!(lines.next(), None);
    }
}
