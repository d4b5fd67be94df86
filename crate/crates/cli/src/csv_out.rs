//! CSV rendering of metric rows, plus a parser for round-trip checks.
//!
//! Floats are printed with 17 significant digits so parsing a CSV
//! reproduces every f64 bit-for-bit; absent optional metrics appear as
//! empty fields.

use docom_core::MetricsRecord;

pub const HEADER: &str = "iter,floats_values_only,floats_with_indices,worst_loss,mean_loss,\
consensus_gap,grad_norm_sq,optimality_gap,train_accuracy,wallclock_ms";

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::with_capacity(64 + records.len() * 200);
    out.push_str(HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.iter,
            r.floats_values_only,
            r.floats_with_indices,
            fmt_f64(r.worst_loss),
            fmt_f64(r.mean_loss),
            fmt_f64(r.consensus_gap),
            fmt_f64(r.grad_norm_sq),
            fmt_opt(r.optimality_gap),
            fmt_opt(r.train_accuracy),
            fmt_opt(r.wallclock_ms),
        ));
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<MetricsRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty CSV")?;
    if header != HEADER {
        return Err(format!("unexpected header `{header}`"));
    }
    let mut out = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 10 {
            return Err(format!("row {}: {} fields, expected 10", idx + 2, fields.len()));
        }
        let int = |s: &str| s.parse::<u64>().map_err(|e| format!("row {}: {e}", idx + 2));
        let num = |s: &str| s.parse::<f64>().map_err(|e| format!("row {}: {e}", idx + 2));
        let opt = |s: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        };
        out.push(MetricsRecord {
            iter: int(fields[0])?,
            floats_values_only: int(fields[1])?,
            floats_with_indices: int(fields[2])?,
            worst_loss: num(fields[3])?,
            mean_loss: num(fields[4])?,
            consensus_gap: num(fields[5])?,
            grad_norm_sq: num(fields[6])?,
            optimality_gap: opt(fields[7])?,
            train_accuracy: opt(fields[8])?,
            wallclock_ms: opt(fields[9])?,
        });
    }
    Ok(out)
}
