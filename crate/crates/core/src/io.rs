//! CSV helpers shared by the solver outputs.

use std::io::Write;

use crate::error::Result;
use crate::fvm::DensityField;

/// Formats with 17 significant digits, enough for an exact `f64` round trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes `(t, x_center, value)` rows for each snapshot.
pub fn write_field_csv<'a, W, I>(writer: W, snapshots: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a DensityField>,
{
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["t", "x_center", "value"])?;
    for field in snapshots {
        let t = fmt_f64(field.time());
        for (j, v) in field.averages().iter().enumerate() {
            w.write_record([t.as_str(), &fmt_f64(field.grid().center(j)), &fmt_f64(*v)])?;
        }
    }
    w.flush()?;
    Ok(())
}
