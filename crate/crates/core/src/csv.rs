use std::io::{self, Write};

/// 17 significant digits, empty for missing or non-finite values.
pub(crate) fn num(v: f64) -> String {
    if v.is_finite() {
        // -0 prints as 0
        format!("{:.16e}", v + 0.0)
    } else {
        String::new()
    }
}

pub(crate) fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub(crate) fn write_table<W: Write>(
    out: &mut W,
    header: &str,
    rows: impl IntoIterator<Item = Vec<String>>,
) -> io::Result<()> {
    writeln!(out, "{header}")?;
    for row in rows {
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
