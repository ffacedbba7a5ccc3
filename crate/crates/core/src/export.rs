//! Trajectory CSV output.
//!
//! Columns: `t_min, phase, U, S, Z_total, Z_1..Z_n, r, P, F`. Numbers are
//! written with 9 significant digits in `%.9g` style, so output is
//! byte-for-byte reproducible.

use std::io::{self, Write};

use crate::integrator::Trajectory;

const SIGNIFICANT: i32 = 9;

/// Formats `x` like C's `%.9g`: fixed notation for moderate exponents,
/// scientific otherwise, trailing zeros removed.
pub fn format_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{:.*e}", (SIGNIFICANT - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..SIGNIFICANT).contains(&exp) {
        let decimals = (SIGNIFICANT - 1 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), sign, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Header row for a trajectory with `n` knowledge components.
pub fn header(n: usize) -> String {
    let mut cols = vec!["t_min".to_string(), "phase".into(), "U".into(), "S".into(), "Z_total".into()];
    cols.extend((1..=n).map(|i| format!("Z_{i}")));
    cols.extend(["r".into(), "P".into(), "F".into()]);
    cols.join(",")
}

pub fn write_trajectory_csv<W: Write>(trajectory: &Trajectory, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", header(trajectory.params.n()))?;
    for s in &trajectory.samples {
        let mut row = vec![
            format_sig(s.t),
            s.phase.to_string(),
            format_sig(s.u),
            format_sig(s.s),
            format_sig(s.z_total),
        ];
        row.extend(s.z.iter().map(|&z| format_sig(z)));
        row.extend([format_sig(s.r), format_sig(s.p), format_sig(s.f)]);
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn trajectory_csv(trajectory: &Trajectory) -> String {
    let mut buf = Vec::new();
    write_trajectory_csv(trajectory, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::simulate_timeline;
    use crate::scenario::builtin_scenario;

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(0.0), "0");
        assert_eq!(format_sig(1.0), "1");
        assert_eq!(format_sig(0.1), "0.1");
        assert_eq!(format_sig(6.334752877547574), "6.33475288");
        assert_eq!(format_sig(-2.5), "-2.5");
        assert_eq!(format_sig(123456789.0), "123456789");
        assert_eq!(format_sig(1234567890.0), "1.23456789e+09");
        assert_eq!(format_sig(0.0001234), "0.0001234");
        assert_eq!(format_sig(0.00001234), "1.234e-05");
        assert_eq!(format_sig(0.99999999999), "1");
        assert_eq!(format_sig(f64::INFINITY), "inf");
    }

    #[test]
    fn header_columns() {
        assert_eq!(header(2), "t_min,phase,U,S,Z_total,Z_1,Z_2,r,P,F");
    }

    #[test]
    fn csv_rows_match_samples() {
        let traj = simulate_timeline(&builtin_scenario("fig4").unwrap()).unwrap();
        let text = trajectory_csv(&traj);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), traj.samples.len() + 1);
        assert!(lines[1].starts_with("0,lesson,10,0.2,0,0,0,0,0,1,0,10"));
        assert!(lines.iter().skip(1).all(|l| l.split(',').count() == 12));
    }
}
