//! Plain-text LP dump used to reproduce solver faults.
//!
//! ```text
//! deferlab-lp 1
//! vars <v> rows <m>
//! cost <c_0> ... <c_{v-1}>
//! bounds <j> <lo> <hi>        one line per variable, `inf`/`-inf` allowed
//! row <le|ge|eq> <rhs> <j>:<a> <j>:<a> ...   nonzero coefficients only
//! ```
//!
//! Reals are written with `{:?}` so a dump reloads bit-exactly.

use std::io::{BufRead, Write};

use super::{LinearProgram, Sense};
use crate::error::{Error, Result};

const MAGIC: &str = "deferlab-lp 1";

pub fn write_lp<W: Write>(lp: &LinearProgram, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "vars {} rows {}", lp.num_vars(), lp.num_rows())?;
    let costs: Vec<String> = lp.objective().iter().map(fmt_real).collect();
    writeln!(w, "cost {}", costs.join(" "))?;
    for j in 0..lp.num_vars() {
        writeln!(
            w,
            "bounds {j} {} {}",
            fmt_real(&lp.lower()[j]),
            fmt_real(&lp.upper()[j])
        )?;
    }
    for i in 0..lp.num_rows() {
        let sense = match lp.sense(i) {
            Sense::Le => "le",
            Sense::Ge => "ge",
            Sense::Eq => "eq",
        };
        let terms: Vec<String> = lp
            .row(i)
            .iter()
            .enumerate()
            .filter(|(_, a)| **a != 0.0)
            .map(|(j, a)| format!("{j}:{}", fmt_real(a)))
            .collect();
        writeln!(
            w,
            "row {sense} {} {}",
            fmt_real(&lp.rhs(i)),
            terms.join(" ")
        )?;
    }
    Ok(())
}

fn fmt_real(v: &f64) -> String {
    if v.is_infinite() {
        if *v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:?}")
    }
}

pub fn read_lp<R: BufRead>(reader: R) -> Result<LinearProgram> {
    let mut lines = reader.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = || -> Result<(usize, String)> {
        match lines.next() {
            Some((n, l)) => Ok((n, l?)),
            None => Err(Error::Parse {
                line: 0,
                msg: "unexpected end of LP dump".into(),
            }),
        }
    };
    let (n, magic) = next()?;
    if magic.trim() != MAGIC {
        return Err(perr(n, "missing deferlab-lp header"));
    }
    let (n, dims) = next()?;
    let dims: Vec<&str> = dims.split_whitespace().collect();
    if dims.len() != 4 || dims[0] != "vars" || dims[2] != "rows" {
        return Err(perr(n, "expected `vars <v> rows <m>`"));
    }
    let v: usize = dims[1].parse().map_err(|_| perr(n, "bad var count"))?;
    let m: usize = dims[3].parse().map_err(|_| perr(n, "bad row count"))?;

    let (n, cost) = next()?;
    let mut parts = cost.split_whitespace();
    if parts.next() != Some("cost") {
        return Err(perr(n, "expected cost line"));
    }
    let costs = parts
        .map(|t| parse_real(t, n))
        .collect::<Result<Vec<_>>>()?;
    if costs.len() != v {
        return Err(perr(n, "cost count does not match vars"));
    }
    let mut lp = LinearProgram::new();
    for (j, c) in costs.into_iter().enumerate() {
        let (n, line) = next()?;
        let t: Vec<&str> = line.split_whitespace().collect();
        if t.len() != 4 || t[0] != "bounds" || t[1] != j.to_string() {
            return Err(perr(n, "expected `bounds <j> <lo> <hi>`"));
        }
        let lo = parse_real(t[2], n)?;
        let hi = parse_real(t[3], n)?;
        if lo > hi {
            return Err(perr(n, "lower bound exceeds upper bound"));
        }
        lp.add_var(lo, hi, c);
    }
    for _ in 0..m {
        let (n, line) = next()?;
        let mut t = line.split_whitespace();
        if t.next() != Some("row") {
            return Err(perr(n, "expected row line"));
        }
        let sense = match t.next() {
            Some("le") => Sense::Le,
            Some("ge") => Sense::Ge,
            Some("eq") => Sense::Eq,
            _ => return Err(perr(n, "row sense must be le, ge or eq")),
        };
        let rhs = parse_real(t.next().ok_or_else(|| perr(n, "missing rhs"))?, n)?;
        let mut coeffs = Vec::new();
        for term in t {
            let (j, a) = term
                .split_once(':')
                .ok_or_else(|| perr(n, "terms look like j:a"))?;
            let j: usize = j.parse().map_err(|_| perr(n, "bad variable index"))?;
            coeffs.push((j, parse_real(a, n)?));
        }
        lp.add_row(&coeffs, sense, rhs)
            .map_err(|e| perr(n, &e.to_string()))?;
    }
    Ok(lp)
}

fn parse_real(t: &str, line: usize) -> Result<f64> {
    match t {
        "inf" => Ok(f64::INFINITY),
        "-inf" => Ok(f64::NEG_INFINITY),
        _ => t
            .parse()
            .map_err(|_| perr(line, &format!("not a number: {t:?}"))),
    }
}

fn perr(line: usize, msg: &str) -> Error {
    Error::Parse {
        line,
        msg: msg.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_reloads_exactly() {
        let mut lp = LinearProgram::new();
        let x = lp.add_var(0.0, f64::INFINITY, -0.1);
        let y = lp.add_var(f64::NEG_INFINITY, 2.5, 1.0 / 3.0);
        lp.add_row(&[(x, 1.0), (y, -2.0)], Sense::Le, 4.0).unwrap();
        lp.add_row(&[(y, 1e-7)], Sense::Eq, 0.0).unwrap();
        let mut buf = Vec::new();
        write_lp(&lp, &mut buf).unwrap();
        let back = read_lp(buf.as_slice()).unwrap();
        assert_eq!(back, lp);
    }

    #[test]
    fn malformed_dump_reports_line() {
        let text = "deferlab-lp 1\nvars 1 rows 1\ncost 1\nbounds 0 0 1\nrow lt 1 0:1\n";
        let err = read_lp(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 5, .. }), "{err}");
    }
}
