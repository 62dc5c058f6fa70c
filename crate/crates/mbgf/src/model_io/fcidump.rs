use std::fmt::Write as _;

use super::{IntegralSet, SpatialIntegrals};
use crate::error::{Error, Result};

/// Key/value content of the `&FCI ... /` namelist.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FcidumpHeader {
    pub norb: usize,
    pub nelec: usize,
    pub ms2: i64,
    pub orbsym: Vec<i64>,
    pub isym: i64,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_float(tok: &str, line: usize) -> Result<f64> {
    let t = tok.replace(['D', 'd'], "e");
    t.parse::<f64>()
        .map_err(|_| parse_err(line, format!("non-numeric value `{tok}`")))
}

fn parse_int(tok: &str, line: usize) -> Result<i64> {
    tok.trim()
        .parse::<i64>()
        .map_err(|_| parse_err(line, format!("expected an integer, found `{tok}`")))
}

/// Reads the header namelist. Returns the header and the index of the first body line.
fn parse_header(lines: &[&str]) -> Result<(FcidumpHeader, usize)> {
    let first = lines
        .iter()
        .position(|l| !l.trim().is_empty())
        .ok_or_else(|| parse_err(1, "empty input"))?;
    let head = lines[first].trim_start();
    if !head.to_ascii_uppercase().starts_with("&FCI") {
        return Err(parse_err(first + 1, "header must start with &FCI"));
    }

    // Gather (line number, text) fragments up to the terminator.
    let mut fragments: Vec<(usize, String)> = Vec::new();
    let mut body_start = None;
    for (n, raw) in lines.iter().enumerate().skip(first) {
        let mut text = raw.to_string();
        if n == first {
            text = text.trim_start()[4..].to_string();
        }
        let upper = text.to_ascii_uppercase();
        let end = upper.find("&END").map(|p| (p, 4)).or_else(|| upper.find('/').map(|p| (p, 1)));
        if let Some((pos, _)) = end {
            fragments.push((n + 1, text[..pos].to_string()));
            body_start = Some(n + 1);
            break;
        }
        fragments.push((n + 1, text));
    }
    let body_start = body_start.ok_or_else(|| {
        parse_err(lines.len(), "header is not terminated by `/` or `&END`")
    })?;

    let mut norb = None;
    let mut nelec = None;
    let mut ms2 = 0;
    let mut orbsym = Vec::new();
    let mut isym = 1;
    let mut current: Option<String> = None;
    for (line, text) in fragments {
        for item in text.split(',') {
            let item = item.trim();
            if item.is_empty() {
                continue;
            }
            let (key, value) = match item.split_once('=') {
                Some((k, v)) => {
                    let k = k.trim().to_ascii_uppercase();
                    if k.is_empty() || !k.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                        return Err(parse_err(line, format!("malformed header key `{k}`")));
                    }
                    current = Some(k.clone());
                    (k, v.trim())
                }
                None => match &current {
                    Some(k) => (k.clone(), item),
                    None => return Err(parse_err(line, format!("unexpected token `{item}`"))),
                },
            };
            if value.is_empty() {
                continue;
            }
            match key.as_str() {
                "NORB" => norb = Some(parse_int(value, line)?),
                "NELEC" => nelec = Some(parse_int(value, line)?),
                "MS2" => ms2 = parse_int(value, line)?,
                "ORBSYM" => orbsym.push(parse_int(value, line)?),
                "ISYM" => isym = parse_int(value, line)?,
                _ => {}
            }
        }
    }
    let norb = norb.ok_or_else(|| parse_err(first + 1, "header lacks NORB"))?;
    let nelec = nelec.ok_or_else(|| parse_err(first + 1, "header lacks NELEC"))?;
    if norb <= 0 {
        return Err(parse_err(first + 1, "NORB must be positive"));
    }
    if nelec < 0 {
        return Err(parse_err(first + 1, "NELEC must be non-negative"));
    }
    Ok((
        FcidumpHeader {
            norb: norb as usize,
            nelec: nelec as usize,
            ms2,
            orbsym,
            isym,
        },
        body_start,
    ))
}

/// Parses FCIDUMP text into spin-orbital integrals.
///
/// Body lines are `value i j k l` with 1-based spatial indices in chemists'
/// notation; `0 0 0 0` carries the nuclear repulsion, `i j 0 0` the core
/// Hamiltonian and `i 0 0 0` an orbital energy. Symmetry labels are read but
/// not used.
///
/// ```
/// let text = "&FCI NORB=1,NELEC=2,MS2=0,\n ORBSYM=1,\n ISYM=1\n&END\n 0.5 0 0 0 0\n";
/// let err = mbgf::model_io::parse_fcidump(text).unwrap_err();
/// assert!(err.to_string().contains("electron count"));
/// ```
pub fn parse_fcidump(text: &str) -> Result<IntegralSet> {
    let (sp, header) = parse_fcidump_spatial(text)?;
    IntegralSet::from_spatial(&sp, header.nelec)
}

/// Parses FCIDUMP text without spin expansion.
pub fn parse_fcidump_spatial(text: &str) -> Result<(SpatialIntegrals, FcidumpHeader)> {
    let lines: Vec<&str> = text.lines().collect();
    let (header, body_start) = parse_header(&lines)?;
    let n = header.norb;
    if header.ms2.rem_euclid(2) as usize != header.nelec % 2 {
        return Err(Error::Validation(format!(
            "MS2={} is inconsistent with NELEC={}",
            header.ms2, header.nelec
        )));
    }
    let mut sp = SpatialIntegrals::zeros(n);
    let mut eps = vec![None; n];
    for (k, raw) in lines.iter().enumerate().skip(body_start) {
        let line = k + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 5 {
            return Err(parse_err(
                line,
                format!("expected `value i j k l`, found {} fields", toks.len()),
            ));
        }
        let value = parse_float(toks[0], line)?;
        let mut idx = [0usize; 4];
        for (slot, tok) in idx.iter_mut().zip(&toks[1..]) {
            let v = parse_int(tok, line)?;
            if v < 0 || v as usize > n {
                return Err(Error::Validation(format!(
                    "line {line}: orbital index {v} outside 0..={n}"
                )));
            }
            *slot = v as usize;
        }
        match idx {
            [0, 0, 0, 0] => sp.e_nuc = value,
            [i, 0, 0, 0] => eps[i - 1] = Some(value),
            [i, j, 0, 0] if i > 0 && j > 0 => sp.set_h(i - 1, j - 1, value),
            [i, j, k, l] if i > 0 && j > 0 && k > 0 && l > 0 => {
                sp.set_eri(i - 1, j - 1, k - 1, l - 1, value)
            }
            _ => {
                return Err(Error::Validation(format!(
                    "line {line}: index pattern {idx:?} is not a recognized integral class"
                )))
            }
        }
    }
    if eps.iter().all(Option::is_some) {
        sp.eps = Some(eps.into_iter().map(Option::unwrap).collect());
    } else if eps.iter().any(Option::is_some) {
        return Err(Error::Validation(
            "orbital energies are given for some orbitals only".into(),
        ));
    }
    Ok((sp, header))
}

/// Writes integrals in FCIDUMP format.
///
/// Integrals are taken from the α/β-restricted spatial form, every value is
/// printed with 17 significant digits, and orbital energies are included so
/// that a re-parse reproduces the input exactly.
pub fn write_fcidump(ints: &IntegralSet) -> String {
    let sp = ints.to_spatial();
    let n = sp.norb;
    let mut out = String::new();
    let ms2 = ints.n_e % 2;
    let _ = writeln!(out, "&FCI NORB={},NELEC={},MS2={},", n, ints.n_e, ms2);
    let sym: Vec<String> = (0..n).map(|_| "1".to_string()).collect();
    let _ = writeln!(out, " ORBSYM={},", sym.join(","));
    let _ = writeln!(out, " ISYM=1,");
    let _ = writeln!(out, "&END");
    for i in 0..n {
        for j in 0..=i {
            for k in 0..n {
                for l in 0..=k {
                    if i * (i + 1) / 2 + j < k * (k + 1) / 2 + l {
                        continue;
                    }
                    let v = sp.eri(i, j, k, l);
                    if v != 0.0 {
                        let _ = writeln!(out, "{:>25.16e} {:>3} {:>3} {:>3} {:>3}", v, i + 1, j + 1, k + 1, l + 1);
                    }
                }
            }
        }
    }
    for i in 0..n {
        for j in 0..=i {
            let v = sp.h[(i, j)];
            if v != 0.0 {
                let _ = writeln!(out, "{:>25.16e} {:>3} {:>3} {:>3} {:>3}", v, i + 1, j + 1, 0, 0);
            }
        }
    }
    if let Some(eps) = &sp.eps {
        for (i, e) in eps.iter().enumerate() {
            let _ = writeln!(out, "{:>25.16e} {:>3} {:>3} {:>3} {:>3}", e, i + 1, 0, 0, 0);
        }
    }
    let _ = writeln!(out, "{:>25.16e} {:>3} {:>3} {:>3} {:>3}", sp.e_nuc, 0, 0, 0, 0);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIMER: &str = "&FCI NORB=2,NELEC=2,MS2=0 /\n\
        0.5 1 1 1 1\n0.5 2 2 2 2\n0.5 1 1 2 2\n0.5 1 2 1 2\n\
        -1.0 1 1 0 0\n1.0 2 2 0 0\n0.25 0 0 0 0\n";

    #[test]
    fn smallest_file() {
        let s = parse_fcidump(DIMER).unwrap();
        assert_eq!(s.m, 4);
        assert_eq!(s.n_e, 2);
        assert_eq!(s.e_nuc, 0.25);
    }

    #[test]
    fn nuclear_line() {
        let text = "&FCI NORB=1,NELEC=1,MS2=1 /\n0.5 0 0 0 0\n";
        let (sp, _) = parse_fcidump_spatial(text).unwrap();
        assert_eq!(sp.e_nuc, 0.5);
    }

    #[test]
    fn fortran_exponent_and_multiline_header() {
        let text = "&FCI NORB=2,\n NELEC=2,MS2=0,\n ORBSYM=1,1,\n ISYM=1,\n&END\n 1.0D-01 1 1 1 1\n";
        let (sp, h) = parse_fcidump_spatial(text).unwrap();
        assert_eq!(h.orbsym, vec![1, 1]);
        assert_eq!(sp.eri(0, 0, 0, 0), 0.1);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_header = "NORB=2\n";
        assert!(matches!(parse_fcidump(bad_header), Err(Error::Parse { line: 1, .. })));
        let unterminated = "&FCI NORB=2,NELEC=2\n 1.0 1 1 1 1\n";
        assert!(matches!(parse_fcidump(unterminated), Err(Error::Parse { .. })));
        let nonnum = "&FCI NORB=2,NELEC=2,MS2=0 /\n0.5 1 1 1 1\nabc 1 1 0 0\n";
        assert!(matches!(parse_fcidump(nonnum), Err(Error::Parse { line: 3, .. })));
        let range = "&FCI NORB=2,NELEC=2,MS2=0 /\n0.5 3 1 1 1\n";
        assert!(matches!(parse_fcidump(range), Err(Error::Validation(_))));
        let short = "&FCI NORB=2,NELEC=2,MS2=0 /\n0.5 1 1 1\n";
        assert!(matches!(parse_fcidump(short), Err(Error::Parse { line: 2, .. })));
        let badkey = "&FCI NORB=2,NE LEC=2 /\n";
        assert!(matches!(parse_fcidump(badkey), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn eps_from_file_win() {
        let text = format!("{DIMER}-7.0 1 0 0 0\n7.0 2 0 0 0\n");
        let s = parse_fcidump(&text).unwrap();
        assert_eq!(s.eps, vec![-7.0, -7.0, 7.0, 7.0]);
    }

    #[test]
    fn eps_default_to_fock_diagonal() {
        let s = parse_fcidump(DIMER).unwrap();
        let f = s.fock_diagonal();
        assert_eq!(s.eps, f);
        // (11|11) = 0.5 from the doubly occupied orbital.
        assert!((s.eps[0] - (-1.0 + 0.5)).abs() < 1e-15);
    }
}
